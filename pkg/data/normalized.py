"""
Line-oriented interchange format for prepared datasets.

    # skeleton-augment normalized dataset
    version=1<TAB>classes=K<TAB>joints=J<TAB>length=T<TAB>count=N<TAB>name="..."
    label<TAB>subject<TAB>original_length<TAB>frames<TAB>"key"<TAB>"source"<TAB>v v v ...
    ...
    end<TAB>count=N

Floats are written with repr(), which round-trips float64 exactly.
"""

import json
import os
from typing import Dict

import numpy as np

from data.skeleton import LabeledDataset, SkeletonSequence
from errors import ContractViolation, DataLoadError, ParseError

FORMAT_VERSION = 1
MAGIC_LINE = "# skeleton-augment normalized dataset"


def is_normalized_file(path: str) -> bool:
    if not os.path.isfile(path):
        return False
    with open(path, "r", encoding="utf-8", errors="replace") as handle:
        return handle.readline().rstrip("\n") == MAGIC_LINE


def export_normalized(dataset: LabeledDataset, path: str) -> None:
    """Write dataset to path in the normalized format."""
    header = {
        "version": str(FORMAT_VERSION),
        "classes": str(dataset.num_classes),
        "joints": str(dataset.num_joints),
        "length": str(dataset.length) if dataset.length is not None else "-",
        "count": str(len(dataset)),
        "name": json.dumps(dataset.name),
    }
    tmp_path = f"{path}.partial"
    with open(tmp_path, "w", encoding="utf-8") as handle:
        handle.write(MAGIC_LINE + "\n")
        handle.write("\t".join(f"{k}={v}" for k, v in header.items()) + "\n")
        for sample in dataset:
            values = " ".join(repr(v) for v in sample.frames.reshape(-1).tolist())
            handle.write("\t".join([
                str(sample.label),
                str(sample.subject),
                str(sample.original_length),
                str(sample.length),
                json.dumps(sample.key),
                json.dumps(sample.source),
                values,
            ]) + "\n")
        handle.write(f"end\tcount={len(dataset)}\n")
    os.replace(tmp_path, path)


def _parse_header(path: str, line: str) -> Dict[str, str]:
    try:
        return dict(field.split("=", 1) for field in line.rstrip("\n").split("\t"))
    except ValueError as e:
        raise ParseError(path, 2, f"malformed header ({e})") from e


def import_normalized(path: str) -> LabeledDataset:
    """
    Read a dataset written by export_normalized.

    Raises:
        DataLoadError: On a missing file, wrong version or truncation
        ParseError: On a malformed record
    """
    if not os.path.isfile(path):
        raise DataLoadError(f"Normalized dataset not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.readlines()
    if not lines or lines[0].rstrip("\n") != MAGIC_LINE:
        raise DataLoadError(f"{path} is not a normalized dataset file")
    if len(lines) < 2:
        raise DataLoadError(f"{path} is truncated (no header)")
    header = _parse_header(path, lines[1])
    try:
        version = int(header["version"])
        num_classes = int(header["classes"])
        num_joints = int(header["joints"])
        count = int(header["count"])
        name = json.loads(header["name"])
        length = None if header["length"] == "-" else int(header["length"])
    except (KeyError, ValueError) as e:
        raise ParseError(path, 2, f"malformed header ({e})") from e
    if version != FORMAT_VERSION:
        raise DataLoadError(f"{path} has format version {version}, expected {FORMAT_VERSION}")

    records = lines[2:]
    if not records or records[-1].rstrip("\n") != f"end\tcount={count}":
        raise DataLoadError(f"{path} is truncated (missing end marker)")
    records = records[:-1]
    if len(records) != count:
        raise DataLoadError(f"{path} declares {count} samples but holds {len(records)}")

    width = num_joints * 3
    samples = []
    for offset, record in enumerate(records):
        line_no = offset + 3
        fields = record.rstrip("\n").split("\t")
        if len(fields) != 7:
            raise ParseError(path, line_no, f"expected 7 fields, found {len(fields)}")
        try:
            label, subject, original_length, frames_count = (int(v) for v in fields[:4])
            key, source = json.loads(fields[4]), json.loads(fields[5])
            values = np.array([float(v) for v in fields[6].split()], dtype=np.float64)
        except ValueError as e:
            raise ParseError(path, line_no, f"malformed record ({e})") from e
        if values.size != frames_count * width:
            raise ParseError(path, line_no, f"expected {frames_count * width} values, found {values.size}")
        try:
            samples.append(SkeletonSequence(
                frames=values.reshape(frames_count, width),
                label=label,
                subject=subject,
                source=source,
                original_length=original_length,
                key=key,
            ))
        except ContractViolation as e:
            raise ParseError(path, line_no, str(e)) from e
    try:
        return LabeledDataset(
            samples=tuple(samples), num_classes=num_classes, num_joints=num_joints, name=name, length=length,
        )
    except ContractViolation as e:
        raise DataLoadError(f"{path} is inconsistent: {e}") from e
