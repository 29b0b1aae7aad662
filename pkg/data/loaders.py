"""
Loaders for the two public skeleton datasets.

SHREC'17 Track layout:
    gesture_{g}/finger_{f}/subject_{s}/essai_{e}/skeletons_world.txt
    train_gestures.txt / test_gestures.txt with rows
        id_gesture id_finger id_subject id_essai label_14 label_28 size

MSR Action3D layout:
    a{AA}_s{SS}_e{EE}_skeleton3D.txt (or _skeleton.txt), rows of
    "x y z confidence", one row per joint, 20 rows per frame.

Every loader either returns a complete LabeledDataset or raises; it never
returns a partially read dataset.
"""

import logging
import os
import re
from typing import Dict, List, Tuple

import numpy as np

import config
from data.skeleton import LabeledDataset, SkeletonSequence
from errors import DataLoadError, ParseError

logger = logging.getLogger(__name__)

SHREC_LISTS = ("train_gestures.txt", "test_gestures.txt")
_MSR_NAME = re.compile(r"^a(\d+)_s(\d+)_e(\d+)_skeleton(?:3D)?\.txt$")


def shrec_key(gesture: int, finger: int, subject: int, essai: int) -> str:
    return f"{gesture}-{finger}-{subject}-{essai}"


def _parse_floats(path: str, line_no: int, line: str, expected: int) -> List[float]:
    tokens = line.split()
    if len(tokens) != expected:
        raise ParseError(path, line_no, f"expected {expected} values, found {len(tokens)}")
    try:
        values = [float(token) for token in tokens]
    except ValueError as e:
        raise ParseError(path, line_no, f"malformed number ({e})") from e
    if not all(np.isfinite(values)):
        raise ParseError(path, line_no, "non-finite coordinate")
    return values


def read_shrec_list(path: str) -> List[Tuple[int, int, int, int, int, int]]:
    """Rows of (gesture, finger, subject, essai, label_14, label_28)."""
    if not os.path.isfile(path):
        raise DataLoadError(f"Missing list file: {path}")
    rows = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            tokens = line.split()
            if len(tokens) < 6:
                raise ParseError(path, line_no, f"expected at least 6 columns, found {len(tokens)}")
            try:
                rows.append(tuple(int(token) for token in tokens[:6]))
            except ValueError as e:
                raise ParseError(path, line_no, f"malformed integer ({e})") from e
    return rows


def _read_shrec_sequence(path: str) -> np.ndarray:
    width = config.SHREC_JOINTS * 3
    frames = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if line.strip():
                frames.append(_parse_floats(path, line_no, line, width))
    if not frames:
        raise DataLoadError(f"Empty skeleton file: {path}")
    return np.array(frames)


def load_shrec(root: str, label_mode: int = 14) -> LabeledDataset:
    """
    Load SHREC'17 Track skeleton sequences listed in the official split files.

    Args:
        root: Dataset root containing the gesture_* tree and both list files
        label_mode: 14 (gesture) or 28 (gesture × finger mode)

    Returns:
        LabeledDataset with unpadded sequences; sample.key identifies the list row

    Raises:
        DataLoadError: If the root, a list file or a sequence file is missing
        ParseError: If a token is malformed or a frame has the wrong width
    """
    if label_mode not in (14, 28):
        raise DataLoadError(f"label_mode must be 14 or 28, got {label_mode}")
    if not os.path.isdir(root):
        raise DataLoadError(f"Dataset root not found: {root}")

    rows = []
    for list_name in SHREC_LISTS:
        rows.extend(read_shrec_list(os.path.join(root, list_name)))

    samples = []
    for gesture, finger, subject, essai, label_14, label_28 in rows:
        path = os.path.join(
            root, f"gesture_{gesture}", f"finger_{finger}", f"subject_{subject}",
            f"essai_{essai}", "skeletons_world.txt",
        )
        if not os.path.isfile(path):
            raise DataLoadError(f"Missing skeleton file: {path}")
        label = (label_14 if label_mode == 14 else label_28) - 1
        samples.append(SkeletonSequence(
            frames=_read_shrec_sequence(path),
            label=label,
            subject=subject,
            source=path,
            key=shrec_key(gesture, finger, subject, essai),
        ))

    logger.info("✓ Loaded %d SHREC'17 sequences from %s", len(samples), root)
    return LabeledDataset(
        samples=tuple(samples),
        num_classes=label_mode,
        num_joints=config.SHREC_JOINTS,
        name=f"shrec17-{label_mode}",
    )


def _read_msr_sequence(path: str) -> np.ndarray:
    joints = config.MSR_JOINTS
    rows = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if line.strip():
                rows.append(_parse_floats(path, line_no, line, 4))
    if not rows:
        raise DataLoadError(f"Empty skeleton file: {path}")
    if len(rows) % joints != 0:
        raise ParseError(
            path, len(rows), f"{len(rows)} joint rows is not a whole number of {joints}-joint frames"
        )
    coordinates = np.array(rows)[:, :3]
    return coordinates.reshape(len(rows) // joints, joints * 3)


def load_msr(root: str) -> LabeledDataset:
    """
    Load MSR Action3D skeleton files; the confidence column is dropped.

    Raises:
        DataLoadError: If the root is missing or holds no skeleton files
        ParseError: If a row is malformed or a frame has the wrong joint count
    """
    if not os.path.isdir(root):
        raise DataLoadError(f"Dataset root not found: {root}")

    found: Dict[Tuple[int, int, int], str] = {}
    for name in sorted(os.listdir(root)):
        match = _MSR_NAME.match(name)
        if match:
            found.setdefault(tuple(int(group) for group in match.groups()), name)
    if not found:
        raise DataLoadError(f"No MSR Action3D skeleton files in {root}")

    samples = []
    for (action, subject, trial), name in sorted(found.items()):
        path = os.path.join(root, name)
        samples.append(SkeletonSequence(
            frames=_read_msr_sequence(path),
            label=action - 1,
            subject=subject,
            source=path,
            key=f"a{action:02d}_s{subject:02d}_e{trial:02d}",
        ))

    logger.info("✓ Loaded %d MSR Action3D sequences from %s", len(samples), root)
    return LabeledDataset(
        samples=tuple(samples),
        num_classes=20,
        num_joints=config.MSR_JOINTS,
        name="msr3d",
    )
