"""
Run manifests: what a command read, what it wrote, and how long it took.

A manifest is written when the run ends, including runs that fail; the
failing stage and error are recorded instead of being lost.
"""

import hashlib
import json
import logging
import os
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from typing import Any, Dict, Iterator, List, Optional

from pydantic import BaseModel

from config import TOOLKIT_VERSION

logger = logging.getLogger(__name__)


def file_checksum(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class ArtifactRecord(BaseModel):
    path: str
    sha256: str
    deterministic: bool = True


class ErrorRecord(BaseModel):
    stage: Optional[str]
    type: str
    message: str


class RunManifest(BaseModel):
    command: List[str]
    config: Dict[str, Any] = {}
    seeds: List[int] = []
    inputs: Dict[str, str] = {}
    artifacts: List[ArtifactRecord] = []
    timings: Dict[str, float] = {}
    toolkit_version: str = TOOLKIT_VERSION
    started_at: str = ""
    status: str = "running"
    error: Optional[ErrorRecord] = None

    def add_input(self, path: str) -> None:
        if path and os.path.isfile(path):
            self.inputs[path] = file_checksum(path)

    def add_artifact(self, path: str, deterministic: bool = True) -> None:
        self.artifacts = [a for a in self.artifacts if a.path != path]
        self.artifacts.append(ArtifactRecord(path=path, sha256=file_checksum(path), deterministic=deterministic))

    def artifact(self, path: str) -> Optional[ArtifactRecord]:
        return next((a for a in self.artifacts if a.path == path), None)

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Time a named stage; a failure inside is attributed to it."""
        started = time.perf_counter()
        try:
            yield
        except Exception as e:
            if self.error is None:
                self.error = ErrorRecord(stage=name, type=type(e).__name__, message=str(e))
            raise
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - started

    def write(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.model_dump_json(indent=2))


def load_manifest(path: str) -> RunManifest:
    with open(path, "r", encoding="utf-8") as handle:
        return RunManifest(**json.load(handle))


@contextmanager
def recorded_run(path: str, command: List[str], settings: Dict[str, Any]) -> Iterator[RunManifest]:
    """Yield a manifest for the run and write it to path however the run ends."""
    manifest = RunManifest(
        command=list(command),
        config={k: v for k, v in settings.items() if isinstance(v, (str, int, float, bool, list, type(None)))},
        started_at=datetime.now(timezone.utc).isoformat(),
    )
    started = time.perf_counter()
    try:
        yield manifest
        manifest.status = "ok"
    except BaseException as e:
        manifest.status = "failed"
        if manifest.error is None:
            manifest.error = ErrorRecord(stage=None, type=type(e).__name__, message=str(e))
        raise
    finally:
        manifest.timings["total"] = time.perf_counter() - started
        manifest.write(path)
        logger.info("✓ Manifest written to %s (%s)", path, manifest.status)
