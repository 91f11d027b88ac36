"""
JSON-lines manifest store.

A manifest is the dataset's single source of truth: one DatasetRecord per
line, rewritten atomically on every commit so an interrupted run never
leaves a truncated file.
"""

import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Sequence, Union

import structlog
from pydantic import ValidationError

from pqcexpr.core.errors import DataError
from pqcexpr.models.records import DatasetRecord

logger = structlog.get_logger()

MANIFEST_NAME = "manifest.jsonl"
META_NAME = "manifest.meta.json"


def read_manifest(path: Union[str, Path]) -> list[DatasetRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    records = []
    seen = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = DatasetRecord.model_validate_json(line)
        except ValidationError as e:
            raise DataError(f"corrupt manifest {path} line {lineno}: {e.errors()[0]['msg']}") from e
        if record.circuit_id in seen:
            raise DataError(f"duplicate circuit_id {record.circuit_id!r} in {path} line {lineno}")
        seen.add(record.circuit_id)
        records.append(record)
    return records


def write_manifest(path: Union[str, Path], records: Sequence[DatasetRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            for record in records:
                f.write(record.to_line() + "\n")
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def meta_path(manifest_path: Union[str, Path]) -> Path:
    return Path(manifest_path).with_name(META_NAME)


def write_manifest_meta(manifest_path: Union[str, Path], meta: dict[str, Any]) -> Path:
    """Write the set-level metadata document beside a manifest."""
    path = meta_path(manifest_path)
    path.write_text(json.dumps(meta, indent=2) + "\n")
    return path


def read_manifest_meta(manifest_path: Union[str, Path]) -> dict[str, Any]:
    path = meta_path(manifest_path)
    if not path.exists():
        raise DataError(f"manifest metadata not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"corrupt manifest metadata {path}: {e.msg} at line {e.lineno}") from e


class ManifestSession:
    """In-memory view of a manifest with explicit commits."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.records = read_manifest(self.path)

    def commit(self) -> None:
        write_manifest(self.path, self.records)
        logger.debug("Manifest committed", path=str(self.path), records=len(self.records))


@contextmanager
def manifest_scope(path: Union[str, Path]) -> Iterator[ManifestSession]:
    """Open a manifest, commit on success, keep the last commit on failure."""
    session = ManifestSession(path)
    try:
        yield session
        session.commit()
    except Exception:
        logger.warning("Manifest session aborted; last commit kept", path=str(path))
        raise
