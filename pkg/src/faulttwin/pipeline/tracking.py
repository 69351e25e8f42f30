"""Local content-addressed run storage.

A run lives in ``<root>/runs/<id>/`` with ``record.json``, ``model.json``,
``report.json`` and ``study.jsonl``. The id hashes the record content (minus
timestamps) together with the artifact hashes, so saving identical content
twice lands in the same directory.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..errors import IntegrityError, TamperError
from ..gbdt import GbdtModel

SCHEMA_VERSION = 1
ID_LENGTH = 16
ARTIFACTS = ("model.json", "report.json", "study.jsonl")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class RunRecord:
    config: dict[str, Any]
    dataset_fingerprint: str
    metrics: dict[str, Any] = field(default_factory=dict)
    parent_run_id: str | None = None
    run_id: str | None = None
    artifacts: dict[str, str] = field(default_factory=dict)
    created_at: float | None = None

    def content(self) -> dict:
        """Everything the id is computed from."""
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "dataset_fingerprint": self.dataset_fingerprint,
            "metrics": self.metrics,
            "parent_run_id": self.parent_run_id,
            "artifacts": self.artifacts,
        }

    def compute_id(self) -> str:
        return sha256_bytes(canonical_json(self.content()).encode())[:ID_LENGTH]

    def to_dict(self) -> dict:
        return {**self.content(), "run_id": self.run_id, "created_at": self.created_at}

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(d["config"], d["dataset_fingerprint"], d.get("metrics", {}), d.get("parent_run_id"),
                   d.get("run_id"), d.get("artifacts", {}), d.get("created_at"))


def run_dir(root, run_id: str) -> Path:
    return Path(root) / "runs" / run_id


def save_run(record: RunRecord, model: GbdtModel, root, *, report: dict | None = None,
             study_log: str = "") -> str:
    """Write the run and return its id; an existing identical run is left untouched."""
    blobs = {
        "model.json": model.to_json().encode(),
        "report.json": (json.dumps(report or {}, indent=1, sort_keys=True) + "\n").encode(),
        "study.jsonl": study_log.encode(),
    }
    record.artifacts = {name: sha256_bytes(b) for name, b in blobs.items()}
    record.run_id = record.compute_id()
    path = run_dir(root, record.run_id)
    if (path / "record.json").exists():
        try:
            load_run(record.run_id, root)
            return record.run_id
        except IntegrityError:
            pass  # damaged copy; rewrite it
    path.mkdir(parents=True, exist_ok=True)
    for name, data in blobs.items():
        (path / name).write_bytes(data)
    record.created_at = time.time()
    (path / "record.json").write_text(json.dumps(record.to_dict(), indent=1, sort_keys=True) + "\n",
                                      encoding="utf-8")
    return record.run_id


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except FileNotFoundError:
        raise IntegrityError(f"missing run file {path}") from None


def load_run_dir(path) -> tuple[RunRecord, GbdtModel]:
    path = Path(path)
    try:
        record = RunRecord.from_dict(json.loads(_read(path / "record.json")))
    except (ValueError, KeyError, TypeError) as exc:
        raise IntegrityError(f"corrupt run file {path / 'record.json'}: {exc}") from None
    if record.compute_id() != record.run_id or path.name != record.run_id:
        raise TamperError(f"{path / 'record.json'} does not hash to run id {path.name}")
    for name in ARTIFACTS:
        data = _read(path / name)
        expect = record.artifacts.get(name)
        if expect is None:
            raise IntegrityError(f"{path / 'record.json'} lists no hash for {name}")
        if sha256_bytes(data) != expect:
            raise TamperError(f"{path / name} does not match its recorded hash")
    try:
        model = GbdtModel.from_json((path / "model.json").read_text(encoding="utf-8"))
    except (ValueError, KeyError, TypeError) as exc:
        raise IntegrityError(f"corrupt run file {path / 'model.json'}: {exc}") from None
    return record, model


def load_run(run_id: str, root) -> tuple[RunRecord, GbdtModel]:
    return load_run_dir(run_dir(root, run_id))


def read_artifact(run_id: str, root, name: str) -> bytes:
    if name not in ARTIFACTS:
        raise ValueError(f"unknown artifact {name!r}")
    load_run(run_id, root)
    return (run_dir(root, run_id) / name).read_bytes()
