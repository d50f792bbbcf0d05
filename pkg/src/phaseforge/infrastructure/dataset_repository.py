"""JSON-lines implementation of DatasetRepository.

``manifest.json`` lists the video ids in order with fps, feature_dim, num_phases and
the generator settings; ``<video_id>.jsonl`` holds one {"t", "phase", "features"}
object per frame. Floats use Python's shortest round-trip repr, so reloading is exact.
"""

import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from phaseforge.domain import SurgeryRecord, WorkflowModel

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FORMAT = "phaseforge-dataset/1"


def _record_lines(record: SurgeryRecord) -> str:
    labels = record.phase_labels
    frames = record.frames
    return "".join(
        json.dumps({"t": t, "phase": int(labels[t]), "features": frames[t].tolist()}) + "\n"
        for t in range(record.num_frames)
    )


def _parse_record(video_id: str, fps: float, path: Path) -> SurgeryRecord:
    rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]
    for expected, row in enumerate(rows):
        if row["t"] != expected:
            raise ValueError(f"{path.name}: frame {expected} has t={row['t']}.")
    return SurgeryRecord(
        video_id=video_id,
        fps=fps,
        frames=np.array([row["features"] for row in rows], dtype=np.float64),
        phase_labels=np.array([row["phase"] for row in rows], dtype=np.int64),
    )


class JsonlDatasetRepository:
    """Stores a dataset as a manifest plus one JSON-lines file per video under ``root``."""

    def __init__(self, root: Path) -> None:
        self._root = Path(root)

    @property
    def root(self) -> Path:
        return self._root

    def _manifest(self) -> dict:
        path = self._root / MANIFEST
        if not path.exists():
            raise FileNotFoundError(f"No dataset manifest at {path}.")
        manifest = json.loads(path.read_text(encoding="utf-8"))
        if manifest.get("format") != FORMAT:
            raise ValueError(f"{path}: unsupported dataset format {manifest.get('format')!r}.")
        return manifest

    def save(self, records: list[SurgeryRecord], model: WorkflowModel, seed: int) -> None:
        ids = [r.video_id for r in records]
        if len(set(ids)) != len(ids):
            raise ValueError("Dataset video ids must be unique.")
        self._root.mkdir(parents=True, exist_ok=True)
        for record in records:
            (self._root / f"{record.video_id}.jsonl").write_text(
                _record_lines(record), encoding="utf-8"
            )
        manifest = {
            "format": FORMAT,
            "video_ids": ids,
            "fps": model.fps,
            "feature_dim": model.feature_dim,
            "num_phases": model.num_phases,
            "seed": seed,
            "workflow": asdict(model),
        }
        (self._root / MANIFEST).write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        logger.info("Wrote %d records to %s", len(records), self._root)

    def load_all(self) -> list[SurgeryRecord]:
        manifest = self._manifest()
        records = [
            _parse_record(vid, manifest["fps"], self._root / f"{vid}.jsonl")
            for vid in manifest["video_ids"]
        ]
        for record in records:
            if record.feature_dim != manifest["feature_dim"]:
                raise ValueError(
                    f"{record.video_id}: feature_dim {record.feature_dim}, "
                    f"manifest says {manifest['feature_dim']}."
                )
        return records

    def ids(self) -> list[str]:
        return list(self._manifest()["video_ids"])

    def workflow(self) -> WorkflowModel:
        """Generator settings recorded in the manifest."""
        return WorkflowModel(**self._manifest()["workflow"])
