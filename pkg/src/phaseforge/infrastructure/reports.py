"""Result documents: pydantic schema, JSON/CSV emission and read-back.

A sweep is stored as a ``ResultsDocument`` (rows, subset/fold summary, deltas, trend)
with provenance: the hash of the resolved settings and the root seed every cell seed
derives from. ``ResultsDocument.model_json_schema()`` is the shipped schema.
"""

import csv
import logging
from collections.abc import Sequence
from dataclasses import asdict, fields
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from phaseforge.application.dto import (
    DeltaRow,
    ResultsTable,
    SummaryRow,
    SweepRow,
)
from phaseforge.domain import AggregateReport, MetricsReport

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Provenance(_Model):
    config_hash: str
    seed: int
    seed_derivation: str = "sha256('<root>/<path>/...')[:8] & (2**63 - 1)"
    producer: str = "phaseforge"


class SweepRowModel(_Model):
    kind: str
    fold_id: int
    pipeline: str
    mode: str
    fraction: float
    subset: int
    n_labeled: int
    n_pretrain: int
    accuracy: float
    f1: float
    precision: float
    recall: float


class SummaryRowModel(_Model):
    mode: str
    fraction: float
    n_pretrain: int
    accuracy_mean: float
    accuracy_std: float
    f1_mean: float
    f1_std: float


class DeltaRowModel(_Model):
    mode: str
    fraction: float
    reference_fraction: float
    accuracy_delta: float
    f1_delta: float


class ResultsDocument(_Model):
    """A sweep results table as written to disk."""

    schema_version: Literal[1] = SCHEMA_VERSION
    kind: Literal["annotation", "ablation", "pretrain-amount"]
    provenance: Provenance
    rows: list[SweepRowModel]
    summary: list[SummaryRowModel]
    deltas: list[DeltaRowModel] = Field(default_factory=list)
    trend: float | None = None

    @classmethod
    def from_table(cls, table: ResultsTable, *, config_hash: str, seed: int) -> "ResultsDocument":
        return cls(
            kind=table.kind,
            provenance=Provenance(config_hash=config_hash, seed=seed),
            rows=[SweepRowModel(**asdict(r)) for r in table.rows],
            summary=[SummaryRowModel(**asdict(s)) for s in table.summary],
            deltas=[DeltaRowModel(**asdict(d)) for d in table.deltas],
            trend=table.trend,
        )

    def to_table(self) -> ResultsTable:
        return ResultsTable(
            kind=self.kind,
            rows=tuple(SweepRow(**r.model_dump()) for r in self.rows),
            summary=tuple(SummaryRow(**s.model_dump()) for s in self.summary),
            deltas=tuple(DeltaRow(**d.model_dump()) for d in self.deltas),
            trend=self.trend,
        )


# --- evaluation documents ---


class SummaryModel(_Model):
    mean: float
    std: float


class VideoMetricsModel(_Model):
    video_id: str
    accuracy: float
    avg_precision: float
    avg_recall: float
    f1: float
    noise: float
    precision: dict[int, float | None]
    recall: dict[int, float | None]
    temporal_distance_first: dict[int, float]
    temporal_distance_closest: dict[int, float]
    missed_phases: list[int]


class EvaluationDocument(_Model):
    """Per-video and aggregate metrics of one checkpoint on held-out videos."""

    schema_version: Literal[1] = SCHEMA_VERSION
    checkpoint: str
    provenance: Provenance
    videos: list[VideoMetricsModel]
    scalars: dict[str, SummaryModel]
    missed_counts: dict[int, int]

    @classmethod
    def from_reports(
        cls,
        checkpoint: str,
        reports: Sequence[MetricsReport],
        summary: AggregateReport,
        *,
        config_hash: str,
        seed: int,
    ) -> "EvaluationDocument":
        return cls(
            checkpoint=checkpoint,
            provenance=Provenance(config_hash=config_hash, seed=seed),
            videos=[
                VideoMetricsModel(
                    video_id=r.video_id,
                    accuracy=r.accuracy,
                    avg_precision=r.avg_precision,
                    avg_recall=r.avg_recall,
                    f1=r.f1,
                    noise=r.noise,
                    precision=r.precision,
                    recall=r.recall,
                    temporal_distance_first=r.temporal_distance_first,
                    temporal_distance_closest=r.temporal_distance_closest,
                    missed_phases=sorted(r.missed_phases),
                )
                for r in reports
            ],
            scalars={
                k: SummaryModel(mean=v.mean, std=v.std) for k, v in summary.scalars.items()
            },
            missed_counts=dict(summary.missed_counts),
        )


# --- emission ---


def _write_csv(path: Path, rows: Sequence, row_type: type) -> None:
    columns = [f.name for f in fields(row_type)]
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            values = (getattr(row, c) for c in columns)
            writer.writerow([repr(v) if isinstance(v, float) else v for v in values])


def emit_report(
    document: ResultsDocument, out_dir: Path, fmt: str = "json", *, stem: str | None = None
) -> list[Path]:
    """Write ``document`` as '<stem>.json', or as '<stem>.csv' plus summary/delta CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or document.kind
    if fmt == "json":
        path = out_dir / f"{stem}.json"
        path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
        written = [path]
    elif fmt == "csv":
        table = document.to_table()
        written = [out_dir / f"{stem}.csv", out_dir / f"{stem}-summary.csv"]
        _write_csv(written[0], table.rows, SweepRow)
        _write_csv(written[1], table.summary, SummaryRow)
        if table.deltas:
            written.append(out_dir / f"{stem}-deltas.csv")
            _write_csv(written[-1], table.deltas, DeltaRow)
    else:
        raise ValueError(f"Unknown report format {fmt!r}; expected 'json' or 'csv'.")
    for path in written:
        logger.info("Wrote %s", path)
    return written


def emit_evaluation(document: EvaluationDocument, out_dir: Path, stem: str = "evaluation") -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{stem}.json"
    path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def read_report(path: Path) -> ResultsDocument:
    """Load and validate a results document written by ``emit_report``."""
    return ResultsDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))


def report_schema() -> dict:
    return ResultsDocument.model_json_schema()
