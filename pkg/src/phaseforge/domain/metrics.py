"""Prediction traces and evaluation reports."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class PredictionTrace:
    """Per-frame phase distributions for one video; labels are 1-based row argmaxes."""

    video_id: str
    probabilities: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if probs.ndim != 2 or len(probs) != len(labels):
            raise ValueError("PredictionTrace needs a (T, M) probability array and T labels.")
        if not np.allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ValueError("PredictionTrace probability rows must sum to 1.")
        if not np.array_equal(labels, probs.argmax(axis=1) + 1):
            raise ValueError("PredictionTrace labels must be the row argmax (1-based).")
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class TemporalDistances:
    """
    Boundary distances in seconds per ground-truth phase.
    Phases never predicted carry the video duration as a sentinel and are listed in
    ``missed`` so averages can exclude them.
    """

    first: dict[int, float]
    closest: dict[int, float]
    missed: frozenset[int] = field(default_factory=frozenset)


@dataclass(frozen=True)
class MetricsReport:
    """Metrics of one video. Percentages in [0, 100]; undefined per-phase values are None."""

    video_id: str
    accuracy: float
    precision: dict[int, float | None]
    recall: dict[int, float | None]
    avg_precision: float
    avg_recall: float
    f1: float
    temporal_distance_first: dict[int, float]
    temporal_distance_closest: dict[int, float]
    missed_phases: frozenset[int]
    noise: float

    def __post_init__(self):
        for name in ("accuracy", "avg_precision", "avg_recall", "f1", "noise"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"MetricsReport {name}={value} is not a percentage.")

    def scalars(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "avg_precision": self.avg_precision,
            "avg_recall": self.avg_recall,
            "f1": self.f1,
            "noise": self.noise,
        }


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float


@dataclass(frozen=True)
class AggregateReport:
    """Mean ± std of every scalar metric, plus per-phase means over videos where defined."""

    n_videos: int
    scalars: dict[str, MetricSummary]
    precision: dict[int, MetricSummary]
    recall: dict[int, MetricSummary]
    temporal_distance_first: dict[int, MetricSummary]
    temporal_distance_closest: dict[int, MetricSummary]
    missed_counts: dict[int, int]

    @property
    def accuracy(self) -> float:
        return self.scalars["accuracy"].mean

    @property
    def f1(self) -> float:
        return self.scalars["f1"].mean
