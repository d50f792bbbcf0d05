"""Result types of training, evaluation and experiment use cases."""

from dataclasses import dataclass, field

from phaseforge.domain import (
    AggregateReport,
    MetricsReport,
    ParamStore,
    Pipeline,
    PretrainMode,
)

# --- training ---


@dataclass(frozen=True)
class ValidationPoint:
    """One validation pass. ``score`` is what selection maximizes (accuracy, or −loss)."""

    epoch: int
    iteration: int
    accuracy: float | None
    loss: float | None
    score: float


@dataclass(frozen=True, eq=False)
class TrainingResult:
    """Outcome of one training stage.

    ``params`` is the selected model: the best validation checkpoint when validation
    data was supplied, else the final one.
    """

    stage: str
    params: ParamStore
    final: ParamStore
    losses: tuple[float, ...]
    validation: tuple[ValidationPoint, ...] = ()
    best_iteration: int | None = None
    checkpoints: tuple[str, ...] = ()

    @property
    def updates(self) -> int:
        return len(self.losses)


# --- evaluation ---


@dataclass(frozen=True)
class RsdEvaluation:
    """Held-out RSD and progress errors; RSD in minutes."""

    n_videos: int
    rsd_mae_min: float
    progress_mae: float
    baseline_rsd_mae_min: float

    @property
    def improvement_over_baseline(self) -> float:
        """Relative MAE reduction vs. the constant-mean-RSD baseline (0.2 = 20% better)."""
        if self.baseline_rsd_mae_min == 0:
            return 0.0
        return 1.0 - self.rsd_mae_min / self.baseline_rsd_mae_min


@dataclass(frozen=True)
class GradcheckResult:
    variant: str
    objective: str
    n_params: int
    max_relative_error: float


# --- experiments ---


@dataclass(frozen=True, eq=False)
class FoldResult:
    """Test-set metrics of one (fold, pipeline, mode, labeled subset) cell."""

    fold_id: int
    pipeline: Pipeline
    mode: PretrainMode
    labeled_ids: tuple[str, ...]
    pretrain_ids: tuple[str, ...]
    per_video: tuple[MetricsReport, ...]
    aggregate: AggregateReport
    arch_tags: dict[str, str] = field(default_factory=dict)
    checkpoints: tuple[str, ...] = ()


@dataclass(frozen=True)
class SweepRow:
    """One cell of a results table."""

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


@dataclass(frozen=True)
class SummaryRow:
    """A sweep point averaged over subsets, then over folds."""

    mode: str
    fraction: float
    n_pretrain: int
    accuracy_mean: float
    accuracy_std: float
    f1_mean: float
    f1_std: float


@dataclass(frozen=True)
class DeltaRow:
    """Accuracy of ``mode`` at ``fraction`` minus the no-pretraining model at ``reference_fraction``."""

    mode: str
    fraction: float
    reference_fraction: float
    accuracy_delta: float
    f1_delta: float


@dataclass(frozen=True)
class ResultsTable:
    kind: str
    rows: tuple[SweepRow, ...]
    summary: tuple[SummaryRow, ...]
    deltas: tuple[DeltaRow, ...] = ()
    trend: float | None = None
