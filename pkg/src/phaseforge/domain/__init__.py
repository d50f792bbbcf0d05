"""Domain layer: entities and value objects. No dependencies on outer layers."""

from phaseforge.domain.entities import (
    FramePair,
    PaddedSequence,
    SurgeryRecord,
    WorkflowModel,
)
from phaseforge.domain.experiment import FoldSpec, Pipeline, PretrainMode, SweepSpec
from phaseforge.domain.labels import LABEL_MONITOR, LabelAccessError, LabelAccessMonitor
from phaseforge.domain.metrics import (
    AggregateReport,
    MetricsReport,
    MetricSummary,
    PredictionTrace,
    TemporalDistances,
)
from phaseforge.domain.network import ArchSpec, LstmState, ParamStore, Variant
from phaseforge.domain.training import OptimizerKind, TrainConfig

__all__ = [
    "LABEL_MONITOR",
    "AggregateReport",
    "ArchSpec",
    "FoldSpec",
    "FramePair",
    "LabelAccessError",
    "LabelAccessMonitor",
    "LstmState",
    "MetricSummary",
    "MetricsReport",
    "OptimizerKind",
    "PaddedSequence",
    "ParamStore",
    "Pipeline",
    "PredictionTrace",
    "PretrainMode",
    "SurgeryRecord",
    "SweepSpec",
    "TemporalDistances",
    "TrainConfig",
    "Variant",
    "WorkflowModel",
]
