"""Application layer: numerics, training pipelines, ports, and DTOs. Depends only on domain."""

from phaseforge.application.dto import (
    DeltaRow,
    FoldResult,
    GradcheckResult,
    ResultsTable,
    RsdEvaluation,
    SummaryRow,
    SweepRow,
    TrainingResult,
    ValidationPoint,
)
from phaseforge.application.errors import StageError
from phaseforge.application.experiment_service import (
    STAGES,
    ExperimentService,
    ProtocolConfig,
    make_folds,
    split_finetune_pool,
    subsample_annotated,
)
from phaseforge.application.gradcheck import run_gradcheck
from phaseforge.application.ports import (
    CheckpointRepository,
    DatasetRepository,
    TrainingLog,
)
from phaseforge.application.seeding import derive_seed
from phaseforge.application.training import StageContext
from phaseforge.application.workflow import generate_dataset

__all__ = [
    "STAGES",
    "CheckpointRepository",
    "DatasetRepository",
    "DeltaRow",
    "ExperimentService",
    "FoldResult",
    "GradcheckResult",
    "ProtocolConfig",
    "ResultsTable",
    "RsdEvaluation",
    "StageContext",
    "StageError",
    "SummaryRow",
    "SweepRow",
    "TrainingLog",
    "TrainingResult",
    "ValidationPoint",
    "derive_seed",
    "generate_dataset",
    "make_folds",
    "run_gradcheck",
    "split_finetune_pool",
    "subsample_annotated",
]
