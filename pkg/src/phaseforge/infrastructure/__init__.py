"""Infrastructure layer: concrete implementations of application ports, settings and reports."""

from phaseforge.infrastructure.checkpoints import (
    FileCheckpointRepository,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
)
from phaseforge.infrastructure.config import (
    ConfigError,
    ExperimentSettings,
    load_settings,
)
from phaseforge.infrastructure.dataset_repository import JsonlDatasetRepository
from phaseforge.infrastructure.memory_repository import (
    InMemoryCheckpointRepository,
    InMemoryDatasetRepository,
    InMemoryTrainingLog,
)
from phaseforge.infrastructure.reports import (
    EvaluationDocument,
    ResultsDocument,
    emit_report,
    read_report,
)
from phaseforge.infrastructure.training_log import CsvTrainingLog

__all__ = [
    "ConfigError",
    "CsvTrainingLog",
    "EvaluationDocument",
    "ExperimentSettings",
    "FileCheckpointRepository",
    "InMemoryCheckpointRepository",
    "InMemoryDatasetRepository",
    "InMemoryTrainingLog",
    "JsonlDatasetRepository",
    "ResultsDocument",
    "decode_checkpoint",
    "emit_report",
    "encode_checkpoint",
    "load_checkpoint",
    "read_report",
]
