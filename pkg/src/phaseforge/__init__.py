"""
Phaseforge core: clean-architecture layout.

- domain: entities (WorkflowModel, SurgeryRecord), network specs, configs, metrics.
- application: numerics (layers, models, BPTT, optimizers), training pipelines,
  evaluation, the cross-validation ExperimentService, ports and DTOs.
- infrastructure: adapters (JSON-lines datasets, checkpoint files, CSV logs, reports,
  settings).
"""

from phaseforge.application import (
    ExperimentService,
    ProtocolConfig,
    ResultsTable,
    StageError,
    generate_dataset,
)
from phaseforge.domain import (
    ArchSpec,
    ParamStore,
    SurgeryRecord,
    TrainConfig,
    Variant,
    WorkflowModel,
)
from phaseforge.infrastructure import (
    ConfigError,
    ExperimentSettings,
    FileCheckpointRepository,
    JsonlDatasetRepository,
    load_settings,
)

__all__ = [
    "ArchSpec",
    "ConfigError",
    "ExperimentService",
    "ExperimentSettings",
    "FileCheckpointRepository",
    "JsonlDatasetRepository",
    "ParamStore",
    "ProtocolConfig",
    "ResultsTable",
    "StageError",
    "SurgeryRecord",
    "TrainConfig",
    "Variant",
    "WorkflowModel",
    "generate_dataset",
    "load_settings",
]
