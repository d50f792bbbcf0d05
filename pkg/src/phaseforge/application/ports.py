"""Application ports (interfaces). Implemented by infrastructure adapters."""

from typing import Protocol

from phaseforge.domain import ParamStore, SurgeryRecord, WorkflowModel


class DatasetRepository(Protocol):
    """Stores and loads synthetic surgery records."""

    def save(self, records: list[SurgeryRecord], model: WorkflowModel, seed: int) -> None:
        """Persist records together with the generator settings that produced them."""
        ...

    def load_all(self) -> list[SurgeryRecord]:
        """Return every record in manifest order."""
        ...

    def ids(self) -> list[str]:
        """Return video ids in manifest order."""
        ...


class CheckpointRepository(Protocol):
    """Persists ParamStores under '<stage>-<iteration>' keys."""

    def save(self, params: ParamStore, stage: str | None = None) -> str:
        """Store params; returns the checkpoint key."""
        ...

    def load(self, key: str) -> ParamStore:
        """Return the stored params. Raises KeyError if absent."""
        ...

    def keys(self) -> list[str]:
        """Return all stored keys in insertion order."""
        ...


class TrainingLog(Protocol):
    """Machine-readable per-update and per-epoch training records."""

    def log_update(
        self, stage: str, iteration: int, loss: float, lr: float, wall_time: float
    ) -> None:
        """Record one optimizer update."""
        ...

    def log_validation(
        self, stage: str, epoch: int, iteration: int, accuracy: float, loss: float
    ) -> None:
        """Record one validation pass."""
        ...
