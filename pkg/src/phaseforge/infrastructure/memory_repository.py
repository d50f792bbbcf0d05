"""In-memory implementations of the application ports (no files). Used by tests."""

import threading

from phaseforge.domain import ParamStore, SurgeryRecord, WorkflowModel
from phaseforge.infrastructure.checkpoints import checkpoint_key


class InMemoryDatasetRepository:
    """Holds records in memory. Order preserved by insertion."""

    def __init__(self) -> None:
        self._records: list[SurgeryRecord] = []
        self.model: WorkflowModel | None = None
        self.seed: int | None = None

    def save(self, records: list[SurgeryRecord], model: WorkflowModel, seed: int) -> None:
        ids = [r.video_id for r in records]
        if len(set(ids)) != len(ids):
            raise ValueError("Dataset video ids must be unique.")
        self._records = list(records)
        self.model = model
        self.seed = seed

    def load_all(self) -> list[SurgeryRecord]:
        return list(self._records)

    def ids(self) -> list[str]:
        return [r.video_id for r in self._records]


class InMemoryCheckpointRepository:
    """Keeps ParamStores by key; a later save under the same key replaces the earlier one."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._by_key: dict[str, ParamStore] = {}

    def save(self, params: ParamStore, stage: str | None = None) -> str:
        key = checkpoint_key(params, stage)
        with self._lock:
            self._by_key[key] = params
        return key

    def load(self, key: str) -> ParamStore:
        with self._lock:
            return self._by_key[key]

    def keys(self) -> list[str]:
        with self._lock:
            return list(self._by_key)


class InMemoryTrainingLog:
    """Collects (stage, iteration, loss, lr) updates and (stage, epoch, iteration, accuracy, loss) validations."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.updates: list[tuple[str, int, float, float]] = []
        self.validations: list[tuple[str, int, int, float, float]] = []

    def log_update(
        self, stage: str, iteration: int, loss: float, lr: float, wall_time: float
    ) -> None:
        with self._lock:
            self.updates.append((stage, iteration, loss, lr))

    def log_validation(
        self, stage: str, epoch: int, iteration: int, accuracy: float, loss: float
    ) -> None:
        with self._lock:
            self.validations.append((stage, epoch, iteration, accuracy, loss))

    def stages(self) -> list[str]:
        seen: dict[str, None] = {}
        for stage, *_ in self.updates:
            seen.setdefault(stage)
        return list(seen)
