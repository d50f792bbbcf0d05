"""CSV implementation of TrainingLog: one file per stage under ``<out>/logs``."""

import csv
import math
import threading
from pathlib import Path

UPDATE_COLUMNS = ("iter", "loss", "lr", "wall_time")
VALIDATION_COLUMNS = ("epoch", "iter", "accuracy", "loss")


def _cell(value: float) -> str:
    return "" if value is None or (isinstance(value, float) and math.isnan(value)) else repr(value)


class CsvTrainingLog:
    """Appends '<stage>.csv' (per update) and '<stage>-validation.csv' (per epoch) rows."""

    def __init__(self, root: Path) -> None:
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._started: set[Path] = set()

    def path_for(self, stage: str, *, validation: bool = False) -> Path:
        return self._root / (f"{stage}-validation.csv" if validation else f"{stage}.csv")

    def _append(self, path: Path, columns: tuple[str, ...], row: list) -> None:
        with self._lock:
            fresh = path not in self._started
            self._started.add(path)
            with path.open("w" if fresh else "a", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                if fresh:
                    writer.writerow(columns)
                writer.writerow(row)

    def log_update(
        self, stage: str, iteration: int, loss: float, lr: float, wall_time: float
    ) -> None:
        self._append(
            self.path_for(stage),
            UPDATE_COLUMNS,
            [iteration, _cell(loss), _cell(lr), f"{wall_time:.6f}"],
        )

    def log_validation(
        self, stage: str, epoch: int, iteration: int, accuracy: float, loss: float
    ) -> None:
        self._append(
            self.path_for(stage, validation=True),
            VALIDATION_COLUMNS,
            [epoch, iteration, _cell(accuracy), _cell(loss)],
        )
