"""Cross-validation folds and sweep definitions."""

from dataclasses import dataclass, field
from enum import Enum

DEFAULT_FRACTIONS = (10.0, 20.0, 25.0, 40.0, 50.0, 80.0, 100.0)


class PretrainMode(str, Enum):
    NONE = "none"
    RSD = "rsd"
    TEMPCON = "tempcon"
    RSDNET = "rsdnet"


class Pipeline(str, Enum):
    ENDON2N = "endon2n"
    ENDOLSTM = "endolstm"


@dataclass(frozen=True)
class FoldSpec:
    """One train/validation/test partition. The three id sets are disjoint."""

    fold_id: int
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]

    def __post_init__(self):
        for name in ("train_ids", "val_ids", "test_ids"):
            ids = tuple(getattr(self, name))
            if len(set(ids)) != len(ids):
                raise ValueError(f"FoldSpec {name} contains duplicates.")
            object.__setattr__(self, name, ids)
        train, val, test = set(self.train_ids), set(self.val_ids), set(self.test_ids)
        if train & val or train & test or val & test:
            raise ValueError(f"FoldSpec {self.fold_id}: train/val/test ids overlap.")
        if not self.train_ids or not self.test_ids:
            raise ValueError(f"FoldSpec {self.fold_id}: train and test ids are required.")

    def check_subset_of(self, dataset_ids: set[str]) -> None:
        unknown = set(self.train_ids + self.val_ids + self.test_ids) - dataset_ids
        if unknown:
            raise ValueError(f"FoldSpec {self.fold_id} references unknown ids {sorted(unknown)}.")


@dataclass(frozen=True)
class SweepSpec:
    """
    Annotation-fraction sweep. subsets_per_fraction maps a fraction to the number of
    subsets drawn (default_subsets otherwise); 100% always uses a single subset.
    """

    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    default_subsets: int = 4
    subsets_per_fraction: dict[float, int] = field(default_factory=lambda: {80.0: 2})
    modes: tuple[PretrainMode, ...] = (PretrainMode.NONE, PretrainMode.RSD, PretrainMode.TEMPCON)
    pretrain_amounts: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        object.__setattr__(self, "modes", tuple(PretrainMode(m) for m in self.modes))
        object.__setattr__(
            self,
            "subsets_per_fraction",
            {float(k): int(v) for k, v in self.subsets_per_fraction.items()},
        )
        if not self.fractions or any(not 0 < f <= 100 for f in self.fractions):
            raise ValueError("SweepSpec fractions must lie in (0, 100].")
        if self.default_subsets < 1 or any(v < 1 for v in self.subsets_per_fraction.values()):
            raise ValueError("SweepSpec subset counts must be >= 1.")
        if not self.modes:
            raise ValueError("SweepSpec needs at least one pre-training mode.")
        if any(a < 0 for a in self.pretrain_amounts):
            raise ValueError("SweepSpec pretrain_amounts must be >= 0.")

    def subsets_for(self, fraction: float) -> int:
        if fraction >= 100.0:
            return 1
        return self.subsets_per_fraction.get(float(fraction), self.default_subsets)
