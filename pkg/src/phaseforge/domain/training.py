"""Training configuration value objects."""

import math
from dataclasses import dataclass, replace
from enum import Enum


class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimizer choice and schedule for one training stage.

    For sequence stages ``subseq_len`` frames are processed per forward pass and
    ``pad_to`` is the padded video length; one update consumes one video. For frame
    stages ``batch_size`` samples form one update. When ``epochs`` is set, iterations and
    step_size are the reference values and get rescaled by ``resolved_for``.
    """

    optimizer: OptimizerKind = OptimizerKind.SGD
    iterations: int = 1000
    alpha: float = 1e-3
    step_size: int | None = None
    gamma: float = 1.0
    batch_size: int = 50
    subseq_len: int = 50
    pad_to: int | None = None
    weight_decay: float = 5e-4
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    lr_multiplier_random_layers: float = 10.0
    epochs: float | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "optimizer", OptimizerKind(self.optimizer))
        if self.alpha <= 0:
            raise ValueError("TrainConfig alpha must be > 0.")
        if not 0 < self.gamma <= 1:
            raise ValueError("TrainConfig gamma must be in (0, 1].")
        if self.iterations < 0:
            raise ValueError("TrainConfig iterations must be >= 0.")
        if self.step_size is not None and self.step_size < 1:
            raise ValueError("TrainConfig step_size must be >= 1 when set.")
        if self.weight_decay < 0:
            raise ValueError("TrainConfig weight_decay (lambda) must be >= 0.")
        if self.batch_size < 1 or self.subseq_len < 1:
            raise ValueError("TrainConfig batch_size and subseq_len must be >= 1.")
        if self.pad_to is not None and self.pad_to < 1:
            raise ValueError("TrainConfig pad_to must be >= 1 when set.")
        if not 0 <= self.momentum < 1:
            raise ValueError("TrainConfig momentum must be in [0, 1).")
        if self.lr_multiplier_random_layers <= 0:
            raise ValueError("TrainConfig lr_multiplier_random_layers must be > 0.")
        if self.epochs is not None and self.epochs <= 0:
            raise ValueError("TrainConfig epochs must be > 0 when set.")

    @property
    def accumulation_passes(self) -> int | None:
        """Forward passes accumulated per update (e.g. 6000 / 500 = 12)."""
        if self.pad_to is None:
            return None
        return math.ceil(self.pad_to / self.subseq_len)

    def learning_rate(self, iteration: int) -> float:
        """Step decay: alpha * gamma ** floor(iteration / step_size)."""
        if self.step_size is None:
            return self.alpha
        return self.alpha * self.gamma ** (iteration // self.step_size)

    def resolved_for_videos(self, n_videos: int) -> "TrainConfig":
        """One update per video: iterations = epochs × videos, step_size scaled alike."""
        return self._rescaled(self.epochs * n_videos if self.epochs else None)

    def resolved_for_samples(self, n_samples: int) -> "TrainConfig":
        """Mini-batch stages: iterations = ceil(epochs × samples / batch_size)."""
        if not self.epochs:
            return self
        return self._rescaled(math.ceil(self.epochs * n_samples / self.batch_size))

    def _rescaled(self, iterations: float | None) -> "TrainConfig":
        if iterations is None:
            return self
        new_iterations = max(1, int(round(iterations)))
        step = self.step_size
        if step is not None and self.iterations > 0:
            step = max(1, int(round(step * new_iterations / self.iterations)))
        return replace(self, iterations=new_iterations, step_size=step, epochs=None)
