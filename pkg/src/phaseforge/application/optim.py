"""SGD with momentum and Adam over ParamStores, plus gradient accumulation.

SGD uses the Caffe convention: v ← μ·v − lr·(g + λ·w); w ← w + v. The L2 term is
applied to weight matrices (``*.W``, ``lstm.Wx``, ``lstm.Wh``), not to biases. Frozen
parameters are left untouched and keep no optimizer buffers.
"""

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from phaseforge.application.layers import Grads
from phaseforge.domain import OptimizerKind, ParamStore, TrainConfig


def is_weight(name: str) -> bool:
    return not name.endswith(".b")


def lr_multipliers(params: ParamStore, cfg: TrainConfig) -> dict[str, float]:
    """cfg.lr_multiplier_random_layers for freshly initialized layers of a transferred model.

    A model with no transferred parameter trains every layer at the base rate.
    """
    transferred = set(params.names) - params.random_init
    if not transferred:
        return {name: 1.0 for name in params.names}
    return {
        name: cfg.lr_multiplier_random_layers if name in params.random_init else 1.0
        for name in params.names
    }


@dataclass
class OptimizerState:
    """Mutable optimizer buffers; owned by the single training thread."""

    kind: OptimizerKind
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0

    @classmethod
    def for_config(cls, cfg: TrainConfig) -> "OptimizerState":
        return cls(kind=cfg.optimizer)


def _check_shapes(params: ParamStore, grads: Mapping[str, np.ndarray], names) -> None:
    for name in names:
        if name not in grads:
            raise ValueError(f"Missing gradient for parameter {name}.")
        if grads[name].shape != params[name].shape:
            raise ValueError(
                f"Gradient {name} has shape {grads[name].shape}, expected {params[name].shape}."
            )


def _trainable(params: ParamStore, frozen: frozenset[str]) -> list[str]:
    unknown = set(frozen) - set(params.names)
    if unknown:
        raise ValueError(f"Frozen set names unknown parameters {sorted(unknown)}.")
    return [n for n in params.names if n not in frozen]


def sgd_update(
    params: ParamStore,
    grads: Mapping[str, np.ndarray],
    cfg: TrainConfig,
    iteration: int,
    state: OptimizerState,
    *,
    frozen: frozenset[str] = frozenset(),
    multipliers: Mapping[str, float] | None = None,
) -> ParamStore:
    names = _trainable(params, frozen)
    _check_shapes(params, grads, names)
    base_lr = cfg.learning_rate(iteration)
    updated = {}
    for name in names:
        w = params[name]
        g = grads[name] + cfg.weight_decay * w if is_weight(name) else grads[name]
        lr = base_lr * (1.0 if multipliers is None else multipliers.get(name, 1.0))
        v = state.velocity.get(name)
        v = -lr * g if v is None else cfg.momentum * v - lr * g
        state.velocity[name] = v
        updated[name] = w + v
    state.steps += 1
    return params.replace_params(updated, iteration=params.iteration + 1)


def adam_update(
    params: ParamStore,
    grads: Mapping[str, np.ndarray],
    cfg: TrainConfig,
    iteration: int,
    state: OptimizerState,
    *,
    frozen: frozenset[str] = frozenset(),
    multipliers: Mapping[str, float] | None = None,
) -> ParamStore:
    """Bias-corrected Adam; moments persist across learning-rate decay."""
    names = _trainable(params, frozen)
    _check_shapes(params, grads, names)
    base_lr = cfg.learning_rate(iteration)
    beta1, beta2 = cfg.adam_beta1, cfg.adam_beta2
    state.steps += 1
    t = state.steps
    updated = {}
    for name in names:
        w = params[name]
        g = grads[name] + cfg.weight_decay * w if is_weight(name) else grads[name]
        m = state.first_moment.get(name, np.zeros_like(w))
        v = state.second_moment.get(name, np.zeros_like(w))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.first_moment[name], state.second_moment[name] = m, v
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        lr = base_lr * (1.0 if multipliers is None else multipliers.get(name, 1.0))
        updated[name] = w - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon)
    return params.replace_params(updated, iteration=params.iteration + 1)


def optimizer_step(
    params: ParamStore,
    grads: Mapping[str, np.ndarray],
    cfg: TrainConfig,
    iteration: int,
    state: OptimizerState,
    *,
    frozen: frozenset[str] = frozenset(),
    multipliers: Mapping[str, float] | None = None,
) -> ParamStore:
    update = adam_update if cfg.optimizer is OptimizerKind.ADAM else sgd_update
    return update(
        params, grads, cfg, iteration, state, frozen=frozen, multipliers=multipliers
    )


class GradAccumulator:
    """Sums gradients of several forward passes before one update."""

    def __init__(self, params: ParamStore, max_passes: int | None = None) -> None:
        self._template = params
        self._max_passes = max_passes
        self._grads: Grads = params.zeros_like()
        self._passes = 0

    @property
    def passes(self) -> int:
        return self._passes

    @property
    def grads(self) -> Grads:
        return self._grads

    def add(self, grads: Mapping[str, np.ndarray]) -> None:
        if self._max_passes is not None and self._passes >= self._max_passes:
            raise ValueError(
                f"GradAccumulator already holds {self._passes} of {self._max_passes} passes."
            )
        for name, g in grads.items():
            if g.shape != self._grads[name].shape:
                raise ValueError(f"Gradient {name} has shape {g.shape}.")
            self._grads[name] += g
        self._passes += 1

    def reset(self) -> None:
        self._grads = self._template.zeros_like()
        self._passes = 0
