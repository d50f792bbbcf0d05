"""Central finite differences as an independent check of the analytic gradients."""

import logging
from collections.abc import Callable, Iterable
from functools import partial

import numpy as np

from phaseforge.application.bptt import full_bptt_grads, sequence_loss
from phaseforge.application.dto import GradcheckResult
from phaseforge.application.layers import Grads, init_params
from phaseforge.application.models import (
    phase_encoder_loss_and_grads,
    progress_encoder_loss_and_grads,
    sequence_inputs,
    tempcon_loss_and_grads,
)
from phaseforge.application.seeding import derive_seed
from phaseforge.application.workflow import (
    derive_progress_labels,
    generate_surgery,
    sample_frame_pairs,
)
from phaseforge.domain import ArchSpec, ParamStore, Variant, WorkflowModel

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-5
RELATIVE_ERROR_FLOOR = 1e-4


def finite_diff_grads(
    loss_fn: Callable[[ParamStore], float],
    params: ParamStore,
    epsilon: float = DEFAULT_EPSILON,
    names: Iterable[str] | None = None,
) -> Grads:
    """(L(w + ε) − L(w − ε)) / 2ε for every scalar of the selected parameters.

    Costs two loss evaluations per scalar; meant for toy-sized networks.
    """
    if epsilon <= 0:
        raise ValueError("finite_diff_grads needs epsilon > 0.")
    selected = list(params.names if names is None else names)
    grads: Grads = {}
    for name in selected:
        base = np.array(params[name])
        grad = np.zeros_like(base)
        for index in np.ndindex(base.shape):
            original = base[index]
            base[index] = original + epsilon
            plus = loss_fn(params.replace_params({name: base}))
            base[index] = original - epsilon
            minus = loss_fn(params.replace_params({name: base}))
            base[index] = original
            grad[index] = (plus - minus) / (2.0 * epsilon)
        grads[name] = grad
    return grads


def max_relative_error(
    analytic: Grads, numeric: Grads, floor: float = RELATIVE_ERROR_FLOOR
) -> float:
    """max |a − n| / max(|a|, |n|, floor) over the names present in ``numeric``."""
    worst = 0.0
    for name, num in numeric.items():
        ana = analytic[name]
        if ana.shape != num.shape:
            raise ValueError(f"Gradient {name}: shape {ana.shape} vs {num.shape}.")
        scale = np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor)
        worst = max(worst, float(np.max(np.abs(ana - num) / scale, initial=0.0)))
    return worst


# --- toy-network oracle ---

TOY_WORKFLOW = WorkflowModel(
    num_phases=3,
    phase_duration_mean=(4.0, 3.0, 3.0),
    phase_duration_std=(0.0, 0.0, 0.0),
    min_phase_duration=1.0,
    feature_dim=8,
    time_channel_scale=10.0,
)
TOY_ENCODER_WIDTHS = (12,)
TOY_HIDDEN = 16
PARAM_JITTER = 0.1


def toy_params(variant: Variant, seed: int) -> ParamStore:
    """Randomly initialized toy network with jittered biases, so no gradient is trivially zero."""
    spec = ArchSpec(
        input_dim=TOY_WORKFLOW.feature_dim,
        encoder_widths=TOY_ENCODER_WIDTHS,
        lstm_hidden=TOY_HIDDEN,
        num_phases=TOY_WORKFLOW.num_phases,
        variant=variant,
    )
    params = init_params(spec, derive_seed(seed, "gradcheck", variant.value))
    rng = np.random.default_rng(derive_seed(seed, "gradcheck", variant.value, "jitter"))
    return params.replace_params(
        {n: a + PARAM_JITTER * rng.standard_normal(a.shape) for n, a in params.params.items()}
    )


def _objective(
    variant: Variant, seed: int
) -> tuple[str, Callable[[ParamStore], tuple[float, Grads]], Callable[[ParamStore], float]]:
    record = generate_surgery(TOY_WORKFLOW, derive_seed(seed, "gradcheck", "record"), "toy")
    frames = np.asarray(record.frames)
    if variant is Variant.PHASE_ENCODER:
        both = partial(
            phase_encoder_loss_and_grads, frames=frames, labels=np.asarray(record.phase_labels)
        )
        return "frame-phase", both, lambda p: both(p)[0]
    if variant is Variant.PROGRESS_ENCODER:
        both = partial(
            progress_encoder_loss_and_grads, frames=frames, targets=derive_progress_labels(record)
        )
        return "frame-progress", both, lambda p: both(p)[0]
    if variant is Variant.TEMPCON:
        pairs = sample_frame_pairs(record, 16, derive_seed(seed, "gradcheck", "pairs"))
        frames_a = np.vstack([p.frame_a for p in pairs])
        frames_b = np.vstack([p.frame_b for p in pairs])
        both = partial(
            tempcon_loss_and_grads,
            frames_a=frames_a,
            frames_b=frames_b,
            labels=np.array([p.label for p in pairs]),
        )
        return "pair-order", both, lambda p: both(p)[0]
    inputs = sequence_inputs(record, variant)
    objective = "sequence-phase" if variant.predicts_phase else "sequence-rsd-progress"
    return (
        objective,
        lambda p: full_bptt_grads(p, inputs),
        lambda p: sequence_loss(p, inputs),
    )


def run_gradcheck(
    seed: int,
    variants: Iterable[Variant] | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> list[GradcheckResult]:
    """Compare analytic and finite-difference gradients on a 10-frame toy record per variant."""
    results = []
    for variant in list(Variant) if variants is None else [Variant(v) for v in variants]:
        params = toy_params(variant, seed)
        objective, analytic_fn, loss_fn = _objective(variant, seed)
        _, analytic = analytic_fn(params)
        numeric = finite_diff_grads(loss_fn, params, epsilon)
        error = max_relative_error(analytic, numeric)
        n_params = sum(a.size for a in params.params.values())
        logger.info(
            "Gradcheck %s (%s): %d parameters, max relative error %.3e",
            variant.value,
            objective,
            n_params,
            error,
        )
        results.append(
            GradcheckResult(
                variant=variant.value,
                objective=objective,
                n_params=n_params,
                max_relative_error=error,
            )
        )
    return results
