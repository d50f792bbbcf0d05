"""Truncated and full backpropagation through time."""

import numpy as np
import pytest

from phaseforge.application.bptt import (
    FULL_BPTT_MAX_FRAMES,
    full_bptt_grads,
    sequence_loss,
    truncated_bptt_grads,
)
from phaseforge.application.layers import init_params
from phaseforge.application.models import sequence_inputs
from phaseforge.application.optim import GradAccumulator
from phaseforge.domain import ParamStore, SurgeryRecord, Variant

SEQUENCE_VARIANTS = [
    Variant.ENDON2N_VANILLA,
    Variant.ENDON2N_UPDATED,
    Variant.RSD_PROGRESS,
    Variant.RSDNET,
]


def _params(small_arch, variant: Variant, seed: int = 0) -> ParamStore:
    return init_params(small_arch.with_variant(variant), seed)


def _max_abs_diff(a: dict, b: dict) -> float:
    return max(float(np.max(np.abs(a[n] - b[n]))) for n in a)


@pytest.mark.parametrize("variant", SEQUENCE_VARIANTS, ids=lambda v: v.value)
def test_loss_does_not_depend_on_subsequence_length(small_arch, record, variant) -> None:
    params = _params(small_arch, variant)
    inputs = sequence_inputs(record, variant)
    full_loss, _ = full_bptt_grads(params, inputs)
    for subseq_len in (1, 7, 13, record.num_frames):
        loss, _ = truncated_bptt_grads(params, inputs, subseq_len)
        assert abs(loss - full_loss) <= 1e-12
        assert abs(sequence_loss(params, inputs, subseq_len) - full_loss) <= 1e-12


@pytest.mark.parametrize("variant", SEQUENCE_VARIANTS, ids=lambda v: v.value)
def test_one_subsequence_is_full_bptt(small_arch, record, variant) -> None:
    params = _params(small_arch, variant, seed=1)
    inputs = sequence_inputs(record, variant)
    loss, grads = full_bptt_grads(params, inputs)
    for subseq_len in (record.num_frames, record.num_frames + 5):
        t_loss, t_grads = truncated_bptt_grads(params, inputs, subseq_len)
        assert t_loss == loss
        assert all(np.array_equal(t_grads[n], grads[n]) for n in grads)


def test_truncation_drops_gradient_across_boundaries(small_arch, record) -> None:
    params = _params(small_arch, Variant.ENDON2N_VANILLA, seed=2)
    inputs = sequence_inputs(record, Variant.ENDON2N_VANILLA)
    _, full = full_bptt_grads(params, inputs)
    _, truncated = truncated_bptt_grads(params, inputs, 1)
    assert _max_abs_diff(full, truncated) > 1e-8


def test_without_recurrence_truncation_is_exact(small_arch, record) -> None:
    params = _params(small_arch, Variant.ENDON2N_VANILLA, seed=3)
    hidden = small_arch.lstm_hidden
    wx = np.array(params["lstm.Wx"])
    wx[hidden : 2 * hidden] = 0.0
    bias = np.array(params["lstm.b"])
    bias[hidden : 2 * hidden] = -1000.0
    memoryless = params.replace_params(
        {"lstm.Wh": np.zeros_like(params["lstm.Wh"]), "lstm.Wx": wx, "lstm.b": bias}
    )
    inputs = sequence_inputs(record, Variant.ENDON2N_VANILLA)
    _, full = full_bptt_grads(memoryless, inputs)
    for subseq_len in (1, 4):
        _, truncated = truncated_bptt_grads(memoryless, inputs, subseq_len)
        assert _max_abs_diff(full, truncated) <= 1e-12


@pytest.mark.parametrize("variant", SEQUENCE_VARIANTS, ids=lambda v: v.value)
def test_padding_leaves_loss_and_gradients_unchanged(small_arch, record, variant) -> None:
    params = _params(small_arch, variant, seed=4)
    plain = sequence_inputs(record, variant)
    padded = sequence_inputs(record, variant, pad_to=6000)
    assert padded.length == 6000
    assert padded.effective_length == record.num_frames
    loss, grads = truncated_bptt_grads(params, plain, 5)
    p_loss, p_grads = truncated_bptt_grads(params, padded, 5)
    assert p_loss == loss
    assert all(np.array_equal(p_grads[n], grads[n]) for n in grads)


def test_normalizer_scales_loss_and_gradients(small_arch, record) -> None:
    params = _params(small_arch, Variant.RSD_PROGRESS, seed=5)
    inputs = sequence_inputs(record, Variant.RSD_PROGRESS)
    loss, grads = truncated_bptt_grads(params, inputs, 6)
    half_loss, half_grads = truncated_bptt_grads(
        params, inputs, 6, normalizer=2.0 * inputs.effective_length
    )
    assert half_loss == pytest.approx(loss / 2.0, rel=1e-12)
    for name in grads:
        np.testing.assert_allclose(half_grads[name], grads[name] / 2.0, rtol=1e-12, atol=1e-300)


def test_masked_frames_do_not_contribute(small_arch, record) -> None:
    params = _params(small_arch, Variant.ENDON2N_VANILLA, seed=6)
    inputs = sequence_inputs(record, Variant.ENDON2N_VANILLA)
    cut = record.num_frames // 2
    mask = np.zeros(inputs.length)
    mask[:cut] = 1.0
    masked = inputs.with_mask(mask)
    assert masked.live_length == cut
    prefix = SurgeryRecord(record.video_id, record.fps, record.frames[:cut], record.phase_labels[:cut])
    shortened = sequence_inputs(prefix, Variant.ENDON2N_VANILLA)
    loss, _ = truncated_bptt_grads(params, masked, 3)
    assert sequence_loss(params, shortened) == pytest.approx(loss, abs=1e-12)


def test_invalid_arguments(small_arch, record) -> None:
    params = _params(small_arch, Variant.ENDON2N_VANILLA)
    inputs = sequence_inputs(record, Variant.ENDON2N_VANILLA)
    with pytest.raises(ValueError, match="subseq_len"):
        truncated_bptt_grads(params, inputs, 0)
    with pytest.raises(ValueError, match="exceed the cap"):
        full_bptt_grads(params, inputs, max_frames=record.num_frames - 1)
    with pytest.raises(ValueError, match="T_eff"):
        truncated_bptt_grads(params, inputs.with_mask(np.zeros(inputs.length)), 3)
    assert FULL_BPTT_MAX_FRAMES >= record.num_frames


def test_grad_accumulator(small_arch) -> None:
    params = _params(small_arch, Variant.ENDON2N_VANILLA)
    accumulator = GradAccumulator(params, max_passes=2)
    ones = {n: np.ones_like(a) for n, a in params.params.items()}
    accumulator.add(ones)
    accumulator.add(ones)
    assert accumulator.passes == 2
    assert all(np.all(g == 2.0) for g in accumulator.grads.values())
    with pytest.raises(ValueError, match="already holds"):
        accumulator.add(ones)
    accumulator.reset()
    assert accumulator.passes == 0
    assert all(np.all(g == 0.0) for g in accumulator.grads.values())
