"""Full and truncated backpropagation through time over one video.

Truncated BPTT cuts the video into consecutive subsequences of ``subseq_len`` frames.
The forward pass carries the LSTM state across every boundary unchanged, so the loss
is the exact full-sequence loss. Each subsequence is backpropagated with a zero state
gradient at its end, and the per-subsequence gradients are summed before the caller's
single update. The last subsequence may be shorter.

Frames after the last unmasked one are never processed: they cannot influence any
loss term, so padding leaves loss and gradients bit-identical.
"""

import math

import numpy as np

from phaseforge.application.layers import Grads, sum_losses
from phaseforge.application.models import (
    SequenceInputs,
    backward_subsequence,
    forward_subsequence,
    sequence_loss_terms,
)
from phaseforge.application.optim import GradAccumulator
from phaseforge.domain import LstmState, ParamStore

FULL_BPTT_MAX_FRAMES = 512


def _normalizer(inputs: SequenceInputs, normalizer: float | None) -> float:
    if normalizer is not None:
        if normalizer <= 0:
            raise ValueError("Loss normalizer must be > 0.")
        return float(normalizer)
    total = inputs.effective_length
    if total <= 0:
        raise ValueError(f"Video {inputs.video_id!r} has no unmasked frames (T_eff = 0).")
    return total


def truncated_bptt_grads(
    params: ParamStore,
    inputs: SequenceInputs,
    subseq_len: int,
    *,
    normalizer: float | None = None,
) -> tuple[float, Grads]:
    """Loss of the whole video and the truncated gradient summed over its subsequences.

    ``normalizer`` defaults to T_eff; callers may fix it to weight frames differently.
    """
    if subseq_len < 1:
        raise ValueError("subseq_len must be >= 1.")
    norm = _normalizer(inputs, normalizer)
    live = inputs.live_length
    accumulator = GradAccumulator(params, max_passes=math.ceil(live / subseq_len))
    state = LstmState.zeros(params.spec.lstm_hidden)
    frame_losses = []
    for start in range(0, live, subseq_len):
        end = min(start + subseq_len, live)
        outputs, state, trace = forward_subsequence(params, inputs, start, end, state)
        losses, d_outputs = sequence_loss_terms(
            params.spec.variant, outputs, inputs, start, end, norm
        )
        frame_losses.append(losses)
        grads, _ = backward_subsequence(params, trace, d_outputs, None)
        accumulator.add(grads)
    return sum_losses(np.concatenate(frame_losses)) / norm, accumulator.grads


def full_bptt_grads(
    params: ParamStore,
    inputs: SequenceInputs,
    *,
    normalizer: float | None = None,
    max_frames: int = FULL_BPTT_MAX_FRAMES,
) -> tuple[float, Grads]:
    """Exact gradient with the whole video unrolled once; capped for oracle use."""
    live = inputs.live_length
    if live > max_frames:
        raise ValueError(
            f"full_bptt_grads holds the whole unrolled trace; {live} frames exceed the cap of {max_frames}."
        )
    return truncated_bptt_grads(params, inputs, max(live, 1), normalizer=normalizer)


def sequence_loss(params: ParamStore, inputs: SequenceInputs, subseq_len: int | None = None) -> float:
    """Forward-only loss, optionally regrouped into subsequences."""
    norm = _normalizer(inputs, None)
    live = inputs.live_length
    step = live if subseq_len is None else subseq_len
    state = LstmState.zeros(params.spec.lstm_hidden)
    frame_losses = []
    for start in range(0, live, step):
        end = min(start + step, live)
        outputs, state, _ = forward_subsequence(params, inputs, start, end, state)
        losses, _ = sequence_loss_terms(params.spec.variant, outputs, inputs, start, end, norm)
        frame_losses.append(losses)
    return sum_losses(np.concatenate(frame_losses)) / norm
