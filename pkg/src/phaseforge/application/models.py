"""Architectures built from the primitives in ``layers``.

Sequence models (EndoN2N vanilla/updated, RSD-progress, RSDNet) run over one
subsequence at a time: ``forward_subsequence`` returns head outputs, the carried LSTM
state and a ``ForwardTrace``; ``backward_subsequence`` turns per-frame output gradients
plus an incoming state gradient into parameter gradients and the gradient w.r.t. the
state that entered the subsequence. Frame models (phase encoder, progress encoder,
TempCon siamese) expose a combined loss-and-gradient function per mini-batch.
"""

from dataclasses import dataclass, replace

import numpy as np

from phaseforge.application.layers import (
    EncoderTrace,
    Grads,
    affine,
    affine_backward,
    encoder_backward,
    encoder_forward,
    lstm_cell_backward,
    lstm_gates,
    lstm_step,
    phase_head,
    phase_frame_loss_grads,
    phase_frame_losses,
    progress_head,
    rsd_head,
    rsd_progress_frame_losses,
    rsd_progress_loss_grads,
    sigmoid,
    smooth_l1,
    softmax,
    sum_losses,
    tempcon_forward,
)
from phaseforge.application.workflow import (
    derive_progress_labels,
    derive_rsd_labels,
    elapsed_time_feature,
    pad_sequence,
)
from phaseforge.domain import LstmState, ParamStore, SurgeryRecord, Variant
from phaseforge.domain.network import SEQUENCE_VARIANTS

StateGrad = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class SequenceInputs:
    """Frames, mask, elapsed-time feature and targets of one (optionally padded) video.

    Targets that the variant does not need are None. Label slots under the mask are
    ignored. When ``encoded`` is set, ``frames`` already holds encoder features.
    """

    video_id: str
    frames: np.ndarray
    mask: np.ndarray
    elapsed: np.ndarray
    phase_labels: np.ndarray | None = None
    rsd_targets: np.ndarray | None = None
    progress_targets: np.ndarray | None = None
    encoded: bool = False

    def __post_init__(self):
        n = len(self.frames)
        for name in ("mask", "elapsed", "phase_labels", "rsd_targets", "progress_targets"):
            value = getattr(self, name)
            if value is not None and len(value) != n:
                raise ValueError(f"SequenceInputs {name} has length {len(value)}, expected {n}.")

    @property
    def length(self) -> int:
        return len(self.frames)

    @property
    def effective_length(self) -> float:
        """T_eff: sum of the mask."""
        return float(np.sum(self.mask))

    @property
    def live_length(self) -> int:
        """One past the last unmasked frame; later frames cannot reach any loss term."""
        live = np.flatnonzero(self.mask > 0)
        return int(live[-1]) + 1 if len(live) else 0

    def with_mask(self, mask: np.ndarray) -> "SequenceInputs":
        return replace(self, mask=np.asarray(mask, dtype=np.float64))


def sequence_inputs(
    record: SurgeryRecord,
    variant: Variant,
    *,
    s_norm: float = 5.0,
    pad_to: int | None = None,
    with_labels: bool = True,
) -> SequenceInputs:
    """Assemble the inputs a sequence variant trains on.

    Phase variants read the manual phase labels; RSD variants only derive timestamps.
    """
    variant = Variant(variant)
    length = record.num_frames if pad_to is None else pad_to
    padded = pad_sequence(
        record, length, with_labels=with_labels and variant.predicts_phase
    )
    rsd = progress = None
    if with_labels and not variant.predicts_phase:
        rsd = np.zeros(length)
        rsd[: record.num_frames] = derive_rsd_labels(record, s_norm)
        progress = np.zeros(length)
        progress[: record.num_frames] = derive_progress_labels(record)
    return SequenceInputs(
        video_id=record.video_id,
        frames=padded.features,
        mask=padded.mask,
        elapsed=elapsed_time_feature(record, s_norm, length),
        phase_labels=padded.labels,
        rsd_targets=rsd,
        progress_targets=progress,
    )


@dataclass(frozen=True, eq=False)
class HeadOutputs:
    """Per-frame head activations (or their gradients) of a sequence model."""

    phase: np.ndarray | None = None
    rsd: np.ndarray | None = None
    progress: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """Activations of one subsequence, enough for an exact backward pass."""

    variant: Variant
    start: int
    encoder: EncoderTrace | None
    features: np.ndarray
    frame_progress: np.ndarray | None
    lstm_inputs: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tanh_c: np.ndarray
    hidden: np.ndarray
    rsd_inputs: np.ndarray | None

    def __len__(self) -> int:
        return len(self.hidden)


def _require_variant(params: ParamStore, allowed) -> None:
    if params.spec.variant not in allowed:
        raise ValueError(
            f"Operation does not apply to {params.spec.variant.value} parameters."
        )


def lstm_inputs_for(
    params: ParamStore, features: np.ndarray, elapsed: np.ndarray
) -> tuple[np.ndarray, np.ndarray | None]:
    """LSTM input rows; updated variants append elapsed time and fc'_prog(features)."""
    if not params.spec.variant.has_time_inputs:
        return features, None
    frame_progress = progress_head(params, features)
    return np.column_stack([features, elapsed, frame_progress]), frame_progress


def _heads(params: ParamStore, hidden: np.ndarray, elapsed: np.ndarray) -> tuple[HeadOutputs, np.ndarray | None]:
    variant = params.spec.variant
    if variant.predicts_phase:
        return HeadOutputs(phase=phase_head(params, hidden)), None
    rsd_inputs = hidden
    if variant is Variant.RSDNET:
        rsd_inputs = np.column_stack([hidden, elapsed])
    outputs = HeadOutputs(
        rsd=rsd_head(params, rsd_inputs),
        progress=affine(params, "fc_prog", hidden)[:, 0],
    )
    return outputs, rsd_inputs


def forward_subsequence(
    params: ParamStore,
    inputs: SequenceInputs,
    start: int,
    end: int,
    state: LstmState,
) -> tuple[HeadOutputs, LstmState, ForwardTrace]:
    """Run frames[start:end] from ``state``; returns outputs, the final state and the trace."""
    _require_variant(params, SEQUENCE_VARIANTS)
    if not 0 <= start < end <= inputs.length:
        raise ValueError(f"Invalid subsequence [{start}, {end}) of a {inputs.length}-frame input.")
    hidden_dim = params.spec.lstm_hidden
    if inputs.encoded:
        if inputs.frames.shape[1] != params.spec.feature_dim:
            raise ValueError("Encoded inputs do not match the encoder feature width.")
        features, enc = inputs.frames[start:end], None
    else:
        features, enc = encoder_forward(params, inputs.frames[start:end])
    elapsed = inputs.elapsed[start:end]
    x, frame_progress = lstm_inputs_for(params, features, elapsed)
    zx = x @ params["lstm.Wx"].T + params["lstm.b"]
    wh = params["lstm.Wh"]

    n = end - start
    h_prev = np.empty((n, hidden_dim))
    c_prev = np.empty((n, hidden_dim))
    gates = np.empty((4, n, hidden_dim))
    tanh_c = np.empty((n, hidden_dim))
    hidden = np.empty((n, hidden_dim))
    h, c = state.h, state.c
    for t in range(n):
        h_prev[t], c_prev[t] = h, c
        i, f, o, g = lstm_gates(zx[t] + wh @ h, hidden_dim)
        c = f * c + i * g
        tanh_c[t] = np.tanh(c)
        h = o * tanh_c[t]
        gates[0, t], gates[1, t], gates[2, t], gates[3, t] = i, f, o, g
        hidden[t] = h

    outputs, rsd_inputs = _heads(params, hidden, elapsed)
    trace = ForwardTrace(
        variant=params.spec.variant,
        start=start,
        encoder=enc,
        features=features,
        frame_progress=frame_progress,
        lstm_inputs=x,
        h_prev=h_prev,
        c_prev=c_prev,
        i=gates[0],
        f=gates[1],
        o=gates[2],
        g=gates[3],
        tanh_c=tanh_c,
        hidden=hidden,
        rsd_inputs=rsd_inputs,
    )
    return outputs, LstmState(h=h, c=c), trace


def sequence_loss_terms(
    variant: Variant,
    outputs: HeadOutputs,
    inputs: SequenceInputs,
    start: int,
    end: int,
    normalizer: float,
) -> tuple[np.ndarray, HeadOutputs]:
    """Masked per-frame losses of frames[start:end] and d(total loss)/d(outputs).

    ``normalizer`` is the whole-video T_eff so that per-subsequence terms sum to the
    full-sequence loss.
    """
    mask = inputs.mask[start:end]
    if variant.predicts_phase:
        if inputs.phase_labels is None:
            raise ValueError("Phase variants need phase labels to compute a loss.")
        labels = inputs.phase_labels[start:end]
        losses = phase_frame_losses(outputs.phase, labels, mask)
        d_phase = phase_frame_loss_grads(outputs.phase, labels, mask, normalizer)
        return losses, HeadOutputs(phase=d_phase)
    if inputs.rsd_targets is None or inputs.progress_targets is None:
        raise ValueError("RSD variants need rsd and progress targets to compute a loss.")
    y_rsd = inputs.rsd_targets[start:end]
    y_prog = inputs.progress_targets[start:end]
    losses = rsd_progress_frame_losses(outputs.rsd, outputs.progress, y_rsd, y_prog, mask)
    d_rsd, d_prog = rsd_progress_loss_grads(
        outputs.rsd, outputs.progress, y_rsd, y_prog, mask, normalizer
    )
    return losses, HeadOutputs(rsd=d_rsd, progress=d_prog)


def backward_subsequence(
    params: ParamStore,
    trace: ForwardTrace,
    d_outputs: HeadOutputs,
    state_grad: StateGrad | None = None,
) -> tuple[Grads, StateGrad]:
    """Exact reverse pass through heads, LSTM steps and encoder.

    ``state_grad`` is (dL/dh, dL/dc) at the end of the subsequence; None means zero,
    which is the boundary condition at the end of a video and at every truncation point.
    Returns parameter gradients and (dL/dh, dL/dc) for the state that entered the
    subsequence.
    """
    if trace.variant is not params.spec.variant:
        raise ValueError(
            f"Trace of {trace.variant.value} does not match {params.spec.variant.value} parameters."
        )
    hidden_dim = params.spec.lstm_hidden
    if trace.hidden.shape[1] != hidden_dim:
        raise ValueError("Trace hidden size does not match the parameters.")
    n = len(trace)
    grads = params.zeros_like()

    d_hidden = np.zeros((n, hidden_dim))
    if trace.variant.predicts_phase:
        d_hidden += affine_backward(params, "fc_phase", trace.hidden, d_outputs.phase, grads)
    else:
        d_rsd_in = affine_backward(params, "fc_rsd", trace.rsd_inputs, d_outputs.rsd[:, None], grads)
        d_hidden += d_rsd_in[:, :hidden_dim]
        d_hidden += affine_backward(params, "fc_prog", trace.hidden, d_outputs.progress[:, None], grads)

    if state_grad is None:
        dh_next, dc_next = np.zeros(hidden_dim), np.zeros(hidden_dim)
    else:
        dh_next, dc_next = (np.asarray(a, dtype=np.float64) for a in state_grad)
    wh = params["lstm.Wh"]
    dz = np.empty((n, 4 * hidden_dim))
    for t in reversed(range(n)):
        dh = d_hidden[t] + dh_next
        dz[t], dc_next = lstm_cell_backward(
            dh,
            dc_next,
            trace.i[t],
            trace.f[t],
            trace.o[t],
            trace.g[t],
            trace.tanh_c[t],
            trace.c_prev[t],
        )
        dh_next = wh.T @ dz[t]

    grads["lstm.Wx"] += dz.T @ trace.lstm_inputs
    grads["lstm.Wh"] += dz.T @ trace.h_prev
    grads["lstm.b"] += dz.sum(axis=0)
    d_x = dz @ params["lstm.Wx"]

    feature_dim = params.spec.feature_dim
    d_features = d_x[:, :feature_dim]
    if trace.frame_progress is not None:
        p = trace.frame_progress
        du = d_x[:, feature_dim + 1] * p * (1.0 - p)
        d_features = d_features + affine_backward(
            params, "fc_prog_frame", trace.features, du[:, None], grads
        )
    if trace.encoder is not None:
        encoder_backward(params, trace.encoder, d_features, grads)
    return grads, (dh_next, dc_next)


class OnlineRecognizer:
    """Frame-by-frame causal inference with a sequence model.

    Each ``step`` sees one frame and the elapsed-time feature; the output never depends
    on later frames.
    """

    def __init__(self, params: ParamStore) -> None:
        _require_variant(params, SEQUENCE_VARIANTS)
        self._params = params
        self._state = LstmState.zeros(params.spec.lstm_hidden)

    @property
    def state(self) -> LstmState:
        return self._state

    def step(self, frame: np.ndarray, elapsed: float) -> HeadOutputs:
        params = self._params
        features, _ = encoder_forward(params, frame)
        x = features
        if params.spec.variant.has_time_inputs:
            x = np.concatenate([features, [elapsed], [progress_head(params, features)]])
        h, self._state, _ = lstm_step(params, x, self._state)
        outputs, _ = _heads(params, h[None, :], np.array([elapsed]))
        return outputs


# --- frame models ---


def phase_encoder_loss_and_grads(
    params: ParamStore, frames: np.ndarray, labels: np.ndarray
) -> tuple[float, Grads]:
    """Mean per-frame multinomial logistic loss of encoder + fc'_phase."""
    _require_variant(params, (Variant.PHASE_ENCODER,))
    n = len(frames)
    mask = np.ones(n)
    features, enc = encoder_forward(params, frames)
    logits = affine(params, "fc_phase_frame", features)
    loss = sum_losses(phase_frame_losses(logits, labels, mask)) / n
    grads = params.zeros_like()
    d_logits = phase_frame_loss_grads(logits, labels, mask, n)
    d_features = affine_backward(params, "fc_phase_frame", features, d_logits, grads)
    encoder_backward(params, enc, d_features, grads)
    return loss, grads


def phase_encoder_probabilities(params: ParamStore, frames: np.ndarray) -> np.ndarray:
    _require_variant(params, (Variant.PHASE_ENCODER,))
    features, _ = encoder_forward(params, frames)
    return softmax(affine(params, "fc_phase_frame", features))


def progress_encoder_loss_and_grads(
    params: ParamStore, frames: np.ndarray, targets: np.ndarray
) -> tuple[float, Grads]:
    """Mean smooth-L1 between sigmoid(fc'_prog(features)) and the progress label."""
    _require_variant(params, (Variant.PROGRESS_ENCODER,))
    n = len(frames)
    features, enc = encoder_forward(params, frames)
    prediction = sigmoid(affine(params, "fc_prog_frame", features)[:, 0])
    value, derivative = smooth_l1(prediction - targets)
    loss = sum_losses(value) / n
    grads = params.zeros_like()
    du = derivative * prediction * (1.0 - prediction) / n
    d_features = affine_backward(params, "fc_prog_frame", features, du[:, None], grads)
    encoder_backward(params, enc, d_features, grads)
    return loss, grads


def progress_encoder_predict(params: ParamStore, frames: np.ndarray) -> np.ndarray:
    _require_variant(params, (Variant.PROGRESS_ENCODER,))
    features, _ = encoder_forward(params, frames)
    return progress_head(params, features)


def tempcon_loss_and_grads(
    params: ParamStore, frames_a: np.ndarray, frames_b: np.ndarray, labels: np.ndarray
) -> tuple[float, Grads]:
    """Two-class logistic loss of the siamese order classifier; label 1 means a after b."""
    _require_variant(params, (Variant.TEMPCON,))
    n = len(frames_a)
    mask = np.ones(n)
    classes = np.asarray(labels, dtype=np.int64) + 1
    feat_a, trace_a = encoder_forward(params, frames_a)
    feat_b, trace_b = encoder_forward(params, frames_b)
    logits = affine(params, "fc_order", np.concatenate([feat_a, feat_b], axis=1))
    loss = sum_losses(phase_frame_losses(logits, classes, mask)) / n
    grads = params.zeros_like()
    d_logits = phase_frame_loss_grads(logits, classes, mask, n)
    d_joint = affine_backward(
        params, "fc_order", np.concatenate([feat_a, feat_b], axis=1), d_logits, grads
    )
    width = params.spec.feature_dim
    encoder_backward(params, trace_a, d_joint[:, :width], grads)
    encoder_backward(params, trace_b, d_joint[:, width:], grads)
    return loss, grads


def tempcon_predict(params: ParamStore, frames_a: np.ndarray, frames_b: np.ndarray) -> np.ndarray:
    """Predicted order label per pair (1 when frame a is judged later)."""
    _require_variant(params, (Variant.TEMPCON,))
    return tempcon_forward(params, frames_a, frames_b).argmax(axis=1)


def run_sequence(params: ParamStore, inputs: SequenceInputs) -> HeadOutputs:
    """Head outputs for every frame in one batched forward pass from a zero state."""
    outputs, _, _ = forward_subsequence(
        params, inputs, 0, inputs.length, LstmState.zeros(params.spec.lstm_hidden)
    )
    return outputs


def encode_inputs(params: ParamStore, inputs: SequenceInputs) -> SequenceInputs:
    """Replace frames by encoder features, for models trained on a frozen encoder."""
    if inputs.encoded:
        return inputs
    features, _ = encoder_forward(params, inputs.frames)
    return replace(inputs, frames=features, encoded=True)
