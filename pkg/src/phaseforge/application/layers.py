"""Primitive network operations with hand-derived backward passes.

Every function works on float64 numpy arrays. Gradients are accumulated into a
``Grads`` dict keyed by parameter name so that several loss terms can add into one
buffer. LSTM gates are laid out [input, forget, output, candidate] along the 4H axis;
the cell has no peepholes.
"""

import math
from dataclasses import dataclass

import numpy as np

from phaseforge.application.seeding import derive_seed
from phaseforge.domain import ArchSpec, LstmState, ParamStore

Grads = dict[str, np.ndarray]

FORGET_BIAS = 1.0


# --- initialization ---


def init_std(name: str, spec: ArchSpec) -> float:
    """Target std of the uniform init: He (2/fan_in) for encoder weights, LeCun (1/fan_in) otherwise."""
    fan_in = spec.parameter_shapes()[name][-1]
    if name.startswith("encoder."):
        return float(np.sqrt(2.0 / fan_in))
    return float(np.sqrt(1.0 / fan_in))


def init_array(spec: ArchSpec, name: str, seed: int) -> np.ndarray:
    """Initial value of one parameter; drawn from its own stream so it is independent of the others."""
    shape = spec.parameter_shapes()[name]
    if name.endswith(".b"):
        bias = np.zeros(shape)
        if name == "lstm.b":
            h = spec.lstm_hidden
            bias[h : 2 * h] = FORGET_BIAS
        return bias
    rng = np.random.default_rng(derive_seed(seed, "init", name))
    limit = np.sqrt(3.0) * init_std(name, spec)
    return rng.uniform(-limit, limit, size=shape)


def init_params(spec: ArchSpec, seed: int) -> ParamStore:
    """Fresh store: uniform fan-in-scaled weights, zero biases, LSTM forget bias 1."""
    params = {name: init_array(spec, name, seed) for name in spec.parameter_shapes()}
    return ParamStore(
        spec=spec,
        params=params,
        seed=seed,
        stage="init",
        iteration=0,
        random_init=frozenset(params),
    )


# --- elementwise ---


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(z: np.ndarray) -> np.ndarray:
    """Softmax along the last axis, computed with max subtraction."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def smooth_l1(x: np.ndarray | float) -> tuple[np.ndarray, np.ndarray]:
    """Smooth L1: 0.5x² for |x| < 1, |x| − 0.5 otherwise. Returns (value, derivative)."""
    x = np.asarray(x, dtype=np.float64)
    inside = np.abs(x) < 1.0
    value = np.where(inside, 0.5 * x * x, np.abs(x) - 0.5)
    derivative = np.where(inside, x, np.sign(x))
    return value, derivative


# --- encoder ---


@dataclass(frozen=True, eq=False)
class EncoderTrace:
    """Layer inputs and pre-activations, one entry per layer."""

    inputs: tuple[np.ndarray, ...]
    pre: tuple[np.ndarray, ...]


def encoder_forward(params: ParamStore, x: np.ndarray) -> tuple[np.ndarray, EncoderTrace]:
    """Affine + ReLU stack. x is (D,) or (n, D)."""
    x = np.asarray(x, dtype=np.float64)
    spec = params.spec
    if x.shape[-1] != spec.input_dim:
        raise ValueError(f"Encoder expects inputs of dim {spec.input_dim}, got {x.shape[-1]}.")
    inputs, pre = [], []
    h = x
    for i in range(len(spec.encoder_widths)):
        inputs.append(h)
        a = h @ params[f"encoder.{i}.W"].T + params[f"encoder.{i}.b"]
        pre.append(a)
        h = np.maximum(a, 0.0)
    return h, EncoderTrace(inputs=tuple(inputs), pre=tuple(pre))


def encoder_backward(
    params: ParamStore, trace: EncoderTrace, d_features: np.ndarray, grads: Grads
) -> np.ndarray:
    """Accumulate encoder weight gradients; returns the gradient w.r.t. the input."""
    d = np.asarray(d_features, dtype=np.float64)
    for i in reversed(range(len(trace.pre))):
        da = d * (trace.pre[i] > 0.0)
        inp = trace.inputs[i]
        if da.ndim == 1:
            grads[f"encoder.{i}.W"] += np.outer(da, inp)
            grads[f"encoder.{i}.b"] += da
        else:
            grads[f"encoder.{i}.W"] += da.T @ inp
            grads[f"encoder.{i}.b"] += da.sum(axis=0)
        d = da @ params[f"encoder.{i}.W"]
    return d


# --- LSTM ---


@dataclass(frozen=True, eq=False)
class LstmStepTrace:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tanh_c: np.ndarray


def lstm_gates(z: np.ndarray, hidden: int) -> tuple[np.ndarray, ...]:
    i = sigmoid(z[..., :hidden])
    f = sigmoid(z[..., hidden : 2 * hidden])
    o = sigmoid(z[..., 2 * hidden : 3 * hidden])
    g = np.tanh(z[..., 3 * hidden :])
    return i, f, o, g


def lstm_step(
    params: ParamStore, x_t: np.ndarray, state: LstmState
) -> tuple[np.ndarray, LstmState, LstmStepTrace]:
    """One LSTM step: c' = f⊙c + i⊙g, h = o⊙tanh(c')."""
    spec = params.spec
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (spec.lstm_input_dim,):
        raise ValueError(
            f"LSTM of {spec.variant.value} expects input dim {spec.lstm_input_dim}, got {x_t.shape}."
        )
    hidden = spec.lstm_hidden
    z = params["lstm.Wx"] @ x_t + params["lstm.Wh"] @ state.h + params["lstm.b"]
    i, f, o, g = lstm_gates(z, hidden)
    c = f * state.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    trace = LstmStepTrace(x=x_t, h_prev=state.h, c_prev=state.c, i=i, f=f, o=o, g=g, tanh_c=tanh_c)
    return h, LstmState(h=h, c=c), trace


def lstm_cell_backward(
    dh: np.ndarray,
    dc_next: np.ndarray,
    i: np.ndarray,
    f: np.ndarray,
    o: np.ndarray,
    g: np.ndarray,
    tanh_c: np.ndarray,
    c_prev: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient w.r.t. the gate pre-activations and the previous cell state."""
    dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
    dz = np.concatenate(
        [
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dh * tanh_c * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ]
    )
    return dz, dc * f


def lstm_step_backward(
    params: ParamStore,
    trace: LstmStepTrace,
    dh: np.ndarray,
    dc: np.ndarray,
    grads: Grads,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backward of lstm_step. Returns (dx, dh_prev, dc_prev)."""
    dz, dc_prev = lstm_cell_backward(
        dh, dc, trace.i, trace.f, trace.o, trace.g, trace.tanh_c, trace.c_prev
    )
    grads["lstm.Wx"] += np.outer(dz, trace.x)
    grads["lstm.Wh"] += np.outer(dz, trace.h_prev)
    grads["lstm.b"] += dz
    dx = params["lstm.Wx"].T @ dz
    dh_prev = params["lstm.Wh"].T @ dz
    return dx, dh_prev, dc_prev


# --- heads ---


def affine(params: ParamStore, name: str, x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) @ params[f"{name}.W"].T + params[f"{name}.b"]


def affine_backward(
    params: ParamStore, name: str, x: np.ndarray, d_out: np.ndarray, grads: Grads
) -> np.ndarray:
    """Backward of ``affine`` for x of shape (n, k) and d_out of shape (n, m)."""
    grads[f"{name}.W"] += d_out.T @ x
    grads[f"{name}.b"] += d_out.sum(axis=0)
    return d_out @ params[f"{name}.W"]


def phase_head(params: ParamStore, h: np.ndarray) -> np.ndarray:
    """fc_phase logits; apply ``softmax`` for probabilities."""
    return affine(params, "fc_phase", h)


def progress_head(params: ParamStore, features: np.ndarray, name: str = "fc_prog_frame") -> np.ndarray:
    """Sigmoid of an affine map to a scalar per input row."""
    return sigmoid(affine(params, name, features)[..., 0])


def rsd_head(params: ParamStore, h: np.ndarray) -> np.ndarray:
    """Unsquashed RSD activation per input row."""
    return affine(params, "fc_rsd", h)[..., 0]


# --- losses ---


def _effective_length(mask: np.ndarray) -> float:
    total = float(np.sum(mask))
    if total <= 0:
        raise ValueError("Loss needs at least one unmasked frame (T_eff = 0).")
    return total


def phase_frame_losses(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Masked per-frame −log σ(z)_y; labels are 1-based and ignored where mask is 0."""
    idx = np.where(mask > 0, np.asarray(labels) - 1, 0)
    logp = log_softmax(logits)
    return -logp[np.arange(len(idx)), idx] * mask


def phase_frame_loss_grads(
    logits: np.ndarray, labels: np.ndarray, mask: np.ndarray, normalizer: float
) -> np.ndarray:
    """d(Σ masked losses / normalizer) / d logits."""
    idx = np.where(mask > 0, np.asarray(labels) - 1, 0)
    d = softmax(logits)
    d[np.arange(len(idx)), idx] -= 1.0
    return d * (mask / normalizer)[:, None]


def phase_sequence_loss(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean multinomial logistic loss over unmasked frames."""
    logits = np.asarray(logits, dtype=np.float64)
    if mask is None:
        mask = np.ones(len(logits))
    if len(labels) != len(logits) or len(mask) != len(logits):
        raise ValueError("phase_sequence_loss inputs must have equal lengths.")
    return sum_losses(phase_frame_losses(logits, labels, mask)) / _effective_length(mask)


def rsd_progress_frame_losses(
    z_rsd: np.ndarray,
    z_prog: np.ndarray,
    y_rsd: np.ndarray,
    y_prog: np.ndarray,
    mask: np.ndarray,
) -> np.ndarray:
    """Masked Ω(z_rsd − y_rsd) + Ω(ρ(z_prog) − y_prog) per frame."""
    rsd_value, _ = smooth_l1(np.asarray(z_rsd) - y_rsd)
    prog_value, _ = smooth_l1(sigmoid(z_prog) - y_prog)
    return np.where(mask > 0, rsd_value + prog_value, 0.0)


def rsd_progress_loss_grads(
    z_rsd: np.ndarray,
    z_prog: np.ndarray,
    y_rsd: np.ndarray,
    y_prog: np.ndarray,
    mask: np.ndarray,
    normalizer: float,
) -> tuple[np.ndarray, np.ndarray]:
    weight = np.where(mask > 0, mask / normalizer, 0.0)
    _, d_rsd = smooth_l1(np.asarray(z_rsd) - y_rsd)
    prog = sigmoid(z_prog)
    _, d_prog = smooth_l1(prog - y_prog)
    return d_rsd * weight, d_prog * prog * (1.0 - prog) * weight


def rsd_progress_loss(
    z_rsd: np.ndarray,
    z_prog: np.ndarray,
    y_rsd: np.ndarray,
    y_prog: np.ndarray,
    mask: np.ndarray | None = None,
) -> float:
    """Mean multi-task smooth-L1 loss over unmasked frames."""
    z_rsd = np.atleast_1d(np.asarray(z_rsd, dtype=np.float64))
    if mask is None:
        mask = np.ones(len(z_rsd))
    lengths = {len(z_rsd), len(np.atleast_1d(z_prog)), len(np.atleast_1d(y_rsd)),
               len(np.atleast_1d(y_prog)), len(mask)}
    if len(lengths) != 1:
        raise ValueError("rsd_progress_loss inputs must have equal lengths.")
    losses = rsd_progress_frame_losses(
        z_rsd, np.atleast_1d(z_prog), np.atleast_1d(y_rsd), np.atleast_1d(y_prog), mask
    )
    return sum_losses(losses) / _effective_length(mask)


def sum_losses(values: np.ndarray) -> float:
    """Exactly rounded sum, so regrouping frames into subsequences never changes the total."""
    return math.fsum(np.asarray(values, dtype=np.float64).ravel().tolist())


# --- siamese ---


def tempcon_forward(params: ParamStore, frame_a: np.ndarray, frame_b: np.ndarray) -> np.ndarray:
    """Shared encoder on both frames, features concatenated, fc_order gives 2 logits."""
    feat_a, _ = encoder_forward(params, frame_a)
    feat_b, _ = encoder_forward(params, frame_b)
    joint = np.concatenate([feat_a, feat_b], axis=-1)
    return affine(params, "fc_order", joint)
