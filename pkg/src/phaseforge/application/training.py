"""Training pipelines.

Frame stages (phase encoder, progress encoder, TempCon) draw shuffled mini-batches.
Sequence stages (EndoN2N, EndoLSTM, RSD pre-training) make one optimizer update per
video: truncated BPTT for end-to-end models, exact BPTT over the padded video for
EndoLSTM. With ``epochs`` set in the config, iteration counts and decay steps scale
with the amount of data. Self-supervised stages run with phase-label reads sealed.
"""

import logging
import math
import time
from collections.abc import Callable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from phaseforge.application.bptt import sequence_loss, truncated_bptt_grads
from phaseforge.application.dto import TrainingResult, ValidationPoint
from phaseforge.application.layers import Grads
from phaseforge.application.models import (
    SequenceInputs,
    encode_inputs,
    phase_encoder_loss_and_grads,
    phase_encoder_probabilities,
    progress_encoder_loss_and_grads,
    run_sequence,
    sequence_inputs,
    tempcon_loss_and_grads,
)
from phaseforge.application.optim import OptimizerState, lr_multipliers, optimizer_step
from phaseforge.application.ports import CheckpointRepository, TrainingLog
from phaseforge.application.seeding import derive_seed
from phaseforge.application.transfer import transfer_weights
from phaseforge.application.workflow import derive_progress_labels, sample_pair_indices
from phaseforge.domain import (
    LABEL_MONITOR,
    FramePair,
    ParamStore,
    SurgeryRecord,
    TrainConfig,
    Variant,
)
from phaseforge.domain.network import encoder_names

logger = logging.getLogger(__name__)

FROZEN_PROGRESS_HEAD = frozenset({"fc_prog_frame.W", "fc_prog_frame.b"})


@dataclass(frozen=True)
class StageContext:
    """Where a stage reports: checkpoint store, CSV log, log cadence and worker count."""

    stage: str
    checkpoints: CheckpointRepository | None = None
    log: TrainingLog | None = None
    log_every: int = 100
    threads: int = 1


@dataclass(frozen=True, eq=False)
class PairArrays:
    """Stacked TempCon pairs; label 1 means frame a comes after frame b."""

    frames_a: np.ndarray
    frames_b: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if not len(self.frames_a) == len(self.frames_b) == len(self.labels):
            raise ValueError("PairArrays fields must have equal lengths.")

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def from_pairs(cls, pairs: Sequence[FramePair]) -> "PairArrays":
        if not pairs:
            return cls(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros(0, dtype=np.int64))
        return cls(
            frames_a=np.vstack([p.frame_a for p in pairs]),
            frames_b=np.vstack([p.frame_b for p in pairs]),
            labels=np.array([p.label for p in pairs], dtype=np.int64),
        )


def sample_pair_arrays(records: Sequence[SurgeryRecord], pairs_per_video: int, seed: int) -> PairArrays:
    """Ordered frame pairs from every record; uses frames and indices only."""
    a, b, y = [], [], []
    for i, record in enumerate(records):
        ia, ib, labels = sample_pair_indices(
            record.num_frames, pairs_per_video, derive_seed(seed, "pairs", record.video_id, i)
        )
        frames = record.frames
        a.append(frames[ia])
        b.append(frames[ib])
        y.append(labels)
    if not a:
        raise ValueError("sample_pair_arrays needs at least one record.")
    return PairArrays(np.vstack(a), np.vstack(b), np.concatenate(y))


def labeled_frames(records: Sequence[SurgeryRecord]) -> tuple[np.ndarray, np.ndarray]:
    """All frames with their manual phase labels, concatenated in record order."""
    if not records:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    return (
        np.vstack([r.frames for r in records]),
        np.concatenate([r.phase_labels for r in records]),
    )


def frame_accuracy(params: ParamStore, frames: np.ndarray, labels: np.ndarray) -> float:
    probs = phase_encoder_probabilities(params, frames)
    return 100.0 * float(np.mean(probs.argmax(axis=1) + 1 == labels))


def _minibatches(n: int, batch_size: int, seed: int) -> Iterator[np.ndarray]:
    rng = np.random.default_rng(seed)
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start : start + batch_size]


class _Progress:
    """Losses, validation points, the best model and checkpoints of one stage."""

    def __init__(self, ctx: StageContext, cfg: TrainConfig) -> None:
        self._ctx = ctx
        self._cfg = cfg
        self._started = time.perf_counter()
        self.losses: list[float] = []
        self.validation: list[ValidationPoint] = []
        self.best: ParamStore | None = None
        self.best_score = -math.inf

    def update(self, iteration: int, loss: float, lr: float) -> None:
        if not math.isfinite(loss):
            logger.warning("%s: non-finite loss at iteration %d", self._ctx.stage, iteration)
        self.losses.append(loss)
        if self._ctx.log is not None:
            self._ctx.log.log_update(
                self._ctx.stage, iteration, loss, lr, time.perf_counter() - self._started
            )
        every = self._ctx.log_every
        if every and (iteration + 1) % every == 0:
            logger.info(
                "%s: iteration %d/%d loss=%.5f lr=%.2e",
                self._ctx.stage,
                iteration + 1,
                self._cfg.iterations,
                loss,
                lr,
            )

    def validate(
        self,
        epoch: int,
        params: ParamStore,
        *,
        accuracy: float | None = None,
        loss: float | None = None,
    ) -> None:
        score = accuracy if accuracy is not None else -float(loss)
        self.validation.append(
            ValidationPoint(
                epoch=epoch,
                iteration=params.iteration,
                accuracy=accuracy,
                loss=loss,
                score=score,
            )
        )
        if self._ctx.log is not None:
            self._ctx.log.log_validation(
                self._ctx.stage,
                epoch,
                params.iteration,
                math.nan if accuracy is None else accuracy,
                math.nan if loss is None else loss,
            )
        if score > self.best_score:
            self.best_score, self.best = score, params
            logger.info(
                "%s: new best at epoch %d (iteration %d): score %.4f",
                self._ctx.stage,
                epoch,
                params.iteration,
                score,
            )

    def result(self, final: ParamStore) -> TrainingResult:
        selected = self.best if self.best is not None else final
        keys: list[str] = []
        if self._ctx.checkpoints is not None:
            keys.append(self._ctx.checkpoints.save(final, self._ctx.stage))
            if selected is not final and selected.iteration != final.iteration:
                keys.append(self._ctx.checkpoints.save(selected, self._ctx.stage))
        logger.info(
            "%s: finished %d updates in %.1fs%s",
            self._ctx.stage,
            len(self.losses),
            time.perf_counter() - self._started,
            "" if self.best is None else f", selected iteration {selected.iteration}",
        )
        return TrainingResult(
            stage=self._ctx.stage,
            params=selected,
            final=final,
            losses=tuple(self.losses),
            validation=tuple(self.validation),
            best_iteration=None if self.best is None else selected.iteration,
            checkpoints=tuple(keys),
        )


def _start(init: ParamStore, ctx: StageContext) -> ParamStore:
    return init.replace_params({}, stage=ctx.stage, iteration=0)


def _require(init: ParamStore | None, variants: Sequence[Variant], what: str) -> ParamStore:
    if init is None:
        raise ValueError(f"Missing {what}.")
    if init.arch_tag not in variants:
        raise ValueError(
            f"Expected {what} of {[v.value for v in variants]}, got {init.arch_tag.value}."
        )
    return init


# --- frame models ---


def _train_frame_model(
    init: ParamStore,
    cfg: TrainConfig,
    n_samples: int,
    step: Callable[[ParamStore, np.ndarray], tuple[float, Grads]],
    ctx: StageContext,
    *,
    validate: Callable[[ParamStore], float] | None = None,
    validate_every: int | None = None,
    frozen: frozenset[str] = frozenset(),
) -> TrainingResult:
    if n_samples == 0:
        raise ValueError(f"{ctx.stage}: empty training set.")
    cfg = cfg.resolved_for_samples(n_samples)
    params = _start(init, ctx)
    multipliers = lr_multipliers(params, cfg)
    state = OptimizerState.for_config(cfg)
    batches = _minibatches(n_samples, cfg.batch_size, derive_seed(cfg.seed, ctx.stage, "batches"))
    every = validate_every or max(1, math.ceil(n_samples / cfg.batch_size))
    progress = _Progress(ctx, cfg)
    logger.info("%s: %d samples, %d iterations", ctx.stage, n_samples, cfg.iterations)
    for it in range(cfg.iterations):
        loss, grads = step(params, next(batches))
        params = optimizer_step(
            params, grads, cfg, it, state, frozen=frozen, multipliers=multipliers
        )
        progress.update(it, loss, cfg.learning_rate(it))
        if validate is not None and ((it + 1) % every == 0 or it + 1 == cfg.iterations):
            progress.validate(math.ceil((it + 1) / every), params, accuracy=validate(params))
    return progress.result(params)


def train_phase_encoder(
    frames: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    init: ParamStore,
    *,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
    validate_every: int | None = None,
    ctx: StageContext | None = None,
) -> TrainingResult:
    """Encoder + fc'_phase with per-frame multinomial logistic loss."""
    init = _require(init, (Variant.PHASE_ENCODER,), "phase-encoder initialization")
    frames = np.asarray(frames, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    validate = None
    if validation is not None and len(validation[1]):
        validate = partial(frame_accuracy, frames=validation[0], labels=validation[1])
    return _train_frame_model(
        init,
        cfg,
        len(labels),
        lambda p, idx: phase_encoder_loss_and_grads(p, frames[idx], labels[idx]),
        ctx or StageContext("phase_encoder"),
        validate=validate,
        validate_every=validate_every,
    )


def train_progress_encoder(
    records: Sequence[SurgeryRecord],
    cfg: TrainConfig,
    init: ParamStore,
    *,
    ctx: StageContext | None = None,
) -> TrainingResult:
    """Encoder + fc'_prog on derived progress labels; no manual labels are read."""
    init = _require(init, (Variant.PROGRESS_ENCODER,), "progress-encoder initialization")
    ctx = ctx or StageContext("progress_encoder")
    if not records:
        raise ValueError(f"{ctx.stage}: empty training set.")
    with LABEL_MONITOR.sealed(ctx.stage):
        frames = np.vstack([r.frames for r in records])
        targets = np.concatenate([derive_progress_labels(r) for r in records])
        return _train_frame_model(
            init,
            cfg,
            len(targets),
            lambda p, idx: progress_encoder_loss_and_grads(p, frames[idx], targets[idx]),
            ctx,
        )


def pretrain_tempcon(
    pairs: PairArrays | Sequence[FramePair],
    cfg: TrainConfig,
    init: ParamStore,
    *,
    ctx: StageContext | None = None,
) -> TrainingResult:
    """Siamese order classification; the shared encoder is what later stages reuse."""
    init = _require(init, (Variant.TEMPCON,), "TempCon initialization")
    ctx = ctx or StageContext("tempcon")
    if not isinstance(pairs, PairArrays):
        pairs = PairArrays.from_pairs(pairs)
    if len(pairs) == 0:
        raise ValueError(f"{ctx.stage}: no frame pairs.")
    with LABEL_MONITOR.sealed(ctx.stage):
        return _train_frame_model(
            init,
            cfg,
            len(pairs),
            lambda p, idx: tempcon_loss_and_grads(
                p, pairs.frames_a[idx], pairs.frames_b[idx], pairs.labels[idx]
            ),
            ctx,
        )


# --- sequence models ---


def build_inputs(
    records: Sequence[SurgeryRecord],
    variant: Variant,
    *,
    s_norm: float,
    pad_to: int | None,
    with_labels: bool = True,
) -> list[SequenceInputs]:
    """Padded inputs per record; a record longer than ``pad_to`` is padded to its own length."""
    inputs = []
    for record in records:
        length = pad_to
        if pad_to is not None and record.num_frames > pad_to:
            logger.warning(
                "Video %s has %d frames, more than pad_to=%d; not padding it",
                record.video_id,
                record.num_frames,
                pad_to,
            )
            length = record.num_frames
        inputs.append(
            sequence_inputs(record, variant, s_norm=s_norm, pad_to=length, with_labels=with_labels)
        )
    return inputs


def _map(fn, items, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(LABEL_MONITOR.carry(fn), items))


def sequence_accuracy(
    params: ParamStore, videos: Sequence[SequenceInputs], threads: int = 1
) -> float:
    """Frame accuracy over the unmasked frames of labeled videos, pooled."""

    def counts(inputs: SequenceInputs) -> tuple[int, int]:
        logits = run_sequence(params, inputs).phase
        live = inputs.mask > 0
        correct = (logits.argmax(axis=1) + 1 == inputs.phase_labels) & live
        return int(correct.sum()), int(live.sum())

    results = _map(counts, list(videos), threads)
    total = sum(n for _, n in results)
    return 100.0 * sum(c for c, _ in results) / total if total else 0.0


def mean_sequence_loss(
    params: ParamStore, videos: Sequence[SequenceInputs], threads: int = 1
) -> float:
    return float(np.mean(_map(lambda x: sequence_loss(params, x), list(videos), threads)))


def _train_sequence_model(
    init: ParamStore,
    videos: Sequence[SequenceInputs],
    cfg: TrainConfig,
    ctx: StageContext,
    *,
    frozen: frozenset[str] = frozenset(),
    multipliers: dict[str, float] | None = None,
    exact: bool = False,
    validate: Callable[[ParamStore], dict[str, float]] | None = None,
) -> TrainingResult:
    """One update per video in a seeded per-epoch order; validation after every epoch."""
    n_videos = len(videos)
    if n_videos == 0:
        raise ValueError(f"{ctx.stage}: empty training set.")
    cfg = cfg.resolved_for_videos(n_videos)
    params = _start(init, ctx)
    if multipliers is None:
        multipliers = lr_multipliers(params, cfg)
    state = OptimizerState.for_config(cfg)
    progress = _Progress(ctx, cfg)
    logger.info(
        "%s: %d videos, %d iterations, %s",
        ctx.stage,
        n_videos,
        cfg.iterations,
        "exact BPTT" if exact else f"truncated BPTT over {cfg.subseq_len}-frame subsequences",
    )
    order = np.arange(n_videos)
    for it in range(cfg.iterations):
        epoch, position = divmod(it, n_videos)
        if position == 0:
            rng = np.random.default_rng(derive_seed(cfg.seed, ctx.stage, "order", epoch))
            order = rng.permutation(n_videos)
        inputs = videos[order[position]]
        subseq_len = max(inputs.live_length, 1) if exact else cfg.subseq_len
        loss, grads = truncated_bptt_grads(params, inputs, subseq_len)
        params = optimizer_step(
            params, grads, cfg, it, state, frozen=frozen, multipliers=multipliers
        )
        progress.update(it, loss, cfg.learning_rate(it))
        last = it + 1 == cfg.iterations
        if validate is not None and (position == n_videos - 1 or last):
            progress.validate(epoch + 1, params, **validate(params))
    return progress.result(params)


def _phase_validation(videos: Sequence[SequenceInputs], threads: int):
    if not videos:
        return None

    def validate(params: ParamStore) -> dict[str, float]:
        return {"accuracy": sequence_accuracy(params, videos, threads)}

    return validate


def _loss_validation(videos: Sequence[SequenceInputs], threads: int):
    if not videos:
        return None

    def validate(params: ParamStore) -> dict[str, float]:
        return {"loss": mean_sequence_loss(params, videos, threads)}

    return validate


def train_endon2n(
    records: Sequence[SurgeryRecord],
    cfg: TrainConfig,
    init: ParamStore | None,
    *,
    s_norm: float = 5.0,
    validation: Sequence[SurgeryRecord] = (),
    ctx: StageContext | None = None,
) -> TrainingResult:
    """End-to-end encoder-LSTM training with truncated BPTT; variant follows ``init``.

    The updated variant keeps fc'_prog frozen. Returns the best validation checkpoint
    when validation videos are given.
    """
    init = _require(
        init, (Variant.ENDON2N_VANILLA, Variant.ENDON2N_UPDATED), "EndoN2N initialization"
    )
    ctx = ctx or StageContext("endon2n")
    variant = init.arch_tag
    videos = build_inputs(records, variant, s_norm=s_norm, pad_to=cfg.pad_to)
    val = build_inputs(validation, variant, s_norm=s_norm, pad_to=None)
    frozen = FROZEN_PROGRESS_HEAD if variant is Variant.ENDON2N_UPDATED else frozenset()
    return _train_sequence_model(
        init,
        videos,
        cfg,
        ctx,
        frozen=frozen,
        validate=_phase_validation(val, ctx.threads),
    )


def train_endolstm(
    records: Sequence[SurgeryRecord],
    cfg: TrainConfig,
    encoder: ParamStore | None,
    *,
    s_norm: float = 5.0,
    validation: Sequence[SurgeryRecord] = (),
    ctx: StageContext | None = None,
) -> TrainingResult:
    """Two-step baseline: frozen fine-tuned encoder, LSTM + fc_phase by exact BPTT.

    Features are extracted once per video (on ``ctx.threads`` workers) and the LSTM
    trains on them over the full padded sequence.
    """
    encoder = _require(encoder, (Variant.PHASE_ENCODER,), "fine-tuned encoder")
    ctx = ctx or StageContext("endolstm")
    spec = encoder.spec.with_variant(Variant.ENDON2N_VANILLA)
    model = transfer_weights(encoder, spec, seed=derive_seed(cfg.seed, ctx.stage, "init"))
    frozen = frozenset(encoder_names(spec))

    def extract(inputs: SequenceInputs) -> SequenceInputs:
        return encode_inputs(model, inputs)

    videos = _map(
        extract, build_inputs(records, spec.variant, s_norm=s_norm, pad_to=cfg.pad_to), ctx.threads
    )
    val = _map(extract, build_inputs(validation, spec.variant, s_norm=s_norm, pad_to=None), ctx.threads)
    return _train_sequence_model(
        model,
        videos,
        cfg,
        ctx,
        frozen=frozen,
        multipliers={name: 1.0 for name in model.names},
        exact=True,
        validate=_phase_validation(val, ctx.threads),
    )


def _pretrain_sequence(
    records: Sequence[SurgeryRecord],
    cfg: TrainConfig,
    source: ParamStore,
    variant: Variant,
    *,
    s_norm: float,
    validation: Sequence[SurgeryRecord],
    frozen: frozenset[str],
    ctx: StageContext,
) -> TrainingResult:
    spec = source.spec.with_variant(variant)
    model = transfer_weights(source, spec, seed=derive_seed(cfg.seed, ctx.stage, "init"))
    with LABEL_MONITOR.sealed(ctx.stage):
        videos = build_inputs(records, variant, s_norm=s_norm, pad_to=cfg.pad_to)
        val = build_inputs(validation, variant, s_norm=s_norm, pad_to=None)
        return _train_sequence_model(
            model,
            videos,
            cfg,
            ctx,
            frozen=frozen,
            validate=_loss_validation(val, ctx.threads),
        )


def pretrain_rsd(
    records: Sequence[SurgeryRecord],
    cfg: TrainConfig,
    progress_encoder: ParamStore | None,
    *,
    s_norm: float = 5.0,
    validation: Sequence[SurgeryRecord] = (),
    ctx: StageContext | None = None,
) -> TrainingResult:
    """RSD + progress multi-task pre-training on unlabeled videos, fc'_prog frozen.

    LSTM inputs are the encoder features, the elapsed-time feature and fc'_prog's output.
    """
    progress_encoder = _require(
        progress_encoder, (Variant.PROGRESS_ENCODER,), "progress-trained encoder"
    )
    return _pretrain_sequence(
        records,
        cfg,
        progress_encoder,
        Variant.RSD_PROGRESS,
        s_norm=s_norm,
        validation=validation,
        frozen=FROZEN_PROGRESS_HEAD,
        ctx=ctx or StageContext("rsd"),
    )


def pretrain_rsdnet(
    records: Sequence[SurgeryRecord],
    cfg: TrainConfig,
    progress_encoder: ParamStore | None,
    *,
    s_norm: float = 5.0,
    validation: Sequence[SurgeryRecord] = (),
    ctx: StageContext | None = None,
) -> TrainingResult:
    """Ablation variant: plain LSTM inputs, elapsed time appended to the LSTM output for fc_rsd."""
    progress_encoder = _require(
        progress_encoder, (Variant.PROGRESS_ENCODER,), "progress-trained encoder"
    )
    return _pretrain_sequence(
        records,
        cfg,
        progress_encoder,
        Variant.RSDNET,
        s_norm=s_norm,
        validation=validation,
        frozen=frozenset(),
        ctx=ctx or StageContext("rsdnet"),
    )
