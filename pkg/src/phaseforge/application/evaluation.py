"""Causal prediction and phase-recognition metrics.

Accuracy, precision and recall use the raw per-frame predictions. Temporal distance
and noise measure phase boundaries, so ``evaluate_record`` computes them on the
mode-filtered predictions (5 s trailing window by default).
"""

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from sklearn.metrics import precision_recall_fscore_support

from phaseforge.application.dto import RsdEvaluation
from phaseforge.application.layers import sigmoid, softmax
from phaseforge.application.models import (
    OnlineRecognizer,
    phase_encoder_probabilities,
    run_sequence,
    sequence_inputs,
    tempcon_predict,
)
from phaseforge.application.workflow import (
    derive_progress_labels,
    derive_rsd_labels,
    elapsed_time_feature,
)
from phaseforge.domain import (
    LABEL_MONITOR,
    AggregateReport,
    MetricsReport,
    MetricSummary,
    ParamStore,
    PredictionTrace,
    SurgeryRecord,
    TemporalDistances,
    Variant,
)

logger = logging.getLogger(__name__)

DEFAULT_FILTER_WINDOW_S = 5.0


# --- prediction ---


def predict_sequence(
    params: ParamStore, record: SurgeryRecord, *, s_norm: float = 5.0
) -> PredictionTrace:
    """Online phase prediction: the output at frame t only sees frames 0..t."""
    variant = params.spec.variant
    if record.feature_dim != params.spec.input_dim:
        raise ValueError(
            f"Record {record.video_id} has {record.feature_dim}-dim frames, "
            f"model expects {params.spec.input_dim}."
        )
    if variant is Variant.PHASE_ENCODER:
        probs = np.vstack(
            [phase_encoder_probabilities(params, frame[None, :]) for frame in record.frames]
        )
    elif variant.predicts_phase:
        recognizer = OnlineRecognizer(params)
        elapsed = elapsed_time_feature(record, s_norm)
        rows = [
            softmax(recognizer.step(frame, elapsed[t]).phase[0])
            for t, frame in enumerate(record.frames)
        ]
        probs = np.vstack(rows)
    else:
        raise ValueError(f"{variant.value} does not predict phases.")
    return PredictionTrace(
        video_id=record.video_id,
        probabilities=probs,
        labels=probs.argmax(axis=1) + 1,
    )


def predict_rsd(
    params: ParamStore, record: SurgeryRecord, *, s_norm: float = 5.0
) -> tuple[np.ndarray, np.ndarray]:
    """(RSD in minutes, progress in [0, 1]) per frame from an RSD-type model."""
    if params.spec.variant not in (Variant.RSD_PROGRESS, Variant.RSDNET):
        raise ValueError(f"{params.spec.variant.value} does not predict RSD.")
    inputs = sequence_inputs(record, params.spec.variant, s_norm=s_norm, with_labels=False)
    outputs = run_sequence(params, inputs)
    return outputs.rsd * s_norm, sigmoid(outputs.progress)


# --- filtering ---


def _window_frames(window_s: float, fps: float) -> int:
    w = int(np.floor(window_s * fps + 0.5))
    if w < 1:
        raise ValueError(f"Filter window of {window_s} s at {fps} fps is shorter than one frame.")
    return w


def _mode_most_recent(window: np.ndarray) -> int:
    values, counts = np.unique(window, return_counts=True)
    tied = values[counts == counts.max()]
    if len(tied) == 1:
        return int(tied[0])
    # latest occurrence wins among tied phases
    for label in window[::-1]:
        if label in tied:
            return int(label)
    raise AssertionError("unreachable")


def causal_mode_filter(
    labels: np.ndarray, window_s: float, fps: float, *, centered: bool = False
) -> np.ndarray:
    """Mode over a trailing window of round(window_s · fps) frames.

    Ties go to the most recently seen of the tied phases. ``centered`` uses a window
    around t instead (offline use only; it looks ahead).
    """
    labels = np.asarray(labels, dtype=np.int64)
    w = _window_frames(window_s, fps)
    out = np.empty_like(labels)
    n = len(labels)
    for t in range(n):
        if centered:
            lo, hi = max(0, t - w // 2), min(n, t + (w - 1) // 2 + 1)
        else:
            lo, hi = max(0, t - w + 1), t + 1
        out[t] = _mode_most_recent(labels[lo:hi])
    return out


# --- metrics ---


def _check_lengths(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.shape != gt.shape:
        raise ValueError(f"Prediction length {len(pred)} != ground truth length {len(gt)}.")
    if len(gt) == 0:
        raise ValueError("Metrics need at least one frame.")
    return pred, gt


def label_runs(labels: np.ndarray) -> list[tuple[int, int, int]]:
    """Maximal constant runs as (label, start, end) with end exclusive."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        return []
    boundaries = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(labels)]])
    return [(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends, strict=True)]


def accuracy(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_lengths(pred, gt)
    return 100.0 * float(np.count_nonzero(pred == gt)) / len(gt)


def per_phase_precision_recall(
    pred: np.ndarray,
    gt: np.ndarray,
    num_phases: int,
    *,
    undefined_as_zero: bool = False,
) -> tuple[dict[int, float | None], dict[int, float | None], float, float]:
    """Per-phase precision/recall in percent and their averages.

    A phase never predicted has undefined precision; a phase absent from the ground
    truth has undefined recall. Undefined values are None and left out of the averages
    unless ``undefined_as_zero``, which counts undefined precision of a ground-truth
    phase as 0. Phases absent from both sequences never enter an average.
    """
    pred, gt = _check_lengths(pred, gt)
    phases = list(range(1, num_phases + 1))
    p_values, r_values, _, support = precision_recall_fscore_support(
        gt, pred, labels=phases, average=None, zero_division=np.nan
    )
    precision: dict[int, float | None] = {}
    recall: dict[int, float | None] = {}
    for p, p_value, r_value, actual in zip(phases, p_values, r_values, support, strict=True):
        precision[p] = None if np.isnan(p_value) else 100.0 * float(p_value)
        recall[p] = None if np.isnan(r_value) else 100.0 * float(r_value)
        if undefined_as_zero and precision[p] is None and actual:
            precision[p] = 0.0
    defined_p = [v for v in precision.values() if v is not None]
    defined_r = [v for v in recall.values() if v is not None]
    avg_p = float(np.mean(defined_p)) if defined_p else 0.0
    avg_r = float(np.mean(defined_r)) if defined_r else 0.0
    return precision, recall, avg_p, avg_r


def f1(avg_precision: float, avg_recall: float) -> float:
    total = avg_precision + avg_recall
    if total == 0:
        return 0.0
    return 2.0 * avg_precision * avg_recall / total


def temporal_distances(pred: np.ndarray, gt: np.ndarray, fps: float) -> TemporalDistances:
    """Onset distances in seconds for every phase of the ground truth.

    ``first`` compares against the earliest frame predicted as the phase, ``closest``
    against the nearest onset of a predicted run of it. Never-predicted phases get the
    video duration and are listed in ``missed``.
    """
    pred, gt = _check_lengths(pred, gt)
    duration = len(gt) / fps
    runs = label_runs(pred)
    first, closest, missed = {}, {}, set()
    for p in np.unique(gt):
        p = int(p)
        onset = int(np.flatnonzero(gt == p)[0])
        onsets = [s for label, s, _ in runs if label == p]
        if not onsets:
            first[p] = closest[p] = duration
            missed.add(p)
            continue
        first[p] = abs(onsets[0] - onset) / fps
        closest[p] = min(abs(s - onset) for s in onsets) / fps
    return TemporalDistances(first=first, closest=closest, missed=frozenset(missed))


def temporal_distance(pred: np.ndarray, gt: np.ndarray, fps: float, mode: str = "first") -> dict[int, float]:
    distances = temporal_distances(pred, gt, fps)
    if mode == "first":
        return distances.first
    if mode == "closest":
        return distances.closest
    raise ValueError(f"Unknown temporal distance mode {mode!r}; use 'first' or 'closest'.")


def noise_pct(pred: np.ndarray, gt: np.ndarray) -> float:
    """Share of frames inside predicted runs that never overlap the same phase in gt."""
    pred, gt = _check_lengths(pred, gt)
    noisy = sum(e - s for label, s, e in label_runs(pred) if not np.any(gt[s:e] == label))
    return 100.0 * noisy / len(gt)


def evaluate_record(
    trace: PredictionTrace,
    record: SurgeryRecord,
    num_phases: int,
    *,
    filter_window_s: float = DEFAULT_FILTER_WINDOW_S,
    centered_filter: bool = False,
    undefined_as_zero: bool = False,
) -> MetricsReport:
    gt = record.phase_labels
    pred = trace.labels
    precision, recall, avg_p, avg_r = per_phase_precision_recall(
        pred, gt, num_phases, undefined_as_zero=undefined_as_zero
    )
    filtered = causal_mode_filter(pred, filter_window_s, record.fps, centered=centered_filter)
    distances = temporal_distances(filtered, gt, record.fps)
    return MetricsReport(
        video_id=record.video_id,
        accuracy=accuracy(pred, gt),
        precision=precision,
        recall=recall,
        avg_precision=avg_p,
        avg_recall=avg_r,
        f1=f1(avg_p, avg_r),
        temporal_distance_first=distances.first,
        temporal_distance_closest=distances.closest,
        missed_phases=distances.missed,
        noise=noise_pct(filtered, gt),
    )


def evaluate_model(
    params: ParamStore,
    records: Sequence[SurgeryRecord],
    *,
    s_norm: float = 5.0,
    filter_window_s: float = DEFAULT_FILTER_WINDOW_S,
    centered_filter: bool = False,
    undefined_as_zero: bool = False,
    threads: int = 1,
) -> list[MetricsReport]:
    """Per-video reports in input order; videos run on up to ``threads`` workers."""

    def one(record: SurgeryRecord) -> MetricsReport:
        trace = predict_sequence(params, record, s_norm=s_norm)
        return evaluate_record(
            trace,
            record,
            params.spec.num_phases,
            filter_window_s=filter_window_s,
            centered_filter=centered_filter,
            undefined_as_zero=undefined_as_zero,
        )

    if threads <= 1:
        return [one(r) for r in records]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(LABEL_MONITOR.carry(one), records))


# --- aggregation ---


def _summary(values: Sequence[float]) -> MetricSummary:
    arr = np.asarray(values, dtype=np.float64)
    return MetricSummary(mean=float(arr.mean()), std=float(arr.std()))


def _per_phase(dicts: Sequence[dict[int, float | None]], skip=None) -> dict[int, MetricSummary]:
    collected: dict[int, list[float]] = {}
    for i, d in enumerate(dicts):
        for p, v in d.items():
            if v is None or (skip is not None and p in skip[i]):
                continue
            collected.setdefault(p, []).append(v)
    return {p: _summary(vs) for p, vs in sorted(collected.items())}


def aggregate(reports: Sequence[MetricsReport]) -> AggregateReport:
    """Mean ± population std over videos.

    Per-phase values average over the videos where they are defined; temporal
    distances leave out missed phases.
    """
    if not reports:
        raise ValueError("aggregate needs at least one report.")
    names = reports[0].scalars().keys()
    missed = [r.missed_phases for r in reports]
    missed_counts: dict[int, int] = {}
    for m in missed:
        for p in m:
            missed_counts[p] = missed_counts.get(p, 0) + 1
    return AggregateReport(
        n_videos=len(reports),
        scalars={n: _summary([r.scalars()[n] for r in reports]) for n in names},
        precision=_per_phase([r.precision for r in reports]),
        recall=_per_phase([r.recall for r in reports]),
        temporal_distance_first=_per_phase([r.temporal_distance_first for r in reports], missed),
        temporal_distance_closest=_per_phase([r.temporal_distance_closest for r in reports], missed),
        missed_counts=dict(sorted(missed_counts.items())),
    )


def _mean_of_summaries(items: Sequence[MetricSummary]) -> MetricSummary:
    return MetricSummary(
        mean=float(np.mean([s.mean for s in items])),
        std=float(np.mean([s.std for s in items])),
    )


def _merge_per_phase(dicts: Sequence[dict[int, MetricSummary]]) -> dict[int, MetricSummary]:
    keys = sorted({p for d in dicts for p in d})
    return {p: _mean_of_summaries([d[p] for d in dicts if p in d]) for p in keys}


def aggregate_folds(folds: Sequence[AggregateReport]) -> AggregateReport:
    """Second level: mean of fold means, and mean of fold stds."""
    if not folds:
        raise ValueError("aggregate_folds needs at least one fold.")
    missed: dict[int, int] = {}
    for fold in folds:
        for p, c in fold.missed_counts.items():
            missed[p] = missed.get(p, 0) + c
    return AggregateReport(
        n_videos=sum(f.n_videos for f in folds),
        scalars={
            n: _mean_of_summaries([f.scalars[n] for f in folds]) for n in folds[0].scalars
        },
        precision=_merge_per_phase([f.precision for f in folds]),
        recall=_merge_per_phase([f.recall for f in folds]),
        temporal_distance_first=_merge_per_phase([f.temporal_distance_first for f in folds]),
        temporal_distance_closest=_merge_per_phase([f.temporal_distance_closest for f in folds]),
        missed_counts=dict(sorted(missed.items())),
    )


# --- pre-training evaluations ---


def mean_rsd_minutes(records: Sequence[SurgeryRecord]) -> float:
    """Frame-weighted mean RSD in minutes; the constant baseline predictor."""
    values = np.concatenate([derive_rsd_labels(r, 1.0) for r in records])
    return float(values.mean())


def evaluate_rsd(
    params: ParamStore,
    records: Sequence[SurgeryRecord],
    *,
    baseline_rsd_min: float,
    s_norm: float = 5.0,
) -> RsdEvaluation:
    """Per-video MAE of RSD (minutes) and progress, averaged over videos."""
    if not records:
        raise ValueError("evaluate_rsd needs at least one record.")
    rsd_err, prog_err, base_err = [], [], []
    for record in records:
        rsd, progress = predict_rsd(params, record, s_norm=s_norm)
        truth = derive_rsd_labels(record, 1.0)
        rsd_err.append(np.mean(np.abs(rsd - truth)))
        prog_err.append(np.mean(np.abs(progress - derive_progress_labels(record))))
        base_err.append(np.mean(np.abs(baseline_rsd_min - truth)))
    return RsdEvaluation(
        n_videos=len(records),
        rsd_mae_min=float(np.mean(rsd_err)),
        progress_mae=float(np.mean(prog_err)),
        baseline_rsd_mae_min=float(np.mean(base_err)),
    )


def evaluate_pair_order(
    params: ParamStore, frames_a: np.ndarray, frames_b: np.ndarray, labels: np.ndarray
) -> float:
    """Percent of pairs whose temporal order the siamese model gets right."""
    if len(labels) == 0:
        raise ValueError("evaluate_pair_order needs at least one pair.")
    predicted = tempcon_predict(params, frames_a, frames_b)
    return 100.0 * float(np.mean(predicted == np.asarray(labels)))
