"""Synthetic surgical workflows and the self-supervised labels derived from them.

Frame features are a block one-hot phase embedding over the first M dimensions plus
i.i.d. Gaussian noise, and an elapsed-time channel at dimension M (noise-free,
elapsed seconds / time_channel_scale). They stand in for CNN features of real frames.
"""

import logging

import numpy as np

from phaseforge.application.seeding import derive_seed
from phaseforge.domain import FramePair, PaddedSequence, SurgeryRecord, WorkflowModel

logger = logging.getLogger(__name__)

_MAX_REJECTIONS = 1000


def _sample_duration(
    rng: np.random.Generator, mean: float, std: float, minimum: float
) -> float:
    """Normal(mean, std) truncated below at ``minimum`` by rejection."""
    if std == 0.0:
        return max(mean, minimum)
    for _ in range(_MAX_REJECTIONS):
        value = rng.normal(mean, std)
        if value >= minimum:
            return float(value)
    return minimum


def sample_phase_frames(model: WorkflowModel, rng: np.random.Generator) -> np.ndarray:
    """Frames per phase, rounded half-up to whole frames; skipped phases get 0."""
    counts = np.zeros(model.num_phases, dtype=np.int64)
    for p in range(model.num_phases):
        seconds = _sample_duration(
            rng,
            model.phase_duration_mean[p],
            model.phase_duration_std[p],
            model.min_phase_duration,
        )
        if p > 0 and model.phase_skip_probability > 0.0:
            if rng.random() < model.phase_skip_probability:
                continue
        counts[p] = max(1, int(np.floor(seconds * model.fps + 0.5)))
    return counts


def generate_surgery(
    model: WorkflowModel, seed: int, video_id: str | None = None
) -> SurgeryRecord:
    """Generate one record. Deterministic for a fixed (model, seed).

    Without phase skipping every phase 1..M gets at least one frame, so T >= M. With
    ``phase_skip_probability > 0`` phases after the first may be missing.
    """
    rng = np.random.default_rng(seed)
    counts = sample_phase_frames(model, rng)
    if model.phase_skip_probability == 0.0 and not np.all(counts > 0):
        raise RuntimeError(f"Sampled phase frame counts {counts.tolist()} leave out a phase.")
    labels = np.repeat(np.arange(1, model.num_phases + 1), counts)
    n_frames = len(labels)
    features = rng.normal(0.0, model.emission_noise_std, size=(n_frames, model.feature_dim))
    features[np.arange(n_frames), labels - 1] += 1.0
    elapsed = np.arange(1, n_frames + 1, dtype=np.float64) / model.fps
    features[:, model.time_channel] = elapsed / model.time_channel_scale
    return SurgeryRecord(
        video_id=video_id or f"video-s{seed}",
        fps=model.fps,
        frames=features,
        phase_labels=labels,
    )


def generate_dataset(model: WorkflowModel, n_videos: int, seed: int) -> list[SurgeryRecord]:
    """Record i is generated from derive_seed(seed, "video", i) and named video-{i:03d}."""
    if n_videos < 1:
        raise ValueError("generate_dataset needs n_videos >= 1.")
    records = [
        generate_surgery(model, derive_seed(seed, "video", i), video_id=f"video-{i:03d}")
        for i in range(n_videos)
    ]
    logger.info(
        "Generated %d synthetic videos (mean length %.1f frames)",
        n_videos,
        np.mean([r.num_frames for r in records]),
    )
    return records


def derive_progress_labels(record: SurgeryRecord) -> np.ndarray:
    """progress[t] = t_el / T with t_el = (t+1)/fps, so the last frame has progress 1."""
    n = record.num_frames
    return np.arange(1, n + 1, dtype=np.float64) / n


def derive_rsd_labels(record: SurgeryRecord, s_norm: float) -> np.ndarray:
    """Remaining duration in minutes divided by s_norm; 0 at the last frame."""
    if s_norm <= 0:
        raise ValueError("derive_rsd_labels needs s_norm > 0.")
    total_min = record.duration_s / 60.0
    elapsed_min = record.elapsed_s() / 60.0
    return (total_min - elapsed_min) / s_norm


def elapsed_time_feature(record: SurgeryRecord, s_norm: float, length: int | None = None) -> np.ndarray:
    """Elapsed minutes / s_norm per frame, the extra LSTM input of the time-aware variants.

    ``length`` extends the ramp past the end of the video for padded sequences.
    """
    n = record.num_frames if length is None else length
    return np.arange(1, n + 1, dtype=np.float64) / record.fps / 60.0 / s_norm


def sample_pair_indices(
    n_frames: int, n_pairs: int, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uniform ordered pairs of distinct indices; returns (index_a, index_b, label)."""
    if n_frames < 2:
        raise ValueError("Frame pairs need a record with at least 2 frames.")
    if n_pairs < 0:
        raise ValueError("n_pairs must be >= 0.")
    rng = np.random.default_rng(seed)
    index_a = rng.integers(0, n_frames, size=n_pairs)
    index_b = rng.integers(0, n_frames - 1, size=n_pairs)
    index_b = index_b + (index_b >= index_a)
    labels = (index_a > index_b).astype(np.int64)
    return index_a, index_b, labels


def sample_frame_pairs(record: SurgeryRecord, n_pairs: int, seed: int) -> list[FramePair]:
    index_a, index_b, labels = sample_pair_indices(record.num_frames, n_pairs, seed)
    frames = record.frames
    return [
        FramePair(
            frame_a=frames[a],
            frame_b=frames[b],
            label=int(y),
            index_a=int(a),
            index_b=int(b),
        )
        for a, b, y in zip(index_a, index_b, labels, strict=True)
    ]


def pad_sequence(record: SurgeryRecord, pad_to: int, *, with_labels: bool = True) -> PaddedSequence:
    """Extend frames with zero vectors up to ``pad_to``; mask marks the real frames.

    Padded label slots hold 0, which is not a PhaseId; the mask excludes them.
    """
    n = record.num_frames
    if pad_to < n:
        raise ValueError(f"pad_to={pad_to} is shorter than the record ({n} frames).")
    features = np.zeros((pad_to, record.feature_dim))
    features[:n] = record.frames
    mask = np.zeros(pad_to)
    mask[:n] = 1.0
    labels = None
    if with_labels:
        labels = np.zeros(pad_to, dtype=np.int64)
        labels[:n] = record.phase_labels
    return PaddedSequence(features=features, mask=mask, num_frames=n, labels=labels)
