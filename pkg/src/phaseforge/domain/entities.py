"""Domain entities: WorkflowModel, SurgeryRecord, FramePair and PaddedSequence."""

from dataclasses import dataclass, field

import numpy as np

from phaseforge.domain.labels import LABEL_MONITOR

DEFAULT_NUM_PHASES = 7

# Toy 7-phase profile (seconds). Configuration plumbing, not measured durations.
DEFAULT_PHASE_MEANS = (30.0, 90.0, 50.0, 100.0, 40.0, 60.0, 30.0)
DEFAULT_PHASE_STDS = (8.0, 22.0, 12.0, 25.0, 10.0, 15.0, 8.0)


@dataclass(frozen=True)
class WorkflowModel:
    """
    Generative model of a sequential surgical workflow.
    Phases 1..M are emitted in order; the feature dimension at index M is reserved for
    the elapsed-time channel, so feature_dim must leave room for it.
    """

    num_phases: int = DEFAULT_NUM_PHASES
    phase_duration_mean: tuple[float, ...] = DEFAULT_PHASE_MEANS
    phase_duration_std: tuple[float, ...] = DEFAULT_PHASE_STDS
    min_phase_duration: float = 5.0
    feature_dim: int = 16
    emission_noise_std: float = 0.6
    fps: float = 1.0
    phase_skip_probability: float = 0.0
    time_channel_scale: float = 600.0

    def __post_init__(self):
        object.__setattr__(
            self, "phase_duration_mean", tuple(float(v) for v in self.phase_duration_mean)
        )
        object.__setattr__(
            self, "phase_duration_std", tuple(float(v) for v in self.phase_duration_std)
        )
        m = self.num_phases
        if m < 1:
            raise ValueError("WorkflowModel num_phases must be >= 1.")
        if len(self.phase_duration_mean) != m or len(self.phase_duration_std) != m:
            raise ValueError(
                f"WorkflowModel needs {m} duration means and stds, got "
                f"{len(self.phase_duration_mean)} and {len(self.phase_duration_std)}."
            )
        if any(v <= 0 for v in self.phase_duration_mean):
            raise ValueError("WorkflowModel phase duration means must be > 0.")
        if any(v < 0 for v in self.phase_duration_std):
            raise ValueError("WorkflowModel phase duration stds must be >= 0.")
        if self.fps <= 0:
            raise ValueError("WorkflowModel fps must be > 0.")
        if self.min_phase_duration < 1.0 / self.fps:
            raise ValueError("WorkflowModel min_phase_duration must be >= 1/fps.")
        if self.feature_dim < m + 1:
            raise ValueError(
                f"WorkflowModel feature_dim must be >= num_phases + 1 ({m + 1}): "
                "one dimension is reserved for the elapsed-time channel."
            )
        if self.emission_noise_std < 0:
            raise ValueError("WorkflowModel emission_noise_std must be >= 0.")
        if not 0.0 <= self.phase_skip_probability < 1.0:
            raise ValueError("WorkflowModel phase_skip_probability must be in [0, 1).")
        if self.time_channel_scale <= 0:
            raise ValueError("WorkflowModel time_channel_scale must be > 0.")

    @property
    def time_channel(self) -> int:
        return self.num_phases


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class SurgeryRecord:
    """
    One synthetic surgery video at a fixed frame rate.
    Phase labels are 1-based PhaseIds and non-decreasing. A record need not contain
    every phase (skipped phases, loaded data); generated records without phase skipping
    do. Reading ``phase_labels`` is
    reported to the label-access monitor; self-supervised code uses frames and
    timestamps only.
    """

    __slots__ = ("_video_id", "_fps", "_frames", "_labels")

    def __init__(
        self,
        video_id: str,
        fps: float,
        frames: np.ndarray,
        phase_labels: np.ndarray,
    ) -> None:
        video_id = (video_id or "").strip()
        if not video_id:
            raise ValueError("SurgeryRecord video_id must be non-empty.")
        if fps <= 0:
            raise ValueError("SurgeryRecord fps must be > 0.")
        frames = np.array(frames, dtype=np.float64)
        labels = np.array(phase_labels, dtype=np.int64)
        if frames.ndim != 2:
            raise ValueError("SurgeryRecord frames must be a (T, D) array.")
        if labels.ndim != 1 or len(labels) != len(frames):
            raise ValueError(
                f"SurgeryRecord has {len(frames)} frames but {labels.size} labels."
            )
        if len(frames) < 1:
            raise ValueError("SurgeryRecord needs at least one frame.")
        if not np.all(np.isfinite(frames)):
            raise ValueError("SurgeryRecord frames must be finite.")
        if labels.min() < 1:
            raise ValueError("SurgeryRecord phase labels are 1-based.")
        if np.any(np.diff(labels) < 0):
            raise ValueError("SurgeryRecord phase labels must be non-decreasing.")
        self._video_id = video_id
        self._fps = float(fps)
        self._frames = _readonly(frames)
        self._labels = _readonly(labels)

    @property
    def video_id(self) -> str:
        return self._video_id

    @property
    def fps(self) -> float:
        return self._fps

    @property
    def frames(self) -> np.ndarray:
        return self._frames

    @property
    def phase_labels(self) -> np.ndarray:
        LABEL_MONITOR.record_read(self._video_id)
        return self._labels

    @property
    def num_frames(self) -> int:
        return len(self._frames)

    @property
    def feature_dim(self) -> int:
        return self._frames.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_frames / self._fps

    def elapsed_s(self) -> np.ndarray:
        """Elapsed time at every frame; frame t (0-based) has elapsed (t+1)/fps."""
        return np.arange(1, self.num_frames + 1, dtype=np.float64) / self._fps

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SurgeryRecord):
            return NotImplemented
        return (
            self._video_id == other._video_id
            and self._fps == other._fps
            and np.array_equal(self._frames, other._frames)
            and np.array_equal(self._labels, other._labels)
        )

    def __hash__(self) -> int:
        return hash((self._video_id, self.num_frames))

    def __repr__(self) -> str:
        return (
            f"SurgeryRecord(video_id={self._video_id!r}, fps={self._fps}, "
            f"T={self.num_frames}, D={self.feature_dim})"
        )


@dataclass(frozen=True, eq=False)
class FramePair:
    """
    Two frames of one video. label == 0 iff frame_a occurs before frame_b.
    The frame indices are kept so the label can be re-derived independently.
    """

    frame_a: np.ndarray
    frame_b: np.ndarray
    label: int
    index_a: int
    index_b: int

    def __post_init__(self):
        if self.index_a == self.index_b:
            raise ValueError("FramePair frames must come from distinct time steps.")
        expected = 0 if self.index_a < self.index_b else 1
        if self.label != expected:
            raise ValueError(
                f"FramePair label {self.label} contradicts frame order "
                f"({self.index_a}, {self.index_b})."
            )


@dataclass(frozen=True, eq=False)
class PaddedSequence:
    """Frames padded with zero vectors to a fixed length; mask is 1 for real frames."""

    features: np.ndarray
    mask: np.ndarray
    num_frames: int
    labels: np.ndarray | None = field(default=None)

    @property
    def padded_length(self) -> int:
        return len(self.features)
