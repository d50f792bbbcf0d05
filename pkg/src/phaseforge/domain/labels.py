"""Phase-label access monitor.

Self-supervised stages must never look at manual phase annotations. Every read of
``SurgeryRecord.phase_labels`` goes through ``LABEL_MONITOR``; inside ``sealed()`` such a
read is counted as a violation and raises ``LabelAccessError``.
"""

import threading
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from functools import wraps
from typing import ParamSpec, TypeVar

P = ParamSpec("P")
R = TypeVar("R")


class LabelAccessError(PermissionError):
    """Phase labels were read while sealed (e.g. during self-supervised pre-training)."""

    def __init__(self, video_id: str, stage: str) -> None:
        super().__init__(
            f"Phase labels of video '{video_id}' read during sealed stage '{stage}'."
        )
        self.video_id = video_id
        self.stage = stage


class LabelAccessMonitor:
    """Counts phase-label reads. Sealing is per thread; ``carry`` extends it to worker threads."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._local = threading.local()
        self._reads = 0
        self._violations = 0

    @property
    def reads(self) -> int:
        return self._reads

    @property
    def violations(self) -> int:
        return self._violations

    @property
    def sealed_stage(self) -> str | None:
        stages = getattr(self._local, "stages", None)
        return stages[-1] if stages else None

    def record_read(self, video_id: str) -> None:
        stage = self.sealed_stage
        with self._lock:
            self._reads += 1
            if stage is not None:
                self._violations += 1
        if stage is not None:
            raise LabelAccessError(video_id, stage)

    @contextmanager
    def sealed(self, stage: str) -> Iterator["LabelAccessMonitor"]:
        """Forbid phase-label reads on this thread for the duration of the block."""
        stages = getattr(self._local, "stages", None)
        if stages is None:
            stages = []
            self._local.stages = stages
        stages.append(stage)
        try:
            yield self
        finally:
            stages.pop()

    def carry(self, fn: Callable[P, R]) -> Callable[P, R]:
        """Bind this thread's seal to ``fn`` so worker threads running it stay sealed."""
        stage = self.sealed_stage
        if stage is None:
            return fn

        @wraps(fn)
        def sealed_fn(*args: P.args, **kwargs: P.kwargs) -> R:
            with self.sealed(stage):
                return fn(*args, **kwargs)

        return sealed_fn


LABEL_MONITOR = LabelAccessMonitor()
