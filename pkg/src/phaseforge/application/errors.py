"""Errors raised by experiment orchestration."""


class StageError(RuntimeError):
    """A training or evaluation stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"Stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
