"""Network architectures, parameter stores and recurrent state."""

from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Variant(str, Enum):
    """The architectures trained by the pipelines."""

    PHASE_ENCODER = "phase-encoder"
    ENDON2N_VANILLA = "endon2n-vanilla"
    ENDON2N_UPDATED = "endon2n-updated"
    PROGRESS_ENCODER = "progress-encoder"
    RSD_PROGRESS = "rsd-progress"
    TEMPCON = "tempcon"
    RSDNET = "rsdnet"

    @property
    def is_sequence(self) -> bool:
        return self in SEQUENCE_VARIANTS

    @property
    def has_time_inputs(self) -> bool:
        """LSTM input is features ⊕ elapsed time ⊕ predicted progress."""
        return self in (Variant.ENDON2N_UPDATED, Variant.RSD_PROGRESS)

    @property
    def predicts_phase(self) -> bool:
        return self in (Variant.ENDON2N_VANILLA, Variant.ENDON2N_UPDATED)


SEQUENCE_VARIANTS = frozenset(
    {
        Variant.ENDON2N_VANILLA,
        Variant.ENDON2N_UPDATED,
        Variant.RSD_PROGRESS,
        Variant.RSDNET,
    }
)


@dataclass(frozen=True)
class ArchSpec:
    """
    Layer widths for one architecture.
    encoder_widths are the hidden widths of the feedforward encoder; the last one is the
    feature width F.
    """

    input_dim: int
    encoder_widths: tuple[int, ...] = (64, 64)
    lstm_hidden: int = 128
    num_phases: int = 7
    variant: Variant = Variant.ENDON2N_VANILLA

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.input_dim < 1:
            raise ValueError("ArchSpec input_dim must be >= 1.")
        if not self.encoder_widths or any(w < 1 for w in self.encoder_widths):
            raise ValueError("ArchSpec encoder_widths must be a non-empty list of widths >= 1.")
        if self.lstm_hidden < 1:
            raise ValueError("ArchSpec lstm_hidden must be >= 1.")
        if self.num_phases < 2:
            raise ValueError("ArchSpec num_phases must be >= 2.")

    @property
    def feature_dim(self) -> int:
        return self.encoder_widths[-1]

    @property
    def lstm_input_dim(self) -> int:
        return self.feature_dim + (2 if self.variant.has_time_inputs else 0)

    def with_variant(self, variant: Variant) -> "ArchSpec":
        return ArchSpec(
            input_dim=self.input_dim,
            encoder_widths=self.encoder_widths,
            lstm_hidden=self.lstm_hidden,
            num_phases=self.num_phases,
            variant=variant,
        )

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        """Required parameter names and shapes for this variant, in canonical order."""
        shapes: dict[str, tuple[int, ...]] = {}
        fan_in = self.input_dim
        for i, width in enumerate(self.encoder_widths):
            shapes[f"encoder.{i}.W"] = (width, fan_in)
            shapes[f"encoder.{i}.b"] = (width,)
            fan_in = width
        f_dim, h_dim, m = self.feature_dim, self.lstm_hidden, self.num_phases
        v = self.variant
        if v is Variant.PHASE_ENCODER:
            shapes["fc_phase_frame.W"] = (m, f_dim)
            shapes["fc_phase_frame.b"] = (m,)
            return shapes
        if v is Variant.TEMPCON:
            shapes["fc_order.W"] = (2, 2 * f_dim)
            shapes["fc_order.b"] = (2,)
            return shapes
        if v in (Variant.PROGRESS_ENCODER, Variant.ENDON2N_UPDATED, Variant.RSD_PROGRESS):
            shapes["fc_prog_frame.W"] = (1, f_dim)
            shapes["fc_prog_frame.b"] = (1,)
        if v is Variant.PROGRESS_ENCODER:
            return shapes
        shapes["lstm.Wx"] = (4 * h_dim, self.lstm_input_dim)
        shapes["lstm.Wh"] = (4 * h_dim, h_dim)
        shapes["lstm.b"] = (4 * h_dim,)
        if v.predicts_phase:
            shapes["fc_phase.W"] = (m, h_dim)
            shapes["fc_phase.b"] = (m,)
        else:
            rsd_in = h_dim + 1 if v is Variant.RSDNET else h_dim
            shapes["fc_rsd.W"] = (1, rsd_in)
            shapes["fc_rsd.b"] = (1,)
            shapes["fc_prog.W"] = (1, h_dim)
            shapes["fc_prog.b"] = (1,)
        return shapes

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "encoder_widths": list(self.encoder_widths),
            "lstm_hidden": self.lstm_hidden,
            "num_phases": self.num_phases,
            "variant": self.variant.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ArchSpec":
        return cls(
            input_dim=int(data["input_dim"]),
            encoder_widths=tuple(data["encoder_widths"]),
            lstm_hidden=int(data["lstm_hidden"]),
            num_phases=int(data["num_phases"]),
            variant=Variant(data["variant"]),
        )


def encoder_names(spec: ArchSpec) -> tuple[str, ...]:
    return tuple(n for n in spec.parameter_shapes() if n.startswith("encoder."))


def lstm_names() -> tuple[str, ...]:
    return ("lstm.Wx", "lstm.Wh", "lstm.b")


@dataclass(frozen=True, eq=False)
class ParamStore:
    """
    Named float64 parameter arrays for one architecture plus provenance metadata.
    Arrays are read-only; updates produce a new store via ``replace_params``.
    random_init names the parameters that were freshly initialized rather than
    transferred from a pre-trained stage.
    """

    spec: ArchSpec
    params: Mapping[str, np.ndarray]
    seed: int = 0
    stage: str = "init"
    iteration: int = 0
    random_init: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        required = self.spec.parameter_shapes()
        missing = [n for n in required if n not in self.params]
        if missing:
            raise ValueError(
                f"ParamStore for {self.spec.variant.value} is missing {missing}."
            )
        extra = [n for n in self.params if n not in required]
        if extra:
            raise ValueError(
                f"ParamStore for {self.spec.variant.value} has unexpected {extra}."
            )
        frozen: dict[str, np.ndarray] = {}
        for name, shape in required.items():
            array = np.array(self.params[name], dtype=np.float64)
            if array.shape != shape:
                raise ValueError(
                    f"Parameter {name} has shape {array.shape}, expected {shape}."
                )
            if not np.all(np.isfinite(array)):
                raise ValueError(f"Parameter {name} has non-finite values.")
            array.setflags(write=False)
            frozen[name] = array
        object.__setattr__(self, "params", frozen)
        object.__setattr__(self, "random_init", frozenset(self.random_init))
        unknown = self.random_init - set(required)
        if unknown:
            raise ValueError(f"random_init names unknown parameters {sorted(unknown)}.")

    @property
    def arch_tag(self) -> Variant:
        return self.spec.variant

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.params)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def replace_params(
        self,
        params: Mapping[str, np.ndarray],
        *,
        stage: str | None = None,
        iteration: int | None = None,
    ) -> "ParamStore":
        merged = dict(self.params)
        merged.update(params)
        return ParamStore(
            spec=self.spec,
            params=merged,
            seed=self.seed,
            stage=self.stage if stage is None else stage,
            iteration=self.iteration if iteration is None else iteration,
            random_init=self.random_init,
        )

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {n: np.zeros_like(a) for n, a in self.params.items()}

    def equals(self, other: "ParamStore") -> bool:
        """Bit-for-bit equality of spec and every parameter array."""
        return self.spec == other.spec and all(
            n in other.params and np.array_equal(a, other.params[n])
            for n, a in self.params.items()
        )


@dataclass(frozen=True, eq=False)
class LstmState:
    """Hidden and cell vectors carried between LSTM steps; zero at sequence start."""

    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int) -> "LstmState":
        return cls(h=np.zeros(hidden), c=np.zeros(hidden))
