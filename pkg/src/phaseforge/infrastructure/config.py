"""Experiment settings: pydantic models, YAML files, environment and CLI overrides.

Config files are flat YAML mappings of dotted keys (``endon2n.alpha: 1.0e-4``); nested
mappings are accepted and flattened. Precedence, lowest first: built-in defaults (the
toy preset), ``configs/paper.yaml`` when paper scale is requested, the config file
(``--config`` or PHASEFORGE_CONFIG), PHASEFORGE_THREADS, ``--set key=value``, ``--seed``.
"""

import hashlib
import json
import os
from collections.abc import Mapping, Sequence
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from phaseforge.application.experiment_service import STAGES, ProtocolConfig
from phaseforge.domain import (
    ArchSpec,
    OptimizerKind,
    Pipeline,
    PretrainMode,
    SweepSpec,
    TrainConfig,
    Variant,
    WorkflowModel,
)
from phaseforge.domain.entities import DEFAULT_PHASE_MEANS, DEFAULT_PHASE_STDS


class ConfigError(ValueError):
    """Invalid or unknown configuration keys or values."""


def _repo_root() -> Path:
    """Return repo root (parent of src)."""
    return Path(__file__).resolve().parent.parent.parent.parent


def configs_dir() -> Path:
    return _repo_root() / "configs"


class _Settings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class WorkflowSettings(_Settings):
    num_videos: int = Field(36, ge=1)
    num_phases: int = 7
    phase_duration_mean: tuple[float, ...] = DEFAULT_PHASE_MEANS
    phase_duration_std: tuple[float, ...] = DEFAULT_PHASE_STDS
    min_phase_duration: float = 5.0
    feature_dim: int = 16
    emission_noise_std: float = 0.6
    fps: float = 1.0
    phase_skip_probability: float = 0.0
    time_channel_scale: float = 600.0


class ArchSettings(_Settings):
    encoder_widths: tuple[int, ...] = (32, 32)
    lstm_hidden: int = 128


class StageSettings(_Settings):
    optimizer: OptimizerKind = OptimizerKind.SGD
    iterations: int = 1000
    alpha: float = 1e-3
    step_size: int | None = None
    gamma: float = 1.0
    batch_size: int = 50
    subseq_len: int = 50
    pad_to: int | None = None
    weight_decay: float = 5e-4
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    lr_multiplier_random_layers: float = 10.0
    epochs: float | None = None


TOY_STAGES: dict[str, StageSettings] = {
    "phase_encoder": StageSettings(
        alpha=1e-2, iterations=50000, step_size=20000, gamma=0.1, batch_size=50, epochs=20
    ),
    "progress_encoder": StageSettings(
        alpha=1e-2, iterations=50000, step_size=15000, gamma=0.1, batch_size=64, epochs=10
    ),
    "endon2n": StageSettings(
        optimizer=OptimizerKind.ADAM,
        alpha=5e-4,
        iterations=8000,
        step_size=2000,
        gamma=0.5,
        subseq_len=50,
        pad_to=600,
        epochs=40,
    ),
    "endolstm": StageSettings(
        alpha=1e-2, iterations=30000, step_size=10000, gamma=0.1, pad_to=600, epochs=40
    ),
    "rsd": StageSettings(
        alpha=1e-3,
        iterations=8000,
        step_size=2000,
        gamma=0.5,
        subseq_len=50,
        pad_to=600,
        weight_decay=1e-3,
        epochs=20,
    ),
    "tempcon": StageSettings(alpha=5e-3, iterations=50000, batch_size=160, epochs=5),
}


class ProtocolSettings(_Settings):
    folds: int = Field(2, ge=1)
    n_train: int = Field(24, ge=1)
    n_val: int = Field(4, ge=0)
    n_test: int = Field(8, ge=1)
    fractions: tuple[float, ...] = (25.0, 50.0, 100.0)
    default_subsets: int = 2
    subsets_per_fraction: dict[float, int] = Field(default_factory=dict)
    modes: tuple[PretrainMode, ...] = (PretrainMode.NONE, PretrainMode.RSD)
    pipeline: Pipeline = Pipeline.ENDON2N
    pretrain_amounts: tuple[int, ...] = (0, 6, 12, 18)
    n_finetune: int = 6
    ablation_folds: tuple[int, ...] | None = None
    ablation_labeled: tuple[int, ...] | None = None
    s_norm: float = 5.0
    pairs_per_video: int = 2000
    finetune_fraction: float = 0.75
    filter_window_s: float = 5.0
    centered_filter: bool = False
    undefined_as_zero: bool = False
    log_every: int = 100


class ExperimentSettings(_Settings):
    seed: int = 0
    threads: int = Field(1, ge=1)
    workflow: WorkflowSettings = Field(default_factory=WorkflowSettings)
    arch: ArchSettings = Field(default_factory=ArchSettings)
    protocol: ProtocolSettings = Field(default_factory=ProtocolSettings)
    phase_encoder: StageSettings = TOY_STAGES["phase_encoder"]
    progress_encoder: StageSettings = TOY_STAGES["progress_encoder"]
    endon2n: StageSettings = TOY_STAGES["endon2n"]
    endolstm: StageSettings = TOY_STAGES["endolstm"]
    rsd: StageSettings = TOY_STAGES["rsd"]
    tempcon: StageSettings = TOY_STAGES["tempcon"]

    # --- conversion to domain objects ---

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def workflow_model(self) -> WorkflowModel:
        data = self.workflow.model_dump()
        data.pop("num_videos")
        return _domain(WorkflowModel, **data)

    def arch_spec(self, variant: Variant = Variant.ENDON2N_VANILLA) -> ArchSpec:
        return _domain(
            ArchSpec,
            input_dim=self.workflow.feature_dim,
            encoder_widths=self.arch.encoder_widths,
            lstm_hidden=self.arch.lstm_hidden,
            num_phases=self.workflow.num_phases,
            variant=variant,
        )

    def train_config(self, stage: str) -> TrainConfig:
        if stage not in STAGES:
            raise ConfigError(f"Unknown stage {stage!r}; expected one of {STAGES}.")
        return _domain(TrainConfig, seed=self.seed, **getattr(self, stage).model_dump())

    def protocol_config(self) -> ProtocolConfig:
        p = self.protocol
        return _domain(
            ProtocolConfig,
            arch=self.arch_spec(),
            stages={s: self.train_config(s) for s in STAGES},
            s_norm=p.s_norm,
            pairs_per_video=p.pairs_per_video,
            finetune_fraction=p.finetune_fraction,
            filter_window_s=p.filter_window_s,
            centered_filter=p.centered_filter,
            undefined_as_zero=p.undefined_as_zero,
            seed=self.seed,
            threads=self.threads,
            log_every=p.log_every,
        )

    def sweep_spec(self) -> SweepSpec:
        p = self.protocol
        return _domain(
            SweepSpec,
            fractions=p.fractions,
            default_subsets=p.default_subsets,
            subsets_per_fraction=dict(p.subsets_per_fraction),
            modes=p.modes,
            pretrain_amounts=p.pretrain_amounts,
        )


def _domain(cls, **kwargs):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{cls.__name__}: {e}") from e


# --- loading ---


def flatten(data: Mapping, prefix: str = "") -> dict[str, object]:
    """{"a": {"b": 1}} -> {"a.b": 1}. Stops at mappings whose keys are not strings."""
    flat: dict[str, object] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping) and value and all(isinstance(k, str) for k in value):
            flat.update(flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def _nest(flat: Mapping[str, object]) -> dict:
    nested: dict = {}
    for dotted, value in flat.items():
        node = nested
        *parents, leaf = dotted.split(".")
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"Config key {dotted!r} conflicts with {part!r}.")
            node = child
        node[leaf] = value
    return nested


def read_config_file(path: Path) -> dict[str, object]:
    """Flat dotted-key mapping from a YAML file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file {path} is not valid YAML: {e}") from e
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file {path} must be a mapping of keys to values.")
    return flatten(raw)


def parse_override(item: str) -> tuple[str, object]:
    """'endon2n.alpha=1e-4' -> ("endon2n.alpha", 0.0001); values are parsed as YAML."""
    key, sep, value = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"Override {item!r} is not of the form key=value.")
    try:
        parsed = yaml.safe_load(value)
    except yaml.YAMLError as e:
        raise ConfigError(f"Override {item!r} has an unparsable value: {e}") from e
    return key, parsed


def get_config_path() -> Path | None:
    """Return PHASEFORGE_CONFIG as a path, if set."""
    path = os.environ.get("PHASEFORGE_CONFIG", "").strip()
    return Path(path).resolve() if path else None


def build_settings(flat: Mapping[str, object]) -> ExperimentSettings:
    try:
        return ExperimentSettings.model_validate(_nest(flat))
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"Invalid configuration: {problems}") from e


def load_settings(
    path: Path | None = None,
    *,
    paper_scale: bool = False,
    overrides: Sequence[str] = (),
    seed: int | None = None,
) -> ExperimentSettings:
    """Resolve settings with the documented precedence."""
    flat: dict[str, object] = {}
    if paper_scale:
        flat.update(read_config_file(configs_dir() / "paper.yaml"))
    path = path or get_config_path()
    if path is not None:
        flat.update(read_config_file(path))
    threads = os.environ.get("PHASEFORGE_THREADS", "").strip()
    if threads:
        try:
            flat["threads"] = int(threads)
        except ValueError as e:
            raise ConfigError(f"PHASEFORGE_THREADS={threads!r} is not an integer.") from e
    flat.update(parse_override(item) for item in overrides)
    if seed is not None:
        flat["seed"] = seed
    settings = build_settings(flat)
    for stage in STAGES:
        settings.train_config(stage)
    return settings
