"""Cross-validation protocol: folds, annotation subsets, stage chains and sweeps.

A cell is one (fold, pipeline, pre-training mode, labeled subset). Pre-training uses
every training video of the fold (or a given pool) and never reads phase labels; it
is cached per (fold, mode, pool) so cells of a sweep share it. All randomness derives
from the root seed, so any cell can be rerun on its own.
"""

import logging
import threading
from collections.abc import Iterator, Mapping, Sequence
from concurrent.futures import Future, ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from phaseforge.application.dto import (
    DeltaRow,
    FoldResult,
    ResultsTable,
    SummaryRow,
    SweepRow,
)
from phaseforge.application.errors import StageError
from phaseforge.application.evaluation import aggregate, evaluate_model
from phaseforge.application.layers import init_params
from phaseforge.application.ports import CheckpointRepository, TrainingLog
from phaseforge.application.seeding import derive_seed
from phaseforge.application.training import (
    StageContext,
    labeled_frames,
    pretrain_rsd,
    pretrain_rsdnet,
    pretrain_tempcon,
    sample_pair_arrays,
    train_endolstm,
    train_endon2n,
    train_phase_encoder,
    train_progress_encoder,
)
from phaseforge.application.transfer import transfer_weights
from phaseforge.domain import (
    ArchSpec,
    FoldSpec,
    ParamStore,
    Pipeline,
    PretrainMode,
    SurgeryRecord,
    SweepSpec,
    TrainConfig,
    Variant,
)

logger = logging.getLogger(__name__)

STAGES = ("phase_encoder", "progress_encoder", "endon2n", "endolstm", "rsd", "tempcon")


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything a cell needs besides the data: architecture, stage configs, seeds."""

    arch: ArchSpec
    stages: Mapping[str, TrainConfig]
    s_norm: float = 5.0
    pairs_per_video: int = 2000
    finetune_fraction: float = 0.75
    filter_window_s: float = 5.0
    centered_filter: bool = False
    undefined_as_zero: bool = False
    seed: int = 0
    threads: int = 1
    log_every: int = 100

    def __post_init__(self):
        missing = [s for s in STAGES if s not in self.stages]
        if missing:
            raise ValueError(f"ProtocolConfig is missing stage configs {missing}.")
        if self.s_norm <= 0:
            raise ValueError("ProtocolConfig s_norm must be > 0.")
        if not 0 < self.finetune_fraction <= 1:
            raise ValueError("ProtocolConfig finetune_fraction must be in (0, 1].")
        if self.pairs_per_video < 1:
            raise ValueError("ProtocolConfig pairs_per_video must be >= 1.")

    def stage(self, name: str, seed: int) -> TrainConfig:
        return replace(self.stages[name], seed=derive_seed(seed, name))


# --- subsets and folds ---


def _sample_size(n: int, fraction: float) -> int:
    if not 0 < fraction <= 100:
        raise ValueError(f"Fraction {fraction} is outside (0, 100].")
    return max(1, int(np.floor(n * fraction / 100.0 + 0.5)))


def duration_quartiles(train_ids: Sequence[str], durations: Mapping[str, float]) -> list[list[str]]:
    """Ids sorted by (duration, id) and split into four near-equal quartiles."""
    ordered = sorted(train_ids, key=lambda vid: (durations[vid], vid))
    return [list(chunk) for chunk in np.array_split(np.array(ordered, dtype=object), 4)]


def stratified_sample(
    train_ids: Sequence[str], durations: Mapping[str, float], size: int, seed: int
) -> tuple[str, ...]:
    """``size`` ids with per-quartile counts differing by at most one.

    The remainder goes to quartiles picked by the seeded generator.
    """
    if size > len(train_ids):
        raise ValueError(f"Cannot sample {size} videos from a pool of {len(train_ids)}.")
    rng = np.random.default_rng(seed)
    quartiles = duration_quartiles(train_ids, durations)
    counts = [min(size // 4, len(q)) for q in quartiles]
    while sum(counts) < size:
        open_q = [i for i, q in enumerate(quartiles) if counts[i] < len(q)]
        lowest = min(counts[i] for i in open_q)
        candidates = [i for i in open_q if counts[i] == lowest]
        counts[int(rng.choice(candidates))] += 1
    chosen: set[str] = set()
    for quartile, k in zip(quartiles, counts, strict=True):
        if k:
            chosen.update(rng.choice(np.array(quartile, dtype=object), size=k, replace=False))
    return tuple(vid for vid in train_ids if vid in chosen)


def subsample_annotated(
    train_ids: Sequence[str], durations: Mapping[str, float], fraction: float, seed: int
) -> tuple[str, ...]:
    """Labeled subset of ``fraction`` percent, stratified by surgery-duration quartile."""
    size = _sample_size(len(train_ids), fraction)
    if size == len(train_ids):
        return tuple(train_ids)
    return stratified_sample(train_ids, durations, size, seed)


def split_finetune_pool(subset_ids: Sequence[str], seed: int, fraction: float = 0.75) -> tuple[str, ...]:
    """round(fraction · n) ids for encoder fine-tuning, half-up; at least one."""
    n = len(subset_ids)
    if n == 0:
        raise ValueError("split_finetune_pool needs a non-empty subset.")
    k = max(1, int(np.floor(fraction * n + 0.5)))
    rng = np.random.default_rng(seed)
    picked = set(rng.choice(np.array(subset_ids, dtype=object), size=k, replace=False))
    return tuple(vid for vid in subset_ids if vid in picked)


def make_folds(
    ids: Sequence[str], n_folds: int, n_train: int, n_val: int, n_test: int, seed: int
) -> list[FoldSpec]:
    """Folds over one seeded permutation: fold k tests on the k-th block of ``n_test`` ids."""
    ids = list(ids)
    if n_train + n_val + n_test > len(ids):
        raise ValueError(
            f"A fold needs {n_train}+{n_val}+{n_test} videos, the dataset has {len(ids)}."
        )
    if n_folds < 1:
        raise ValueError("make_folds needs n_folds >= 1.")
    if n_folds * n_test > len(ids):
        logger.warning("Test sets of %d folds overlap: %d videos only", n_folds, len(ids))
    perm = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
    folds = []
    for k in range(n_folds):
        start = (k * n_test) % len(perm)
        rotated = perm[start:] + perm[:start]
        folds.append(
            FoldSpec(
                fold_id=k,
                test_ids=tuple(rotated[:n_test]),
                val_ids=tuple(rotated[n_test : n_test + n_val]),
                train_ids=tuple(rotated[n_test + n_val : n_test + n_val + n_train]),
            )
        )
    return folds


@contextmanager
def stage_guard(stage: str) -> Iterator[None]:
    """Re-raise any failure inside the block as a StageError naming ``stage``."""
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc


@dataclass(frozen=True, eq=False)
class Pretrained:
    """Output of a self-supervised pre-training chain."""

    mode: PretrainMode
    params: ParamStore
    pretrain_ids: tuple[str, ...]
    checkpoints: tuple[str, ...] = ()
    arch_tags: dict[str, str] = field(default_factory=dict)


class ExperimentService:
    """Runs cells of the cross-validation protocol over an in-memory dataset."""

    def __init__(
        self,
        records: Sequence[SurgeryRecord],
        config: ProtocolConfig,
        *,
        checkpoints: CheckpointRepository | None = None,
        log: TrainingLog | None = None,
    ) -> None:
        self._records = {r.video_id: r for r in records}
        if len(self._records) != len(records):
            raise ValueError("Duplicate video ids in the dataset.")
        self._config = config
        self._checkpoints = checkpoints
        self._log = log
        self._cache: dict[tuple, Future[Pretrained]] = {}
        self._cache_lock = threading.Lock()

    @property
    def config(self) -> ProtocolConfig:
        return self._config

    def durations(self) -> dict[str, float]:
        return {vid: r.duration_s for vid, r in self._records.items()}

    def records(self, ids: Sequence[str]) -> list[SurgeryRecord]:
        return [self._records[vid] for vid in ids]

    def _ctx(self, cell: str, stage: str) -> StageContext:
        return StageContext(
            stage=f"{cell}.{stage}" if cell else stage,
            checkpoints=self._checkpoints,
            log=self._log,
            log_every=self._config.log_every,
            threads=self._config.threads,
        )

    def _spec(self, variant: Variant) -> ArchSpec:
        return self._config.arch.with_variant(variant)

    # --- pre-training ---

    def pretrain(
        self, fold: FoldSpec, mode: PretrainMode, pretrain_ids: Sequence[str] | None = None
    ) -> Pretrained | None:
        """Self-supervised chain of ``mode`` on ``pretrain_ids`` (default: fold training set)."""
        mode = PretrainMode(mode)
        if mode is PretrainMode.NONE:
            return None
        pool = tuple(fold.train_ids if pretrain_ids is None else pretrain_ids)
        forbidden = set(pool) & (set(fold.test_ids) | set(fold.val_ids))
        if forbidden:
            raise ValueError(f"Pre-training pool includes held-out videos {sorted(forbidden)}.")
        key = (fold.fold_id, mode, pool)
        with self._cache_lock:
            future = self._cache.get(key)
            owner = future is None
            if owner:
                future = self._cache[key] = Future()
        if owner:
            try:
                future.set_result(self._run_pretraining(fold.fold_id, mode, pool))
            except BaseException as exc:
                with self._cache_lock:
                    del self._cache[key]
                future.set_exception(exc)
                raise
        return future.result()

    def _run_pretraining(self, fold_id: int, mode: PretrainMode, pool: tuple[str, ...]) -> Pretrained:
        cfg = self._config
        seed = derive_seed(cfg.seed, "pretrain", fold_id, mode.value, len(pool))
        cell = f"fold{fold_id}.{mode.value}.n{len(pool)}"
        records = self.records(pool)
        logger.info("Pre-training %s on %d videos (fold %d)", mode.value, len(pool), fold_id)
        checkpoints: list[str] = []
        tags: dict[str, str] = {}
        if mode is PretrainMode.TEMPCON:
            with stage_guard("tempcon"):
                pairs = sample_pair_arrays(records, cfg.pairs_per_video, derive_seed(seed, "pairs"))
                init = init_params(self._spec(Variant.TEMPCON), derive_seed(seed, "tempcon-init"))
                result = pretrain_tempcon(
                    pairs, cfg.stage("tempcon", seed), init, ctx=self._ctx(cell, "tempcon")
                )
            checkpoints += result.checkpoints
            tags["tempcon"] = result.params.arch_tag.value
            return Pretrained(mode, result.params, pool, tuple(checkpoints), tags)

        with stage_guard("progress_encoder"):
            init = init_params(
                self._spec(Variant.PROGRESS_ENCODER), derive_seed(seed, "progress-init")
            )
            progress = train_progress_encoder(
                records,
                cfg.stage("progress_encoder", seed),
                init,
                ctx=self._ctx(cell, "progress_encoder"),
            )
        checkpoints += progress.checkpoints
        tags["progress_encoder"] = progress.params.arch_tag.value
        stage = "rsd" if mode is PretrainMode.RSD else "rsdnet"
        run = pretrain_rsd if mode is PretrainMode.RSD else pretrain_rsdnet
        with stage_guard(stage):
            result = run(
                records,
                cfg.stage("rsd", seed),
                progress.params,
                s_norm=cfg.s_norm,
                ctx=self._ctx(cell, stage),
            )
        checkpoints += result.checkpoints
        tags[stage] = result.params.arch_tag.value
        return Pretrained(mode, result.params, pool, tuple(checkpoints), tags)

    # --- one cell ---

    def run_fold(
        self,
        fold: FoldSpec,
        pipeline: Pipeline = Pipeline.ENDON2N,
        mode: PretrainMode = PretrainMode.NONE,
        *,
        labeled_ids: Sequence[str] | None = None,
        pretrain_ids: Sequence[str] | None = None,
        cell_seed: int | None = None,
        name: str | None = None,
    ) -> FoldResult:
        """Train the stage chain of ``mode`` and evaluate on the fold's test videos.

        ``name`` prefixes the cell's checkpoint keys; sweeps pass one per cell.
        """
        pipeline, mode = Pipeline(pipeline), PretrainMode(mode)
        cfg = self._config
        fold.check_subset_of(set(self._records))
        labeled = tuple(fold.train_ids if labeled_ids is None else labeled_ids)
        if set(labeled) & (set(fold.test_ids) | set(fold.val_ids)):
            raise ValueError("Labeled training videos overlap the fold's held-out videos.")
        seed = cell_seed if cell_seed is not None else derive_seed(cfg.seed, "cell", fold.fold_id)
        cell = name or f"fold{fold.fold_id}.{mode.value}.{pipeline.value}.l{len(labeled)}"
        logger.info("Running %s", cell)

        pre = self.pretrain(fold, mode, pretrain_ids)
        checkpoints = list(pre.checkpoints) if pre else []
        tags = dict(pre.arch_tags) if pre else {}
        validation = self.records(fold.val_ids)

        finetune_ids = split_finetune_pool(
            labeled, derive_seed(seed, "finetune-pool"), cfg.finetune_fraction
        )
        phase_spec = self._spec(Variant.PHASE_ENCODER)
        with stage_guard("phase_encoder"):
            if pre is None:
                init = init_params(phase_spec, derive_seed(seed, "phase-init"))
            else:
                init = transfer_weights(pre.params, phase_spec, seed=derive_seed(seed, "phase-init"))
            frames, labels = labeled_frames(self.records(finetune_ids))
            phase = train_phase_encoder(
                frames,
                labels,
                cfg.stage("phase_encoder", seed),
                init,
                validation=labeled_frames(validation) if validation else None,
                ctx=self._ctx(cell, "phase_encoder"),
            )
        checkpoints += phase.checkpoints
        tags["phase_encoder"] = phase.params.arch_tag.value

        labeled_records = self.records(labeled)
        if pipeline is Pipeline.ENDOLSTM:
            with stage_guard("endolstm"):
                final = train_endolstm(
                    labeled_records,
                    cfg.stage("endolstm", seed),
                    phase.params,
                    s_norm=cfg.s_norm,
                    validation=validation,
                    ctx=self._ctx(cell, "endolstm"),
                )
            tags["endolstm"] = final.params.arch_tag.value
        else:
            with stage_guard("endon2n"):
                init = self._sequence_init(pre, phase.params, seed)
                final = train_endon2n(
                    labeled_records,
                    cfg.stage("endon2n", seed),
                    init,
                    s_norm=cfg.s_norm,
                    validation=validation,
                    ctx=self._ctx(cell, "endon2n"),
                )
            tags["endon2n"] = final.params.arch_tag.value
        checkpoints += final.checkpoints

        with stage_guard("evaluate"):
            per_video = evaluate_model(
                final.params,
                self.records(fold.test_ids),
                s_norm=cfg.s_norm,
                filter_window_s=cfg.filter_window_s,
                centered_filter=cfg.centered_filter,
                undefined_as_zero=cfg.undefined_as_zero,
                threads=cfg.threads,
            )
            summary = aggregate(per_video)
        logger.info(
            "%s: test accuracy %.2f%% ± %.2f, F1 %.2f%%",
            cell,
            summary.accuracy,
            summary.scalars["accuracy"].std,
            summary.f1,
        )
        return FoldResult(
            fold_id=fold.fold_id,
            pipeline=pipeline,
            mode=mode,
            labeled_ids=labeled,
            pretrain_ids=pre.pretrain_ids if pre else (),
            per_video=tuple(per_video),
            aggregate=summary,
            arch_tags=tags,
            checkpoints=tuple(checkpoints),
        )

    def _sequence_init(self, pre: Pretrained | None, phase: ParamStore, seed: int) -> ParamStore:
        """EndoN2N initialization: pre-trained LSTM where available, fine-tuned encoder on top."""
        init_seed = derive_seed(seed, "endon2n-init")
        if pre is None or pre.mode is PretrainMode.TEMPCON:
            return transfer_weights(phase, self._spec(Variant.ENDON2N_VANILLA), seed=init_seed)
        variant = Variant.ENDON2N_UPDATED if pre.mode is PretrainMode.RSD else Variant.ENDON2N_VANILLA
        from_pretraining = transfer_weights(pre.params, self._spec(variant), seed=init_seed)
        return transfer_weights(phase, self._spec(variant), seed=init_seed, into=from_pretraining)

    # --- sweeps ---

    def _run_cells(self, cells: list[dict]) -> list[FoldResult]:
        threads = self._config.threads
        if threads <= 1 or len(cells) <= 1:
            return [self.run_fold(**c) for c in cells]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda c: self.run_fold(**c), cells))

    def run_annotation_sweep(
        self,
        folds: Sequence[FoldSpec],
        sweep: SweepSpec,
        *,
        pipeline: Pipeline = Pipeline.ENDON2N,
        kind: str = "annotation",
    ) -> ResultsTable:
        """Every (fold, fraction, subset, mode); pre-training always uses all training videos."""
        durations = self.durations()
        cells, keys = [], []
        for fold in folds:
            for fraction in sweep.fractions:
                for subset in range(sweep.subsets_for(fraction)):
                    subset_seed = derive_seed(self._config.seed, "subset", fold.fold_id, fraction, subset)
                    labeled = subsample_annotated(fold.train_ids, durations, fraction, subset_seed)
                    for mode in sweep.modes:
                        keys.append((fold.fold_id, fraction, subset, mode))
                        cells.append(
                            dict(
                                fold=fold,
                                pipeline=pipeline,
                                mode=mode,
                                labeled_ids=labeled,
                                cell_seed=derive_seed(subset_seed, "cell"),
                                name=(
                                    f"fold{fold.fold_id}.{mode.value}.{pipeline.value}"
                                    f".p{fraction:g}.s{subset}"
                                ),
                            )
                        )
        self._warm_cache(folds, sweep.modes)
        results = self._run_cells(cells)
        rows = [
            _row(kind, res, fraction, subset, len(res.pretrain_ids))
            for (_, fraction, subset, _), res in zip(keys, results, strict=True)
        ]
        summary = summarize(rows)
        return ResultsTable(kind=kind, rows=tuple(rows), summary=summary, deltas=deltas(summary))

    def run_ablation(
        self,
        folds: Sequence[FoldSpec],
        fractions: Sequence[float] = (25.0, 50.0, 100.0),
        subsets: int = 2,
        *,
        fold_ids: Sequence[int] | None = None,
        n_labeled: Sequence[int] | None = None,
    ) -> ResultsTable:
        """RSD pre-training with the updated EndoN2N vs RSDNet-style pre-training.

        ``fold_ids`` restricts the run to those folds. ``n_labeled`` gives the labeled
        subsets as video counts, which replace ``fractions``.
        """
        if fold_ids is not None:
            known = {f.fold_id for f in folds}
            unknown = sorted(set(fold_ids) - known)
            if unknown:
                raise ValueError(f"Ablation folds {unknown} not among {sorted(known)}.")
            folds = [f for f in folds if f.fold_id in set(fold_ids)]
        if n_labeled is not None:
            fractions = _count_fractions(folds, n_labeled)
        sweep = SweepSpec(
            fractions=tuple(fractions),
            default_subsets=subsets,
            subsets_per_fraction={},
            modes=(PretrainMode.RSD, PretrainMode.RSDNET),
        )
        return self.run_annotation_sweep(folds, sweep, kind="ablation")

    def run_pretrain_amount_sweep(
        self,
        folds: Sequence[FoldSpec],
        amounts: Sequence[int],
        *,
        n_finetune: int,
        pipeline: Pipeline = Pipeline.ENDON2N,
    ) -> ResultsTable:
        """Fixed labeled set; RSD pre-training on growing, disjoint pools of the other videos."""
        durations = self.durations()
        rows = []
        for fold in folds:
            fold_seed = derive_seed(self._config.seed, "amount", fold.fold_id)
            finetune = stratified_sample(fold.train_ids, durations, n_finetune, fold_seed)
            rest = [vid for vid in fold.train_ids if vid not in set(finetune)]
            order = np.random.default_rng(derive_seed(fold_seed, "pool")).permutation(len(rest))
            rest = [rest[i] for i in order]
            for amount in amounts:
                if amount > len(rest):
                    raise ValueError(
                        f"Fold {fold.fold_id}: {amount} pre-training videos requested, "
                        f"{len(rest)} left after the fine-tune set."
                    )
                pool = tuple(rest[:amount])
                if set(pool) & set(finetune):
                    raise ValueError("Pre-training and fine-tuning pools must be disjoint.")
                mode = PretrainMode.RSD if amount else PretrainMode.NONE
                res = self.run_fold(
                    fold,
                    pipeline,
                    mode,
                    labeled_ids=finetune,
                    pretrain_ids=pool if amount else None,
                    cell_seed=derive_seed(fold_seed, "cell"),
                    name=f"fold{fold.fold_id}.{mode.value}.{pipeline.value}.a{amount}",
                )
                fraction = 100.0 * len(finetune) / len(fold.train_ids)
                rows.append(_row("pretrain-amount", res, fraction, 0, amount))
        summary = summarize(rows, by_amount=True)
        return ResultsTable(
            kind="pretrain-amount",
            rows=tuple(rows),
            summary=summary,
            trend=amount_trend(summary),
        )

    def _warm_cache(self, folds: Sequence[FoldSpec], modes: Sequence[PretrainMode]) -> None:
        jobs = [(f, m) for f in folds for m in modes if m is not PretrainMode.NONE]
        threads = self._config.threads
        if threads <= 1 or len(jobs) <= 1:
            for fold, mode in jobs:
                self.pretrain(fold, mode)
            return
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda job: self.pretrain(*job), jobs))


def _count_fractions(folds: Sequence[FoldSpec], counts: Sequence[int]) -> tuple[float, ...]:
    sizes = {len(f.train_ids) for f in folds}
    if len(sizes) != 1:
        raise ValueError(f"Labeled counts need folds of one training size, got {sorted(sizes)}.")
    n_train = sizes.pop()
    for count in counts:
        if not 0 < count <= n_train:
            raise ValueError(f"{count} labeled videos requested from {n_train} training videos.")
    return tuple(100.0 * count / n_train for count in counts)


# --- tables ---


def _row(kind: str, res: FoldResult, fraction: float, subset: int, n_pretrain: int) -> SweepRow:
    scalars = res.aggregate.scalars
    return SweepRow(
        kind=kind,
        fold_id=res.fold_id,
        pipeline=res.pipeline.value,
        mode=res.mode.value,
        fraction=float(fraction),
        subset=subset,
        n_labeled=len(res.labeled_ids),
        n_pretrain=n_pretrain,
        accuracy=scalars["accuracy"].mean,
        f1=scalars["f1"].mean,
        precision=scalars["avg_precision"].mean,
        recall=scalars["avg_recall"].mean,
    )


def summarize(rows: Sequence[SweepRow], *, by_amount: bool = False) -> tuple[SummaryRow, ...]:
    """Average over subsets within each fold, then over folds."""
    groups: dict[tuple, dict[int, list[SweepRow]]] = {}
    for row in rows:
        key = (row.mode, row.fraction, row.n_pretrain if by_amount else 0)
        groups.setdefault(key, {}).setdefault(row.fold_id, []).append(row)
    summary = []
    for (mode, fraction, n_pretrain), per_fold in groups.items():
        acc = [np.mean([r.accuracy for r in rs]) for rs in per_fold.values()]
        f1s = [np.mean([r.f1 for r in rs]) for rs in per_fold.values()]
        summary.append(
            SummaryRow(
                mode=mode,
                fraction=fraction,
                n_pretrain=n_pretrain,
                accuracy_mean=float(np.mean(acc)),
                accuracy_std=float(np.std(acc)),
                f1_mean=float(np.mean(f1s)),
                f1_std=float(np.std(f1s)),
            )
        )
    return tuple(summary)


def deltas(summary: Sequence[SummaryRow]) -> tuple[DeltaRow, ...]:
    """Each pre-training mode at fraction f against no pre-training at f and at 100%."""
    baseline = {s.fraction: s for s in summary if s.mode == PretrainMode.NONE.value}
    out = []
    for s in summary:
        if s.mode == PretrainMode.NONE.value:
            continue
        for ref in sorted({s.fraction, 100.0}):
            if ref in baseline:
                out.append(
                    DeltaRow(
                        mode=s.mode,
                        fraction=s.fraction,
                        reference_fraction=ref,
                        accuracy_delta=s.accuracy_mean - baseline[ref].accuracy_mean,
                        f1_delta=s.f1_mean - baseline[ref].f1_mean,
                    )
                )
    return tuple(out)


def amount_trend(summary: Sequence[SummaryRow]) -> float | None:
    """Least-squares slope of accuracy (points) per pre-training video."""
    points = sorted((s.n_pretrain, s.accuracy_mean) for s in summary)
    if len({x for x, _ in points}) < 2:
        return None
    x, y = np.array(points).T
    return float(np.polyfit(x, y, 1)[0])
