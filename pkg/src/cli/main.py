"""
phaseforge command line: dataset generation, single stages on fold 0, sweeps, reports.
Run with: phaseforge [--config FILE] [--seed N] [--out DIR] [--paper-scale] CMD
Exit codes: 0 success, 1 configuration or input error, 2 stage failure.
"""

import argparse
import json
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path

from dotenv import load_dotenv

from phaseforge.application import (
    ExperimentService,
    StageContext,
    StageError,
    derive_seed,
    generate_dataset,
    make_folds,
    run_gradcheck,
    subsample_annotated,
)
from phaseforge.application.evaluation import (
    aggregate,
    evaluate_model,
    evaluate_pair_order,
    evaluate_rsd,
    mean_rsd_minutes,
)
from phaseforge.application.experiment_service import stage_guard
from phaseforge.application.gradcheck import RELATIVE_ERROR_FLOOR
from phaseforge.application.layers import init_params
from phaseforge.application.training import (
    labeled_frames,
    sample_pair_arrays,
    train_phase_encoder,
)
from phaseforge.application.transfer import transfer_weights
from phaseforge.domain import FoldSpec, Pipeline, PretrainMode, SurgeryRecord, Variant
from phaseforge.infrastructure import (
    ConfigError,
    CsvTrainingLog,
    EvaluationDocument,
    ExperimentSettings,
    FileCheckpointRepository,
    JsonlDatasetRepository,
    ResultsDocument,
    emit_report,
    load_checkpoint,
    load_settings,
    read_report,
)
from phaseforge.infrastructure.reports import emit_evaluation, report_schema

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-5
SWEEP_KINDS = ("annotation", "pretrain-amount", "ablation")


def _load_dotenv() -> None:
    # .env from repo root or cwd
    for path in (
        Path(__file__).resolve().parent.parent.parent / ".env",
        Path.cwd() / ".env",
    ):
        if path.exists():
            load_dotenv(path)
            break


def _configure_logging() -> None:
    level = os.environ.get("PHASEFORGE_LOG_LEVEL", "INFO").strip().upper() or "INFO"
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=getattr(logging, level, logging.INFO),
    )


# --- workspace ---


class Workspace:
    """Resolved settings plus the dataset, checkpoint store and logs under ``--out``."""

    def __init__(self, settings: ExperimentSettings, out: Path) -> None:
        self.settings = settings
        self.out = out
        self.data = JsonlDatasetRepository(out / "data")

    def records(self) -> list[SurgeryRecord]:
        return self.data.load_all()

    def folds(self, records: Sequence[SurgeryRecord]) -> list[FoldSpec]:
        p = self.settings.protocol
        return make_folds(
            [r.video_id for r in records],
            p.folds,
            p.n_train,
            p.n_val,
            p.n_test,
            derive_seed(self.settings.seed, "folds"),
        )

    def checkpoints(self) -> FileCheckpointRepository:
        return FileCheckpointRepository(self.out / "checkpoints")

    def log(self) -> CsvTrainingLog:
        return CsvTrainingLog(self.out / "logs")

    def service(self, records: Sequence[SurgeryRecord]) -> ExperimentService:
        return ExperimentService(
            records,
            self.settings.protocol_config(),
            checkpoints=self.checkpoints(),
            log=self.log(),
        )

    def context(self, stage: str) -> StageContext:
        return StageContext(
            stage=stage,
            checkpoints=self.checkpoints(),
            log=self.log(),
            log_every=self.settings.protocol.log_every,
            threads=self.settings.threads,
        )

    def provenance(self) -> dict:
        return {"config_hash": self.settings.config_hash(), "seed": self.settings.seed}


def _by_id(records: Sequence[SurgeryRecord], ids: Sequence[str]) -> list[SurgeryRecord]:
    index = {r.video_id: r for r in records}
    return [index[vid] for vid in ids]


def _print_metrics(label: str, summary) -> None:
    s = summary.scalars
    print(
        f"{label}: accuracy {s['accuracy'].mean:.2f} ± {s['accuracy'].std:.2f}  "
        f"precision {s['avg_precision'].mean:.2f}  recall {s['avg_recall'].mean:.2f}  "
        f"F1 {s['f1'].mean:.2f}  noise {s['noise'].mean:.2f}  (n={summary.n_videos})"
    )


# --- commands ---


def cmd_generate(ws: Workspace, args: argparse.Namespace) -> int:
    model = ws.settings.workflow_model()
    seed = derive_seed(ws.settings.seed, "dataset")
    records = generate_dataset(model, ws.settings.workflow.num_videos, seed)
    ws.data.save(records, model, seed)
    print(f"Wrote {len(records)} videos to {ws.data.root}")
    return 0


def cmd_train_phase(ws: Workspace, args: argparse.Namespace) -> int:
    records = ws.records()
    fold = ws.folds(records)[0]
    spec = ws.settings.arch_spec(Variant.PHASE_ENCODER)
    seed = derive_seed(ws.settings.seed, "train-phase")
    with stage_guard("phase_encoder"):
        if args.init:
            init = transfer_weights(load_checkpoint(args.init), spec, seed=seed)
        else:
            init = init_params(spec, seed)
        labeled = subsample_annotated(
            fold.train_ids,
            {r.video_id: r.duration_s for r in records},
            args.fraction,
            derive_seed(seed, "subset"),
        )
        frames, labels = labeled_frames(_by_id(records, labeled))
        val = _by_id(records, fold.val_ids)
        result = train_phase_encoder(
            frames,
            labels,
            ws.settings.train_config("phase_encoder"),
            init,
            validation=labeled_frames(val) if val else None,
            ctx=ws.context("phase_encoder"),
        )
    print(f"phase_encoder: {result.updates} updates, checkpoints {list(result.checkpoints)}")
    if result.validation:
        best = max(v.score for v in result.validation)
        print(f"phase_encoder: best validation frame accuracy {best:.2f}%")
    return 0


def cmd_pretrain_rsd(ws: Workspace, args: argparse.Namespace) -> int:
    records = ws.records()
    fold = ws.folds(records)[0]
    service = ws.service(records)
    pre = service.pretrain(fold, PretrainMode(args.mode))
    cfg = ws.settings.protocol
    with stage_guard("evaluate"):
        report = evaluate_rsd(
            pre.params,
            _by_id(records, fold.test_ids),
            baseline_rsd_min=mean_rsd_minutes(_by_id(records, fold.train_ids)),
            s_norm=cfg.s_norm,
        )
    print(f"{args.mode}: checkpoints {list(pre.checkpoints)}")
    print(
        f"{args.mode}: RSD MAE {report.rsd_mae_min:.2f} min "
        f"(mean-RSD baseline {report.baseline_rsd_mae_min:.2f} min), "
        f"progress MAE {report.progress_mae:.3f}"
    )
    return 0


def cmd_pretrain_tempcon(ws: Workspace, args: argparse.Namespace) -> int:
    records = ws.records()
    fold = ws.folds(records)[0]
    pre = ws.service(records).pretrain(fold, PretrainMode.TEMPCON)
    with stage_guard("evaluate"):
        pairs = sample_pair_arrays(
            _by_id(records, fold.test_ids),
            min(ws.settings.protocol.pairs_per_video, 500),
            derive_seed(ws.settings.seed, "tempcon-test-pairs"),
        )
        score = evaluate_pair_order(pre.params, pairs.frames_a, pairs.frames_b, pairs.labels)
    print(f"tempcon: checkpoints {list(pre.checkpoints)}")
    print(f"tempcon: held-out pair-order accuracy {score:.2f}%")
    return 0


def _cmd_fold(ws: Workspace, args: argparse.Namespace, pipeline: Pipeline) -> int:
    records = ws.records()
    fold = ws.folds(records)[0]
    labeled = subsample_annotated(
        fold.train_ids,
        {r.video_id: r.duration_s for r in records},
        args.fraction,
        derive_seed(ws.settings.seed, "subset", fold.fold_id, args.fraction, 0),
    )
    result = ws.service(records).run_fold(
        fold, pipeline, PretrainMode(args.mode), labeled_ids=labeled
    )
    print(f"{pipeline.value}: checkpoints {list(result.checkpoints)}")
    print(f"{pipeline.value}: architectures {result.arch_tags}")
    _print_metrics(f"{pipeline.value} fold {fold.fold_id} test", result.aggregate)
    return 0


def cmd_train_endon2n(ws: Workspace, args: argparse.Namespace) -> int:
    return _cmd_fold(ws, args, Pipeline.ENDON2N)


def cmd_train_endolstm(ws: Workspace, args: argparse.Namespace) -> int:
    return _cmd_fold(ws, args, Pipeline.ENDOLSTM)


def cmd_evaluate(ws: Workspace, args: argparse.Namespace) -> int:
    settings = ws.settings
    params = load_checkpoint(args.checkpoint)
    records = ws.records()
    fold = ws.folds(records)[0]
    window = settings.protocol.filter_window_s if args.filter_window is None else args.filter_window
    with stage_guard("evaluate"):
        reports = evaluate_model(
            params,
            _by_id(records, fold.test_ids),
            s_norm=settings.protocol.s_norm,
            filter_window_s=window,
            centered_filter=args.centered_filter or settings.protocol.centered_filter,
            undefined_as_zero=settings.protocol.undefined_as_zero,
            threads=settings.threads,
        )
        summary = aggregate(reports)
    document = EvaluationDocument.from_reports(
        str(args.checkpoint), reports, summary, **ws.provenance()
    )
    path = emit_evaluation(document, ws.out / "reports", stem=f"evaluate-{Path(args.checkpoint).stem}")
    for r in reports:
        print(f"{r.video_id}: accuracy {r.accuracy:.2f}  F1 {r.f1:.2f}  noise {r.noise:.2f}")
    _print_metrics(f"{params.arch_tag.value} fold {fold.fold_id} test", summary)
    print(f"Wrote {path}")
    return 0


def cmd_sweep(ws: Workspace, args: argparse.Namespace) -> int:
    records = ws.records()
    folds = ws.folds(records)
    service = ws.service(records)
    protocol = ws.settings.protocol
    if args.kind == "annotation":
        table = service.run_annotation_sweep(folds, ws.settings.sweep_spec(), pipeline=protocol.pipeline)
    elif args.kind == "ablation":
        table = service.run_ablation(
            folds,
            protocol.fractions,
            protocol.default_subsets,
            fold_ids=protocol.ablation_folds,
            n_labeled=protocol.ablation_labeled,
        )
    else:
        table = service.run_pretrain_amount_sweep(
            folds,
            protocol.pretrain_amounts,
            n_finetune=protocol.n_finetune,
            pipeline=protocol.pipeline,
        )
    document = ResultsDocument.from_table(table, **ws.provenance())
    for fmt in ("json", "csv"):
        emit_report(document, ws.out / "reports", fmt)
    for s in table.summary:
        print(
            f"{s.mode:>8} {s.fraction:6.1f}% pretrain={s.n_pretrain:<3d} "
            f"accuracy {s.accuracy_mean:6.2f} ± {s.accuracy_std:5.2f}  "
            f"F1 {s.f1_mean:6.2f} ± {s.f1_std:5.2f}"
        )
    for d in table.deltas:
        print(
            f"{d.mode} at {d.fraction:g}% vs none at {d.reference_fraction:g}%: "
            f"accuracy {d.accuracy_delta:+.2f}, F1 {d.f1_delta:+.2f}"
        )
    if table.trend is not None:
        print(f"accuracy trend: {table.trend:+.4f} points per pre-training video")
    return 0


def cmd_gradcheck(ws: Workspace, args: argparse.Namespace) -> int:
    results = run_gradcheck(ws.settings.seed)
    worst = 0.0
    for r in results:
        worst = max(worst, r.max_relative_error)
        print(f"{r.variant:>18} {r.objective:<22} params={r.n_params:<5d} max rel. error {r.max_relative_error:.3e}")
    print(f"relative-error floor {RELATIVE_ERROR_FLOOR:g}, tolerance {GRADCHECK_TOLERANCE:g}")
    if worst > GRADCHECK_TOLERANCE:
        raise StageError("gradcheck", ValueError(f"max relative error {worst:.3e}"))
    return 0


def cmd_report(ws: Workspace, args: argparse.Namespace) -> int:
    if args.schema:
        print(json.dumps(report_schema(), indent=2, sort_keys=True))
        return 0
    if args.input is None:
        raise ConfigError("report needs --input FILE (or --schema).")
    document = read_report(args.input)
    for path in emit_report(document, ws.out / "reports", args.format, stem=Path(args.input).stem):
        print(f"Wrote {path}")
    return 0


# --- parser ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phaseforge", description="Surgical phase recognition experiments on synthetic workflows."
    )
    parser.add_argument("--config", type=Path, default=None, help="YAML config (default: PHASEFORGE_CONFIG).")
    parser.add_argument("--seed", type=int, default=None, help="Root seed; overrides the config.")
    parser.add_argument("--out", type=Path, default=Path("runs"), help="Output directory (default: runs).")
    parser.add_argument("--paper-scale", action="store_true", help="Start from configs/paper.yaml.")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="Override one dotted config key; repeatable.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", help="Write a synthetic dataset to <out>/data.").set_defaults(func=cmd_generate)

    p = sub.add_parser("train-phase", help="Fine-tune the phase encoder on fold 0.")
    p.add_argument("--init", type=Path, default=None, help="Pre-trained checkpoint to transfer from.")
    p.add_argument("--fraction", type=float, default=100.0, help="Percent of annotated videos.")
    p.set_defaults(func=cmd_train_phase)

    p = sub.add_parser("pretrain-rsd", help="RSD/progress pre-training on fold 0 training videos.")
    p.add_argument("--mode", choices=("rsd", "rsdnet"), default="rsd")
    p.set_defaults(func=cmd_pretrain_rsd)

    sub.add_parser("pretrain-tempcon", help="TempCon pre-training on fold 0.").set_defaults(
        func=cmd_pretrain_tempcon
    )

    for name, func, modes in (
        ("train-endon2n", cmd_train_endon2n, [m.value for m in PretrainMode]),
        ("train-endolstm", cmd_train_endolstm, [m.value for m in PretrainMode]),
    ):
        p = sub.add_parser(name, help=f"Run the {name[6:]} stage chain on fold 0 and evaluate.")
        p.add_argument("--mode", choices=modes, default="none", help="Pre-training mode.")
        p.add_argument("--fraction", type=float, default=100.0, help="Percent of annotated videos.")
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="Metrics of a checkpoint on fold 0 test videos.")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--filter-window", type=float, default=None, help="Mode-filter window in seconds.")
    p.add_argument("--centered-filter", action="store_true", help="Offline centered mode filter.")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="Run a cross-validation sweep and write reports.")
    p.add_argument("--kind", choices=SWEEP_KINDS, default="annotation")
    p.set_defaults(func=cmd_sweep)

    sub.add_parser("gradcheck", help="Finite-difference gradient check for every variant.").set_defaults(
        func=cmd_gradcheck
    )

    p = sub.add_parser("report", help="Re-emit a stored results document.")
    p.add_argument("--input", type=Path, default=None)
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--schema", action="store_true", help="Print the results JSON schema.")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    _load_dotenv()
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(
            args.config, paper_scale=args.paper_scale, overrides=args.overrides, seed=args.seed
        )
        return args.func(Workspace(settings, args.out), args)
    except StageError as e:
        logger.error("%s", e)
        return 2
    except (ConfigError, ValueError, FileNotFoundError, KeyError) as e:
        logger.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
