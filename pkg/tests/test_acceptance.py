"""Seed-pinned runs of the default toy protocol. Minutes each; run with ``pytest -m slow``."""

from dataclasses import replace

import pytest

from phaseforge.application import (
    ExperimentService,
    derive_seed,
    generate_dataset,
    make_folds,
    subsample_annotated,
)
from phaseforge.application.evaluation import evaluate_pair_order, evaluate_rsd, mean_rsd_minutes
from phaseforge.application.training import sample_pair_arrays
from phaseforge.domain import LABEL_MONITOR, Pipeline, PretrainMode, SweepSpec
from phaseforge.infrastructure import InMemoryCheckpointRepository, load_settings

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def settings():
    return load_settings()


@pytest.fixture(scope="module")
def dataset(settings):
    return generate_dataset(
        settings.workflow_model(),
        settings.workflow.num_videos,
        derive_seed(settings.seed, "dataset"),
    )


@pytest.fixture(scope="module")
def folds(settings, dataset):
    p = settings.protocol
    return make_folds(
        [r.video_id for r in dataset],
        p.folds,
        p.n_train,
        p.n_val,
        p.n_test,
        derive_seed(settings.seed, "folds"),
    )


@pytest.fixture(scope="module")
def service(settings, dataset):
    return ExperimentService(dataset, settings.protocol_config())


def _records(dataset, ids):
    index = {r.video_id: r for r in dataset}
    return [index[vid] for vid in ids]


def test_endon2n_without_pretraining(service, folds) -> None:
    result = service.run_fold(folds[0], Pipeline.ENDON2N, PretrainMode.NONE)
    assert result.aggregate.scalars["accuracy"].mean >= 90.0


def test_endolstm_without_pretraining(service, folds) -> None:
    result = service.run_fold(folds[0], Pipeline.ENDOLSTM, PretrainMode.NONE)
    assert result.aggregate.scalars["accuracy"].mean >= 85.0


def test_rsd_pretraining_beats_mean_baseline(settings, service, dataset, folds) -> None:
    fold = folds[0]
    with LABEL_MONITOR.sealed("pretrain-rsd"):
        pre = service.pretrain(fold, PretrainMode.RSD)
    report = evaluate_rsd(
        pre.params,
        _records(dataset, fold.test_ids),
        baseline_rsd_min=mean_rsd_minutes(_records(dataset, fold.train_ids)),
        s_norm=settings.protocol.s_norm,
    )
    assert report.rsd_mae_min <= 0.8 * report.baseline_rsd_mae_min
    assert report.progress_mae <= 0.15


def test_tempcon_orders_held_out_pairs(settings, service, dataset, folds) -> None:
    fold = folds[0]
    with LABEL_MONITOR.sealed("pretrain-tempcon"):
        pre = service.pretrain(fold, PretrainMode.TEMPCON)
    pairs = sample_pair_arrays(
        _records(dataset, fold.test_ids), 500, derive_seed(settings.seed, "tempcon-test-pairs")
    )
    assert evaluate_pair_order(pre.params, pairs.frames_a, pairs.frames_b, pairs.labels) >= 70.0


def test_half_labels_with_rsd_pretraining_close_the_gap(service, folds) -> None:
    sweep = SweepSpec(
        fractions=(50.0, 100.0),
        default_subsets=2,
        subsets_per_fraction={},
        modes=(PretrainMode.NONE, PretrainMode.RSD),
    )
    table = service.run_annotation_sweep(folds, sweep)
    accuracy = {(s.mode, s.fraction): s.accuracy_mean for s in table.summary}
    assert accuracy[("none", 100.0)] - accuracy[("rsd", 50.0)] <= 5.0


def test_sweep_is_bit_reproducible(settings, dataset, folds) -> None:
    protocol = settings.protocol_config()
    sweep = SweepSpec(
        fractions=(25.0, 100.0),
        default_subsets=1,
        subsets_per_fraction={},
        modes=(PretrainMode.NONE, PretrainMode.RSD),
    )
    runs = []
    for threads in (1, 2):
        checkpoints = InMemoryCheckpointRepository()
        service = ExperimentService(
            dataset, replace(protocol, threads=threads), checkpoints=checkpoints
        )
        runs.append((service.run_annotation_sweep(folds, sweep), checkpoints))
    (table_a, ckpt_a), (table_b, ckpt_b) = runs
    assert table_a == table_b
    assert sorted(ckpt_a.keys()) == sorted(ckpt_b.keys())
    for key in ckpt_a.keys():
        assert ckpt_a.load(key).equals(ckpt_b.load(key))
