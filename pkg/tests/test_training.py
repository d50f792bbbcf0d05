"""Training stages on tiny synthetic data."""

from dataclasses import replace

import numpy as np
import pytest

from phaseforge.application.bptt import full_bptt_grads, truncated_bptt_grads
from phaseforge.application.layers import init_params
from phaseforge.application.models import OnlineRecognizer, encode_inputs, sequence_inputs
from phaseforge.application.training import (
    FROZEN_PROGRESS_HEAD,
    PairArrays,
    StageContext,
    _map,
    build_inputs,
    frame_accuracy,
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
from phaseforge.application.workflow import generate_dataset
from phaseforge.domain import (
    LABEL_MONITOR,
    ArchSpec,
    LabelAccessError,
    OptimizerKind,
    TrainConfig,
    Variant,
)
from phaseforge.domain.network import encoder_names
from phaseforge.infrastructure.memory_repository import (
    InMemoryCheckpointRepository,
    InMemoryTrainingLog,
)


def _init(arch: ArchSpec, variant: Variant, seed: int = 0):
    return init_params(arch.with_variant(variant), seed)


def _unchanged(a, b, names) -> bool:
    return all(np.array_equal(a[n], b[n]) for n in names)


def test_zero_iterations_return_the_initialization(records, small_arch) -> None:
    init = _init(small_arch, Variant.PHASE_ENCODER)
    frames, labels = labeled_frames(records[:2])
    result = train_phase_encoder(frames, labels, TrainConfig(iterations=0), init)
    assert result.updates == 0
    assert _unchanged(result.params, init, init.names)
    assert result.params.stage == "phase_encoder"
    assert result.best_iteration is None


def test_phase_encoder_loss_falls_early(records, small_arch) -> None:
    frames, labels = labeled_frames(records[:4])
    cfg = TrainConfig(alpha=0.01, iterations=20, batch_size=len(labels), weight_decay=0.0)
    result = train_phase_encoder(frames, labels, cfg, _init(small_arch, Variant.PHASE_ENCODER))
    assert result.updates == 20
    assert result.losses[9] < result.losses[0]
    assert result.losses[19] < result.losses[10]


def test_phase_encoder_fits_separable_frames(workflow) -> None:
    clean = generate_dataset(replace(workflow, emission_noise_std=0.05), 6, seed=3)
    frames, labels = labeled_frames(clean)
    arch = ArchSpec(input_dim=workflow.feature_dim, encoder_widths=(16,), lstm_hidden=4, num_phases=3)
    cfg = TrainConfig(optimizer=OptimizerKind.ADAM, alpha=0.01, iterations=400, batch_size=32)
    result = train_phase_encoder(frames, labels, cfg, _init(arch, Variant.PHASE_ENCODER, seed=1))
    assert frame_accuracy(result.params, frames, labels) >= 99.0


def test_phase_encoder_keeps_the_best_validation_model(records, small_arch) -> None:
    frames, labels = labeled_frames(records[:4])
    checkpoints = InMemoryCheckpointRepository()
    log = InMemoryTrainingLog()
    ctx = StageContext("pe", checkpoints=checkpoints, log=log, log_every=0)
    cfg = TrainConfig(alpha=0.05, iterations=30, batch_size=16)
    result = train_phase_encoder(
        frames,
        labels,
        cfg,
        _init(small_arch, Variant.PHASE_ENCODER),
        validation=labeled_frames(records[4:6]),
        validate_every=10,
        ctx=ctx,
    )
    assert [p.iteration for p in result.validation] == [10, 20, 30]
    best = max(result.validation, key=lambda p: p.score)
    assert result.best_iteration == best.iteration
    assert result.params.iteration == best.iteration
    assert result.final.iteration == 30
    assert set(result.checkpoints) <= set(checkpoints.keys())
    assert "pe-30" in result.checkpoints
    assert [u[1] for u in log.updates] == list(range(30))
    assert len(log.validations) == 3


def test_one_video_for_one_hundred_epochs(record, small_arch) -> None:
    init = transfer_weights(
        _init(small_arch, Variant.PHASE_ENCODER), small_arch.with_variant(Variant.ENDON2N_VANILLA), seed=0
    )
    cfg = TrainConfig(iterations=5, epochs=100, subseq_len=8, alpha=1e-3)
    result = train_endon2n([record], cfg, init)
    assert result.updates == 100


def test_endon2n_selects_on_validation(records, small_arch) -> None:
    init = _init(small_arch, Variant.ENDON2N_VANILLA)
    cfg = TrainConfig(optimizer=OptimizerKind.ADAM, iterations=6, subseq_len=7, pad_to=40, alpha=1e-2)
    result = train_endon2n(records[:3], cfg, init, validation=records[3:5])
    assert [p.epoch for p in result.validation] == [1, 2]
    assert all(p.accuracy is not None for p in result.validation)
    assert result.best_iteration in (3, 6)


def test_updated_endon2n_keeps_the_progress_head(records, small_arch) -> None:
    init = _init(small_arch, Variant.ENDON2N_UPDATED)
    cfg = TrainConfig(iterations=4, subseq_len=5, alpha=0.05)
    result = train_endon2n(records[:2], cfg, init)
    assert _unchanged(result.params, init, FROZEN_PROGRESS_HEAD)
    assert not np.array_equal(result.params["lstm.Wx"], init["lstm.Wx"])


def test_elapsed_time_reaches_only_the_updated_variant(record, small_arch) -> None:
    frame = record.frames[5]
    for variant, should_differ in ((Variant.ENDON2N_UPDATED, True), (Variant.ENDON2N_VANILLA, False)):
        params = _init(small_arch, variant, seed=2)
        early = OnlineRecognizer(params).step(frame, 0.1).phase
        late = OnlineRecognizer(params).step(frame, 0.9).phase
        assert (not np.array_equal(early, late)) is should_differ


def test_endolstm_never_touches_the_encoder(records, small_arch) -> None:
    encoder = _init(small_arch, Variant.PHASE_ENCODER, seed=3)
    cfg = TrainConfig(iterations=4, pad_to=40, alpha=0.05)
    result = train_endolstm(records[:2], cfg, encoder, validation=records[2:3])
    assert result.params.arch_tag is Variant.ENDON2N_VANILLA
    assert _unchanged(result.params, encoder, encoder_names(small_arch))


def test_endolstm_gradient_matches_full_bptt_on_lstm_and_head(record, small_arch) -> None:
    model = _init(small_arch, Variant.ENDON2N_VANILLA, seed=4)
    raw = sequence_inputs(record, Variant.ENDON2N_VANILLA)
    _, full = full_bptt_grads(model, raw)
    _, on_features = truncated_bptt_grads(model, encode_inputs(model, raw), raw.live_length)
    for name in ("lstm.Wx", "lstm.Wh", "lstm.b", "fc_phase.W", "fc_phase.b"):
        np.testing.assert_allclose(on_features[name], full[name], rtol=1e-12, atol=1e-15)
    assert all(not np.any(on_features[n]) for n in encoder_names(small_arch))


def test_rsd_pretraining_freezes_the_progress_head(records, small_arch) -> None:
    progress = _init(small_arch, Variant.PROGRESS_ENCODER, seed=5)
    cfg = TrainConfig(iterations=4, subseq_len=6, pad_to=40, alpha=0.05)
    result = pretrain_rsd(records[:3], cfg, progress, validation=records[3:4])
    assert result.params.arch_tag is Variant.RSD_PROGRESS
    assert _unchanged(result.params, progress, FROZEN_PROGRESS_HEAD)
    assert all(p.loss is not None and p.accuracy is None for p in result.validation)

    rsdnet = pretrain_rsdnet(records[:3], cfg, progress)
    assert rsdnet.params.arch_tag is Variant.RSDNET
    assert rsdnet.params["fc_rsd.W"].shape == (1, small_arch.lstm_hidden + 1)


def test_self_supervised_stages_never_read_phase_labels(records, small_arch) -> None:
    reads, violations = LABEL_MONITOR.reads, LABEL_MONITOR.violations
    cfg = TrainConfig(iterations=3, batch_size=8, subseq_len=6)
    progress = train_progress_encoder(records[:3], cfg, _init(small_arch, Variant.PROGRESS_ENCODER))
    pretrain_rsd(records[:3], cfg, progress.params, validation=records[3:4])
    pairs = sample_pair_arrays(records[:3], 10, seed=0)
    pretrain_tempcon(pairs, cfg, _init(small_arch, Variant.TEMPCON))
    assert LABEL_MONITOR.reads == reads
    assert LABEL_MONITOR.violations == violations


def test_sealed_label_read_raises(record) -> None:
    with LABEL_MONITOR.sealed("unit"), pytest.raises(LabelAccessError, match="unit"):
        record.phase_labels  # noqa: B018


def test_seal_reaches_worker_threads(records) -> None:
    violations = LABEL_MONITOR.violations
    with LABEL_MONITOR.sealed("pretrain_rsd"), pytest.raises(LabelAccessError, match="pretrain_rsd"):
        _map(lambda r: int(r.phase_labels[0]), list(records[:4]), 2)
    assert LABEL_MONITOR.violations > violations


def test_unsealed_workers_read_labels(records) -> None:
    violations = LABEL_MONITOR.violations
    firsts = _map(lambda r: int(r.phase_labels[0]), list(records[:4]), 2)
    assert firsts == [1, 1, 1, 1]
    assert LABEL_MONITOR.violations == violations


def test_carry_leaves_the_worker_unsealed_afterwards() -> None:
    with LABEL_MONITOR.sealed("unit"):
        sealed_stage = LABEL_MONITOR.carry(lambda: LABEL_MONITOR.sealed_stage)
    assert LABEL_MONITOR.sealed_stage is None
    assert sealed_stage() == "unit"
    assert LABEL_MONITOR.sealed_stage is None
    assert LABEL_MONITOR.carry(len) is len


def test_tempcon_pairs(records, workflow) -> None:
    pairs = sample_pair_arrays(records[:2], 25, seed=1)
    assert len(pairs) == 50
    assert set(np.unique(pairs.labels)) <= {0, 1}
    assert pairs.frames_a.shape == (50, workflow.feature_dim)
    assert len(PairArrays.from_pairs([])) == 0


def test_long_records_are_not_truncated(records, small_arch) -> None:
    longest = max(records, key=lambda r: r.num_frames)
    [inputs] = build_inputs([longest], Variant.ENDON2N_VANILLA, s_norm=5.0, pad_to=5)
    assert inputs.length == longest.num_frames


def test_stage_preconditions(records, small_arch) -> None:
    cfg = TrainConfig(iterations=1)
    with pytest.raises(ValueError, match="Missing EndoN2N initialization"):
        train_endon2n(records[:1], cfg, None)
    with pytest.raises(ValueError, match="empty training set"):
        train_endon2n([], cfg, _init(small_arch, Variant.ENDON2N_VANILLA))
    with pytest.raises(ValueError, match="Missing fine-tuned encoder"):
        train_endolstm(records[:1], cfg, None)
    with pytest.raises(ValueError, match="Expected phase-encoder initialization"):
        train_phase_encoder(np.zeros((2, 6)), np.array([1, 2]), cfg, _init(small_arch, Variant.TEMPCON))
    with pytest.raises(ValueError, match="empty training set"):
        train_phase_encoder(np.zeros((0, 6)), np.zeros(0, dtype=int), cfg, _init(small_arch, Variant.PHASE_ENCODER))
