"""Causal prediction, mode filter and phase-recognition metrics."""

import numpy as np
import pytest

from phaseforge.application.evaluation import (
    accuracy,
    aggregate,
    aggregate_folds,
    causal_mode_filter,
    evaluate_model,
    evaluate_pair_order,
    evaluate_record,
    evaluate_rsd,
    f1,
    label_runs,
    mean_rsd_minutes,
    noise_pct,
    per_phase_precision_recall,
    predict_rsd,
    predict_sequence,
    temporal_distance,
    temporal_distances,
)
from phaseforge.application.layers import init_params
from phaseforge.domain import MetricsReport, PredictionTrace, SurgeryRecord, Variant


def _zeroed(params):
    return params.replace_params({n: np.zeros_like(a) for n, a in params.params.items()})


def _report(video_id: str, acc: float) -> MetricsReport:
    return MetricsReport(
        video_id=video_id,
        accuracy=acc,
        precision={1: acc, 2: None},
        recall={1: acc, 2: 50.0},
        avg_precision=acc,
        avg_recall=acc,
        f1=acc,
        temporal_distance_first={1: 0.0, 2: 4.0},
        temporal_distance_closest={1: 0.0, 2: 4.0},
        missed_phases=frozenset(),
        noise=0.0,
    )


# --- worked examples ---


def test_accuracy_examples() -> None:
    assert accuracy([1, 2, 2, 2], [1, 1, 2, 2]) == 75.0
    assert accuracy([3, 3], [3, 3]) == 100.0
    assert accuracy([2, 1], [1, 2]) == 0.0
    with pytest.raises(ValueError, match="length"):
        accuracy([1, 2], [1, 2, 3])


def test_precision_recall_example() -> None:
    precision, recall, avg_p, avg_r = per_phase_precision_recall([1, 2, 2, 2], [1, 1, 2, 2], 3)
    assert precision[1] == 100.0 and recall[1] == 50.0
    assert precision[2] == pytest.approx(66.6667, abs=1e-4) and recall[2] == 100.0
    assert precision[3] is None and recall[3] is None
    assert avg_p == pytest.approx((100.0 + 200.0 / 3.0) / 2.0)
    assert avg_r == 75.0


def test_never_predicted_phase() -> None:
    precision, recall, avg_p, avg_r = per_phase_precision_recall([1, 1, 1, 1], [1, 1, 2, 2], 2)
    assert precision[2] is None
    assert recall[2] == 0.0
    assert avg_p == 50.0 and avg_r == 50.0
    precision, _, avg_p, _ = per_phase_precision_recall(
        [1, 1, 1, 1], [1, 1, 2, 2], 2, undefined_as_zero=True
    )
    assert precision[2] == 0.0
    assert avg_p == 25.0


def test_f1_examples() -> None:
    assert f1(100.0, 100.0) == 100.0
    assert f1(50.0, 100.0) == pytest.approx(66.6667, abs=1e-4)
    assert f1(0.0, 0.0) == 0.0


def test_noise_example() -> None:
    assert noise_pct([1, 1, 3, 2, 2, 2], [1, 1, 1, 2, 2, 2]) == pytest.approx(100.0 / 6.0)
    assert noise_pct([1, 1, 1, 2, 2, 2], [1, 1, 1, 2, 2, 2]) == 0.0
    # a run of 2 that overlaps real phase 2 frames is not noise
    assert noise_pct([1, 2, 2, 2, 2, 2], [1, 1, 1, 2, 2, 2]) == 0.0


def test_temporal_distance_examples() -> None:
    gt = [1, 1, 2, 2, 2]
    pred = [1, 2, 2, 2, 2]
    assert temporal_distance(pred, gt, fps=1.0, mode="first")[2] == 1.0
    assert temporal_distance(pred, gt, fps=1.0, mode="closest")[2] == 1.0

    gt = [1] * 8 + [2] * 4
    pred = [1, 2, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2]
    distances = temporal_distances(pred, gt, fps=1.0)
    assert distances.first[2] == 7.0
    assert distances.closest[2] == 1.0
    assert temporal_distances(pred, gt, fps=2.0).first[2] == 3.5

    same = temporal_distances(gt, gt, fps=1.0)
    assert set(same.first.values()) == {0.0} and set(same.closest.values()) == {0.0}
    with pytest.raises(ValueError, match="Unknown temporal distance mode"):
        temporal_distance(pred, gt, 1.0, mode="last")


def test_missed_phase_gets_the_video_duration() -> None:
    distances = temporal_distances([1, 1, 1, 1], [1, 1, 2, 2], fps=2.0)
    assert distances.missed == frozenset({2})
    assert distances.first[2] == 2.0 and distances.closest[2] == 2.0


def test_label_runs() -> None:
    assert label_runs([1, 1, 2, 1]) == [(1, 0, 2), (2, 2, 3), (1, 3, 4)]
    assert label_runs([]) == []


# --- filter ---


def test_mode_filter_examples() -> None:
    spike = np.array([1, 1, 1, 2, 1, 1, 1])
    assert causal_mode_filter(spike, 5.0, 1.0).tolist() == [1] * 7
    rng = np.random.default_rng(0)
    noisy = rng.integers(1, 8, size=50)
    assert np.array_equal(causal_mode_filter(noisy, 1.0, 1.0), noisy)
    assert np.array_equal(causal_mode_filter(np.full(20, 4), 5.0, 1.0), np.full(20, 4))
    with pytest.raises(ValueError, match="shorter than one frame"):
        causal_mode_filter(spike, 0.1, 1.0)


def test_mode_filter_ties_go_to_the_most_recent_label() -> None:
    assert causal_mode_filter([1, 2], 2.0, 1.0).tolist() == [1, 2]
    assert causal_mode_filter([1, 1, 2, 2, 3], 4.0, 1.0).tolist() == [1, 1, 1, 2, 2]


def test_mode_filter_is_causal() -> None:
    rng = np.random.default_rng(1)
    labels = rng.integers(1, 4, size=60)
    full = causal_mode_filter(labels, 5.0, 1.0)
    for k in (1, 7, 30):
        assert np.array_equal(causal_mode_filter(labels[:k], 5.0, 1.0), full[:k])
    centered = causal_mode_filter(np.array([1, 1, 2, 2, 2]), 3.0, 1.0, centered=True)
    assert centered.tolist() == [1, 1, 2, 2, 2]


def test_mode_filter_window_uses_fps() -> None:
    labels = np.array([1] * 6 + [2] + [1] * 6)
    assert causal_mode_filter(labels, 2.5, 2.0).tolist() == [1] * 13


# --- brute-force oracles ---


def _oracle_precision_recall(pred, gt, m):
    confusion = np.zeros((m + 1, m + 1), dtype=int)
    for p, g in zip(pred, gt, strict=True):
        confusion[p, g] += 1
    precision, recall = {}, {}
    for p in range(1, m + 1):
        tp = confusion[p, p]
        predicted = confusion[p, :].sum()
        actual = confusion[:, p].sum()
        precision[p] = 100.0 * tp / predicted if predicted else None
        recall[p] = 100.0 * tp / actual if actual else None
    return precision, recall


def _oracle_onsets(labels, p):
    return [t for t in range(len(labels)) if labels[t] == p and (t == 0 or labels[t - 1] != p)]


def _oracle_noise(pred, gt):
    noisy, t = 0, 0
    while t < len(pred):
        end = t
        while end < len(pred) and pred[end] == pred[t]:
            end += 1
        if all(gt[i] != pred[t] for i in range(t, end)):
            noisy += end - t
        t = end
    return 100.0 * noisy / len(pred)


def _random_case(rng, m: int = 7, n: int = 200) -> tuple[np.ndarray, np.ndarray]:
    gt = np.sort(rng.integers(1, m + 1, size=n))
    if rng.random() < 0.5:
        pred = rng.integers(1, m + 1, size=n)
    else:
        pred = gt.copy()
        flips = rng.random(n) < rng.uniform(0.0, 0.3)
        pred[flips] = rng.integers(1, m + 1, size=int(flips.sum()))
    return pred, gt


def test_metrics_match_brute_force_oracles() -> None:
    rng = np.random.default_rng(2024)
    m = 7
    for _ in range(1000):
        pred, gt = _random_case(rng, m)
        fps = float(rng.choice([1.0, 2.0, 25.0]))

        assert accuracy(pred, gt) == 100.0 * sum(int(p == g) for p, g in zip(pred, gt, strict=True)) / len(gt)

        precision, recall, avg_p, avg_r = per_phase_precision_recall(pred, gt, m)
        o_precision, o_recall = _oracle_precision_recall(pred, gt, m)
        assert precision.keys() == o_precision.keys()
        for p in o_precision:
            assert (precision[p] is None) == (o_precision[p] is None)
            assert (recall[p] is None) == (o_recall[p] is None)
            if o_precision[p] is not None:
                assert precision[p] == pytest.approx(o_precision[p], rel=1e-12)
            if o_recall[p] is not None:
                assert recall[p] == pytest.approx(o_recall[p], rel=1e-12)
        defined_p = [v for v in o_precision.values() if v is not None]
        defined_r = [v for v in o_recall.values() if v is not None]
        assert avg_p == pytest.approx(sum(defined_p) / len(defined_p), rel=1e-12)
        assert avg_r == pytest.approx(sum(defined_r) / len(defined_r), rel=1e-12)

        assert noise_pct(pred, gt) == _oracle_noise(pred.tolist(), gt.tolist())

        distances = temporal_distances(pred, gt, fps)
        for p in np.unique(gt).tolist():
            onset = gt.tolist().index(p)
            onsets = _oracle_onsets(pred.tolist(), p)
            if not onsets:
                assert p in distances.missed
                assert distances.first[p] == len(gt) / fps
                continue
            assert distances.first[p] == abs(onsets[0] - onset) / fps
            assert distances.closest[p] == min(abs(s - onset) for s in onsets) / fps


def test_accuracy_is_support_weighted_recall() -> None:
    rng = np.random.default_rng(3)
    for _ in range(200):
        pred, gt = _random_case(rng)
        _, recall, _, _ = per_phase_precision_recall(pred, gt, 7)
        support = {p: int(np.sum(gt == p)) for p in recall if recall[p] is not None}
        weighted = sum(recall[p] * support[p] for p in support) / len(gt)
        assert accuracy(pred, gt) == pytest.approx(weighted, rel=1e-12)


def test_metrics_ignore_consistent_relabeling() -> None:
    rng = np.random.default_rng(4)
    permutation = np.r_[0, rng.permutation(7) + 1]
    for _ in range(100):
        pred, gt = _random_case(rng)
        assert accuracy(permutation[pred], permutation[gt]) == accuracy(pred, gt)
        assert noise_pct(permutation[pred], permutation[gt]) == noise_pct(pred, gt)


# --- prediction ---


@pytest.mark.parametrize(
    "variant", [Variant.ENDON2N_VANILLA, Variant.ENDON2N_UPDATED, Variant.PHASE_ENCODER], ids=lambda v: v.value
)
def test_prediction_is_causal(record, small_arch, variant) -> None:
    params = init_params(small_arch.with_variant(variant), seed=1)
    full = predict_sequence(params, record)
    assert np.array_equal(full.labels, full.probabilities.argmax(axis=1) + 1)
    for k in (1, 5, record.num_frames - 1):
        prefix = SurgeryRecord(record.video_id, record.fps, record.frames[:k], record.phase_labels[:k])
        assert np.array_equal(predict_sequence(params, prefix).probabilities, full.probabilities[:k])


def test_zero_weight_model_predicts_uniformly(record, small_arch) -> None:
    params = _zeroed(init_params(small_arch, seed=0))
    trace = predict_sequence(params, record)
    np.testing.assert_allclose(trace.probabilities, 1.0 / 3.0, rtol=0, atol=1e-15)


def test_prediction_rejects_mismatched_records(record, small_arch) -> None:
    wide = SurgeryRecord("wide", 1.0, np.zeros((3, 9)), [1, 1, 2])
    with pytest.raises(ValueError, match="model expects 6"):
        predict_sequence(init_params(small_arch, seed=0), wide)
    with pytest.raises(ValueError, match="does not predict phases"):
        predict_sequence(init_params(small_arch.with_variant(Variant.RSDNET), seed=0), record)
    with pytest.raises(ValueError, match="does not predict RSD"):
        predict_rsd(init_params(small_arch, seed=0), record)


def test_evaluate_record_on_a_perfect_trace(record) -> None:
    gt = record.phase_labels
    probs = np.eye(3)[gt - 1]
    trace = PredictionTrace(record.video_id, probs, gt)
    report = evaluate_record(trace, record, 3, filter_window_s=1.0)
    assert report.accuracy == 100.0 and report.f1 == 100.0 and report.noise == 0.0
    assert set(report.temporal_distance_first.values()) == {0.0}
    assert report.missed_phases == frozenset()


def test_evaluate_model_is_thread_count_independent(records, small_arch) -> None:
    params = init_params(small_arch, seed=4)
    serial = evaluate_model(params, records[:4])
    parallel = evaluate_model(params, records[:4], threads=3)
    assert [r.video_id for r in serial] == [r.video_id for r in records[:4]]
    assert serial == parallel


# --- aggregation ---


def test_aggregate_single_and_equal_reports() -> None:
    one = aggregate([_report("a", 80.0)])
    assert one.scalars["accuracy"].mean == 80.0 and one.scalars["accuracy"].std == 0.0
    two = aggregate([_report("a", 80.0), _report("b", 80.0)])
    assert two.scalars["f1"].std == 0.0
    with pytest.raises(ValueError, match="at least one"):
        aggregate([])


def test_aggregate_three_reports() -> None:
    summary = aggregate([_report("a", 80.0), _report("b", 90.0), _report("c", 100.0)])
    assert summary.n_videos == 3
    assert summary.accuracy == pytest.approx(90.0)
    assert summary.scalars["accuracy"].std == pytest.approx(np.sqrt(200.0 / 3.0))
    assert 2 not in summary.precision
    assert summary.recall[2].mean == 50.0
    assert summary.temporal_distance_first[2].mean == 4.0


def test_aggregate_excludes_missed_phases_from_distances() -> None:
    missed = MetricsReport(
        video_id="m",
        accuracy=50.0,
        precision={1: 50.0, 2: None},
        recall={1: 100.0, 2: 0.0},
        avg_precision=50.0,
        avg_recall=50.0,
        f1=50.0,
        temporal_distance_first={1: 0.0, 2: 300.0},
        temporal_distance_closest={1: 0.0, 2: 300.0},
        missed_phases=frozenset({2}),
        noise=0.0,
    )
    summary = aggregate([_report("a", 80.0), missed])
    assert summary.temporal_distance_first[2].mean == 4.0
    assert summary.missed_counts == {2: 1}


def test_aggregate_folds_averages_fold_means() -> None:
    first = aggregate([_report("a", 80.0), _report("b", 90.0)])
    second = aggregate([_report("c", 100.0)])
    combined = aggregate_folds([first, second])
    assert combined.n_videos == 3
    assert combined.accuracy == pytest.approx((85.0 + 100.0) / 2.0)
    assert combined.scalars["accuracy"].std == pytest.approx(2.5)


# --- pre-training evaluations ---


def test_mean_rsd_minutes(record) -> None:
    assert mean_rsd_minutes([record]) == pytest.approx((record.num_frames - 1) / 2.0 / 60.0, rel=1e-12)


def test_rsd_evaluation_of_a_zero_model(records, small_arch) -> None:
    params = _zeroed(init_params(small_arch.with_variant(Variant.RSD_PROGRESS), seed=0))
    rsd, progress = predict_rsd(params, records[0])
    assert np.array_equal(rsd, np.zeros(records[0].num_frames))
    assert np.array_equal(progress, np.full(records[0].num_frames, 0.5))

    result = evaluate_rsd(params, records[:3], baseline_rsd_min=0.0)
    assert result.n_videos == 3
    assert result.rsd_mae_min == pytest.approx(result.baseline_rsd_mae_min, rel=1e-12)
    assert result.improvement_over_baseline == pytest.approx(0.0, abs=1e-12)


def test_pair_order_accuracy(small_arch) -> None:
    params = _zeroed(init_params(small_arch.with_variant(Variant.TEMPCON), seed=0))
    frames = np.ones((4, 6))
    assert evaluate_pair_order(params, frames, frames, np.array([0, 0, 1, 0])) == 75.0
    with pytest.raises(ValueError, match="at least one pair"):
        evaluate_pair_order(params, frames[:0], frames[:0], np.zeros(0))
