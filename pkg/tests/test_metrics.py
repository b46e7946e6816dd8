"""Matching, average precision, evaluation, and gap histograms."""

import math
import random
from dataclasses import replace

import numpy as np
import pytest

from conftest import make_surface_discrimination_fixture, make_synthetic_dataset, random_car_box
from oracles import naive_average_precision, reference_greedy_match

from cs3d import (
    Box7,
    EvalConfig,
    Frame,
    GtObject,
    PredObject,
    average_precision,
    bev_iou,
    closer_surfaces_gap,
    cs_abs_score,
    cs_bev_score,
    evaluate,
    gcs_histogram,
    iou_3d,
    match_frame,
    proportion_difference,
)


def gt_at(x, y, difficulty="easy", cls="Car", theta=0.0):
    return GtObject(box=Box7(x, y, 0, 4, 2, 1.5, theta), cls=cls, difficulty=difficulty)


def pred_like(gt, score, dx=0.0, cls=None):
    return PredObject(box=replace(gt.box, x=gt.box.x + dx), cls=cls or gt.cls, score=score)


def test_object_validation():
    with pytest.raises(ValueError, match="difficulty"):
        GtObject(box=Box7(0, 0, 0, 1, 1, 1, 0), cls="Car", difficulty="impossible")
    with pytest.raises(ValueError, match="score"):
        PredObject(box=Box7(0, 0, 0, 1, 1, 1, 0), cls="Car", score=1.5)
    with pytest.raises(ValueError):
        Frame("", [], [])


def test_match_frame_basics():
    gt = gt_at(10, 2)
    frame = Frame("f", [gt], [pred_like(gt, 0.9)])
    result = match_frame(frame, "bev", EvalConfig())
    assert len(result.records) == 1
    rec = result.records[0]
    assert rec.status == "tp" and rec.gt is gt
    assert abs(rec.score - 1.0) < 1e-12
    assert result.unmatched_gts == []
    assert result.num_valid_gts == 1


def test_match_frame_unmatched_gt():
    frame = Frame("f", [gt_at(10, 2)], [])
    result = match_frame(frame, "bev", EvalConfig())
    assert result.records == []
    assert len(result.unmatched_gts) == 1


def test_match_frame_below_threshold_is_fp():
    gt = gt_at(10, 2)
    frame = Frame("f", [gt], [pred_like(gt, 0.9, dx=3.0)])
    result = match_frame(frame, "bev", EvalConfig())
    assert result.records[0].status == "fp"
    assert result.records[0].gt is None
    assert len(result.unmatched_gts) == 1


def test_match_frame_ignores_filtered_difficulty():
    hard = gt_at(10, 2, difficulty="hard")
    easy = gt_at(30, 2, difficulty="easy")
    frame = Frame("f", [hard, easy], [pred_like(hard, 0.9), pred_like(easy, 0.8)])
    result = match_frame(frame, "bev", EvalConfig())  # moderate filter
    statuses = [r.status for r in result.records]
    assert statuses == ["ignored", "tp"]
    assert result.num_valid_gts == 1
    # With the filter relaxed the same prediction becomes a true positive.
    relaxed = match_frame(frame, "bev", EvalConfig(difficulty_filter="hard"))
    assert [r.status for r in relaxed.records] == ["tp", "tp"]


def test_match_frame_other_classes_dropped():
    car = gt_at(10, 2)
    ped = gt_at(30, 2, cls="Pedestrian")
    frame = Frame("f", [car, ped], [pred_like(car, 0.9), pred_like(ped, 0.8)])
    result = match_frame(frame, "bev", EvalConfig())
    assert len(result.records) == 1
    assert result.num_valid_gts == 1


def test_match_frame_duplicate_prediction_is_fp():
    gt = gt_at(10, 2)
    frame = Frame("f", [gt], [pred_like(gt, 0.9), pred_like(gt, 0.8, dx=0.1)])
    result = match_frame(frame, "bev", EvalConfig())
    assert [r.status for r in result.records] == ["tp", "fp"]


def test_match_frame_unknown_metric():
    with pytest.raises(ValueError, match="unknown metric"):
        match_frame(Frame("f", [], []), "chamfer", EvalConfig())


def test_match_frame_agrees_with_greedy_oracle():
    rng = np.random.default_rng(21)
    cfg = EvalConfig()
    metric_fns = {
        "bev": lambda p, g: bev_iou(p, g),
        "3d": lambda p, g: iou_3d(p, g),
        "cs_bev": lambda p, g: cs_bev_score(p, g, cfg.alpha),
        "cs_abs": lambda p, g: cs_abs_score(p, g, cfg.alpha),
    }
    for trial in range(50):
        base = random_car_box(rng, r_lo=10, r_hi=30)
        gts = []
        for k in range(int(rng.integers(1, 4))):
            box = replace(base, x=base.x + 2.5 * k, y=base.y + rng.uniform(-1, 1))
            gts.append(GtObject(box=box, cls="Car", difficulty="easy"))
        preds = []
        for _ in range(int(rng.integers(1, 6))):
            src = gts[rng.integers(0, len(gts))].box
            box = replace(
                src, x=src.x + rng.normal(0, 0.4), y=src.y + rng.normal(0, 0.4)
            )
            preds.append(PredObject(box=box, cls="Car", score=float(rng.uniform(0.1, 1.0))))
        frame = Frame("f", gts, preds)
        for metric, fn in metric_fns.items():
            scores = [[fn(p.box, g.box) for g in gts] for p in preds]
            want = reference_greedy_match(scores, cfg.thresholds[metric], [p.score for p in preds])
            got = match_frame(frame, metric, cfg)
            for i, rec in enumerate(got.records):
                j = want[i]
                if j < 0:
                    assert rec.status == "fp"
                else:
                    assert rec.status == "tp" and rec.gt is gts[j]


def test_average_precision_edges():
    assert average_precision([], 0) == 0.0
    assert average_precision([(0.9, False)], 0) == 0.0
    assert average_precision([], 5) == 0.0
    assert average_precision([(0.9, True), (0.8, True)], 2) == 100.0
    with pytest.raises(ValueError):
        average_precision([(0.9, True)], 1, recall_points=0)


def test_average_precision_against_naive_oracle():
    rng = np.random.default_rng(22)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        scored = [(float(rng.uniform()), bool(rng.uniform() < 0.6)) for _ in range(n)]
        total_gt = int(rng.integers(1, 30))
        for recall_points in (11, 40):
            got = average_precision(scored, total_gt, recall_points)
            want = naive_average_precision(scored, total_gt, recall_points)
            assert abs(got - want) < 1e-12


def test_evaluate_duplicate_frame_id():
    with pytest.raises(ValueError, match="duplicate"):
        evaluate([Frame("a", [], []), Frame("a", [], [])])


def test_evaluate_perfect_predictions():
    frames = []
    rng = np.random.default_rng(23)
    for k in range(10):
        gts = [
            GtObject(box=random_car_box(rng), cls="Car", difficulty="easy")
            for _ in range(3)
        ]
        preds = [
            PredObject(box=g.box, cls="Car", score=float(rng.uniform(0.5, 1.0)))
            for g in gts
        ]
        frames.append(Frame(f"{k}", gts, preds))
    outcome = evaluate(frames)
    assert all(outcome.aps[m] == 100.0 for m in outcome.aps)


def test_evaluate_invariant_to_frame_and_pred_order():
    frames = make_synthetic_dataset(n_frames=20, seed=31)
    base = evaluate(frames).aps
    shuffled_frames = list(frames)
    random.Random(1).shuffle(shuffled_frames)
    assert evaluate(shuffled_frames).aps == base
    reordered = [
        Frame(f.frame_id, f.gts, list(reversed(f.preds))) for f in shuffled_frames
    ]
    assert evaluate(reordered).aps == base


def test_evaluate_threads_do_not_change_results():
    frames = make_synthetic_dataset(n_frames=16, seed=32)
    base = evaluate(frames, threads=1).aps
    assert evaluate(frames, threads=4).aps == base


def test_alpha_zero_reduces_cs_bev_to_bev():
    frames = make_synthetic_dataset(n_frames=50, seed=33)
    thresholds = {"bev": 0.7, "3d": 0.7, "cs_bev": 0.7, "cs_abs": 0.7}
    outcome = evaluate(frames, EvalConfig(alpha=0.0, thresholds=thresholds))
    # Same threshold and a zero penalty: identical to the last ulp.
    assert outcome.aps["cs_bev"] == outcome.aps["bev"]


def test_cs_bev_ap_dominated_by_bev_ap():
    frames = make_synthetic_dataset(n_frames=30, seed=34)
    thresholds = {"bev": 0.5, "3d": 0.7, "cs_bev": 0.5, "cs_abs": 0.7}
    for alpha in (0.0, 0.5, 1.0, 2.0):
        outcome = evaluate(frames, EvalConfig(alpha=alpha, thresholds=thresholds))
        assert outcome.aps["cs_bev"] <= outcome.aps["bev"] + 1e-9


def test_alpha_sweep_non_increasing():
    frames = make_synthetic_dataset(n_frames=30, seed=35)
    results = [evaluate(frames, EvalConfig(alpha=a)).aps for a in (0.5, 1.0, 1.5)]
    for metric in ("cs_bev", "cs_abs"):
        values = [r[metric] for r in results]
        assert values[0] >= values[1] >= values[2]


def test_surface_discrimination_fixture_behaviour():
    _, frames_a, frames_b = make_surface_discrimination_fixture()
    aps_a = evaluate(frames_a).aps
    aps_b = evaluate(frames_b).aps
    assert abs(aps_a["bev"] - aps_b["bev"]) < 1e-9
    assert aps_a["cs_bev"] > aps_b["cs_bev"] + 1.0
    assert aps_a["cs_abs"] > aps_b["cs_abs"] + 1.0


def test_cs_abs_via_bev_config_switch():
    # Prediction with perfect closer surfaces but poor overall overlap: the
    # far side is stretched three times longer than the truth.
    gt = GtObject(box=Box7(20, 10, 0, 4, 2, 1.5, 0), cls="Car", difficulty="easy")
    stretched = Box7(24, 10, 0, 12, 2, 1.5, 0)
    assert abs(closer_surfaces_gap(stretched, gt.box)) < 1e-9
    frame = Frame("f", [gt], [PredObject(box=stretched, cls="Car", score=0.9)])
    default = evaluate([frame]).aps
    via_bev = evaluate([frame], EvalConfig(cs_abs_via_bev=True)).aps
    assert default["cs_abs"] == 100.0
    assert via_bev["cs_abs"] == 0.0


def test_gcs_histogram_perfect_predictions_in_first_bin():
    rng = np.random.default_rng(36)
    gts = [GtObject(box=random_car_box(rng), cls="Car", difficulty="easy") for _ in range(5)]
    preds = [PredObject(box=g.box, cls="Car", score=0.9) for g in gts]
    hist = gcs_histogram([Frame("f", gts, preds)])
    assert hist.proportions[0] == 1.0
    assert hist.proportions[1:].sum() == 0.0
    assert hist.total_in_interval == 5
    assert not hist.empty


def test_gcs_histogram_empty_flag_and_interval():
    hist = gcs_histogram([Frame("f", [gt_at(10, 2)], [])])
    assert hist.empty and hist.total_in_interval == 0
    assert np.all(hist.proportions == 0.0)
    with pytest.raises(ValueError):
        gcs_histogram([], interval=(2.0, 0.0))
    with pytest.raises(ValueError):
        gcs_histogram([], bins=0)


def test_gcs_histogram_sums_to_one_and_excludes_outside():
    frames = make_synthetic_dataset(n_frames=20, seed=37)
    hist = gcs_histogram(frames, interval=(0.0, 2.0), bins=20)
    assert not hist.empty
    assert abs(hist.proportions.sum() - 1.0) < 1e-12
    # Shrinking the interval can only reduce the in-interval count.
    narrow = gcs_histogram(frames, interval=(0.0, 0.2), bins=2)
    assert narrow.total_in_interval <= hist.total_in_interval


def test_proportion_difference():
    pa = np.array([0.5, 0.3, 0.2])
    pb = np.array([0.7, 0.2, 0.1])
    diff = proportion_difference(pa, pb)
    assert np.allclose(diff, [0.2, -0.1, -0.1])
    assert abs(diff.sum()) < 1e-12
    # Model B concentrated at smaller gaps: positive difference in low bins.
    assert diff[0] > 0
    with pytest.raises(ValueError):
        proportion_difference(np.zeros(3), np.zeros(4))


def test_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(alpha=-1.0)
    with pytest.raises(ValueError):
        EvalConfig(recall_points=0)
    with pytest.raises(ValueError):
        EvalConfig(thresholds={"bev": 0.7})
    with pytest.raises(ValueError):
        EvalConfig(
            thresholds={"bev": 0.0, "3d": 0.7, "cs_bev": 0.5, "cs_abs": 0.7}
        )
    with pytest.raises(ValueError):
        EvalConfig(difficulty_filter="extreme")
