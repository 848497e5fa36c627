from dataclasses import replace

import numpy as np
import numpy.testing as npt
import pytest

from shapereg.errors import DegenerateExtentError, DimensionError, EmptyDatasetError
from shapereg.eval_metrics import (
    EvalResult,
    benchmark_fps,
    evaluate,
    normalized_p2p_error,
    parameter_sweep,
)
from shapereg.feature_net import NetConfig
from shapereg.shape_model import Frame, LandmarkSet, compute_pca
from shapereg.train_engine import Predictor, TrainConfig, train
from conftest import random_canonical_corpus


def naive_normalized_error(pred, gt):
    """Deliberately plain double-loop restatement of the metric."""
    total = 0.0
    num = len(gt)
    for i in range(num):
        dx = pred[i][0] - gt[i][0]
        dy = pred[i][1] - gt[i][1]
        total += (dx * dx + dy * dy) ** 0.5
    mean_distance = total / num
    min_x = min(p[0] for p in gt)
    max_x = max(p[0] for p in gt)
    min_y = min(p[1] for p in gt)
    max_y = max(p[1] for p in gt)
    return mean_distance / (((max_x - min_x) + (max_y - min_y)) / 2.0)


class TestNormalizedError:
    def test_equal_sets_give_zero(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(50, 10, (9, 2))
        assert normalized_p2p_error(pts, pts) == 0.0

    def test_closed_form_offset_case(self):
        # 100x100 ground-truth box, every landmark offset by (3, 4):
        # per-landmark distance 5, denominator (100+100)/2, error 0.05 exactly.
        gt = np.array([(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0), (50.0, 50.0)])
        pred = gt + np.array([3.0, 4.0])
        assert normalized_p2p_error(pred, gt) == 0.05

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            num = rng.integers(3, 30)
            gt = rng.normal(0, 50, (num, 2))
            pred = gt + rng.normal(0, 5, (num, 2))
            fast = normalized_p2p_error(pred, gt)
            slow = naive_normalized_error(pred.tolist(), gt.tolist())
            assert abs(fast - slow) < 1e-12

    def test_scale_invariance(self):
        rng = np.random.default_rng(2)
        gt = rng.normal(10, 20, (12, 2))
        pred = gt + rng.normal(0, 3, (12, 2))
        base = normalized_p2p_error(pred, gt)
        for k in (0.25, 3.0, 1234.5):
            scaled = normalized_p2p_error(pred * k, gt * k)
            assert abs(scaled - base) <= 1e-12 * max(1.0, base)

    def test_translation_invariance(self):
        rng = np.random.default_rng(3)
        gt = rng.normal(0, 30, (8, 2))
        pred = gt + rng.normal(0, 2, (8, 2))
        base = normalized_p2p_error(pred, gt)
        for shift in ((100.0, -50.0), (-7.25, 3.5)):
            moved = normalized_p2p_error(pred + shift, gt + shift)
            assert abs(moved - base) <= 1e-12 * max(1.0, base)

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(4)
        gt = rng.normal(0, 10, (6, 2))
        pred = gt.copy()
        pred[2, 0] += 1e-6
        assert normalized_p2p_error(pred, gt) > 0.0

    def test_degenerate_extent(self):
        gt = np.zeros((4, 2))
        with pytest.raises(DegenerateExtentError):
            normalized_p2p_error(gt, gt)

    def test_frame_mismatch(self):
        a = LandmarkSet([(0, 0), (1, 0), (0, 1)], Frame.CROP)
        b = LandmarkSet([(0, 0), (1, 0), (0, 1)], Frame.ORIGINAL)
        with pytest.raises(DimensionError):
            normalized_p2p_error(a, b)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            normalized_p2p_error(np.zeros((3, 2)), np.ones((4, 2)))


class TestEvalResult:
    def test_aggregates_recomputable(self):
        errors = [0.01, 0.05, 0.03, 0.02]
        result = EvalResult(per_image_errors=errors, ids=list("abcd"))
        assert result.mean == np.mean(errors)
        assert result.median == np.median(errors)
        assert result.std == np.std(errors)
        assert result.num_images == 4

    def test_json_round_trip(self):
        result = EvalResult(per_image_errors=[0.25, 0.0625], ids=["x", "y"],
                            config_echo={"k": 1})
        back = EvalResult.from_json(result.to_json())
        assert back.per_image_errors == result.per_image_errors
        assert back.ids == result.ids

    def test_histogram_csv_counts(self):
        result = EvalResult(per_image_errors=list(np.linspace(0, 1, 100)), ids=[str(i) for i in range(100)])
        text = result.histogram_csv(bins=10)
        lines = text.strip().splitlines()
        assert lines[0] == "bin_left,bin_right,count"
        counts = [int(row.split(",")[2]) for row in lines[1:]]
        assert sum(counts) == 100


@pytest.fixture(scope="module")
def toy_checkpoint():
    from test_train_engine import toy_dataset, TINY_NET

    model = compute_pca(random_canonical_corpus(40, 6, seed=1), p_max=8)
    dataset = toy_dataset(model, num=20)
    config = TrainConfig(num_shape_params=3, epochs=1, batch_size=8, seed=0)
    result = train(dataset, config, model,
                   net_config=NetConfig(num_shape_params=3, **TINY_NET))
    return model, dataset, result.checkpoint


class TestEvaluate:
    def test_forced_pred_equals_gt_gives_zero(self, toy_checkpoint):
        from shapereg.data_pipeline import Sample

        model, dataset, checkpoint = toy_checkpoint
        one = dataset.subset([0])
        pred = Predictor(checkpoint, model).predict_coords(one.images())[0]
        forced = one.subset([0])
        forced.samples[0] = Sample(
            image=one.samples[0].image,
            landmarks=LandmarkSet(pred, Frame.CROP),
            crop=one.samples[0].crop,
        )
        result = evaluate(checkpoint, forced, model)
        assert result.mean == 0.0 and result.num_images == 1

    def test_two_runs_identical(self, toy_checkpoint):
        model, dataset, checkpoint = toy_checkpoint
        a = evaluate(checkpoint, dataset, model)
        b = evaluate(checkpoint, dataset, model)
        assert a.per_image_errors == b.per_image_errors
        assert a.ids == b.ids

    def test_empty_dataset(self, toy_checkpoint):
        model, dataset, checkpoint = toy_checkpoint
        with pytest.raises(EmptyDatasetError):
            evaluate(checkpoint, dataset.subset([]), model)


class TestParameterSweep:
    def test_single_value_single_row(self, toy_checkpoint):
        from test_train_engine import TINY_NET

        model, dataset, _ = toy_checkpoint
        config = TrainConfig(num_shape_params=3, epochs=1, batch_size=8, seed=0)
        result = parameter_sweep(
            dataset, dataset, [3], config, model,
            net_config=NetConfig(num_shape_params=3, **TINY_NET),
        )
        assert len(result.rows) == 1
        assert result.rows[0].status == "ok"
        assert result.rows[0].mean_error is not None

    def test_failed_cells_marked_and_sweep_continues(self, toy_checkpoint):
        from test_train_engine import TINY_NET

        model, dataset, _ = toy_checkpoint
        config = TrainConfig(num_shape_params=3, epochs=2, batch_size=8,
                             learning_rate=1e18, seed=0)  # diverges
        result = parameter_sweep(
            dataset, dataset, [2, 3], config, model,
            net_config=NetConfig(num_shape_params=3, **TINY_NET),
        )
        assert len(result.rows) == 2
        assert all(r.status.startswith("failed") for r in result.rows)
        assert all(r.mean_error is None for r in result.rows)

    def test_p_above_model_rank_rejected(self, toy_checkpoint):
        model, dataset, _ = toy_checkpoint
        config = TrainConfig(num_shape_params=3, epochs=1, seed=0)
        with pytest.raises(DimensionError):
            parameter_sweep(dataset, dataset, [model.p_max + 1], config, model)

    def test_csv_shape(self, toy_checkpoint):
        from test_train_engine import TINY_NET

        model, dataset, _ = toy_checkpoint
        config = TrainConfig(num_shape_params=2, epochs=1, batch_size=8, seed=0)
        result = parameter_sweep(
            dataset, dataset, [2, 3], config, model,
            net_config=NetConfig(num_shape_params=2, **TINY_NET),
        )
        lines = result.to_csv().strip().splitlines()
        assert lines[0] == "num_params,mean_error,median_error,status"
        assert len(lines) == 3


class TestBenchmark:
    def test_single_measurement_finite(self, toy_checkpoint):
        model, _, checkpoint = toy_checkpoint
        result = benchmark_fps(checkpoint, model, batch_size=1, iterations=1, warmup=1)
        assert np.isfinite(result.fps) and result.fps > 0
        assert result.latency_ms > 0
        assert result.backend in ("numba", "numpy")
        assert result.hardware

    def test_batched_throughput_not_much_worse_than_single(self, toy_checkpoint):
        # flaky-tolerant ordering check: per-image throughput at batch 8
        # should not fall far below batch 1
        model, _, checkpoint = toy_checkpoint
        single = benchmark_fps(checkpoint, model, batch_size=1, iterations=10, warmup=3)
        batched = benchmark_fps(checkpoint, model, batch_size=8, iterations=10, warmup=3)
        assert batched.fps > 0.5 * single.fps
