"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The heavyweight criteria (end-to-end training, parameter sweep) run on
synthetic corpora sized for CPU execution; the end-to-end criterion uses the
sanctioned reduced input size of 112 pixels. Run with ``pytest -s
tests/test_acceptance.py`` to see the per-criterion lines.
"""
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import numpy.testing as npt
import pytest

import shapereg as sr
from shapereg import backend
from shapereg.data_pipeline import load_dataset
from shapereg.eval_metrics import (
    benchmark_fps,
    evaluate,
    normalized_p2p_error,
    parameter_sweep,
)
from shapereg.feature_net import NetConfig, build_network, center_head_on_model
from shapereg.pca_layer import (
    GlobalTransform,
    ParamVector,
    apply_transform_matrix,
    build_transform_matrix,
    layer_backward_coords,
    layer_forward_coords,
    layer_forward,
)
from shapereg.shape_model import (
    Frame,
    LandmarkSet,
    align_corpus,
    compute_pca,
    load_model,
    project,
    reconstruct,
    save_model,
)
from shapereg.synth_data import SynthSpec, baseline_mean_shape_error, generate_dataset
from shapereg.train_engine import Checkpoint, Predictor, TrainConfig, train
from conftest import random_canonical_corpus


@contextmanager
def criterion(num, description):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {num} FAIL: {description}")
        raise
    elapsed = time.perf_counter() - start
    print(f"\nACCEPTANCE {num} PASS: {description} [{elapsed:.1f}s]")


def random_model(rng, num_landmarks, num_shapes=40):
    corpus = [
        LandmarkSet(rng.normal(100.0, 18.0, (num_landmarks, 2)), Frame.CANONICAL)
        for _ in range(num_shapes)
    ]
    return compute_pca(corpus)


def test_criterion_1_layer_gradient_check():
    with criterion(1, "PCA-layer analytic gradients match finite differences "
                      "(100 draws, eps=1e-5, rel err < 1e-4)"):
        rng = np.random.default_rng(20240001)
        eps = 1e-5
        model = None
        for draw in range(100):
            if draw % 10 == 0:
                model = random_model(rng, int(rng.integers(5, 12)))
            p = int(rng.integers(1, model.p_max + 1))
            w = rng.normal(size=(1, p)) * 2.0
            t = np.array([[rng.uniform(0.4, 2.0), rng.uniform(-np.pi, np.pi),
                           rng.uniform(-60, 60), rng.uniform(-60, 60)]])
            g = rng.normal(size=(1, model.num_landmarks, 2))
            analytic = layer_backward_coords(model, w, t, g).packed()[0]

            packed = np.concatenate([w[0], t[0]])
            numeric = np.zeros_like(packed)
            for i in range(packed.size):
                plus, minus = packed.copy(), packed.copy()
                plus[i] += eps
                minus[i] -= eps
                fp = layer_forward_coords(model, plus[None, :p], plus[None, p:])
                fm = layer_forward_coords(model, minus[None, :p], minus[None, p:])
                numeric[i] = np.sum((fp - fm) * g) / (2 * eps)
            scale = np.maximum(np.abs(numeric), 1e-3 * max(np.abs(numeric).max(), 1e-12))
            rel = np.abs(analytic - numeric) / scale
            assert rel.max() < 1e-4, f"draw {draw}: max rel err {rel.max():.2e}"


def test_criterion_2_layer_identities():
    with criterion(2, "w=0 + identity transform reproduces the mean shape exactly; "
                      "transform equivariance within 1e-9 over 1000 draws"):
        rng = np.random.default_rng(20240002)
        model = random_model(rng, 9)
        out = layer_forward(model, ParamVector(np.zeros(model.p_max), GlobalTransform.identity()))
        npt.assert_array_equal(out.points.reshape(-1), model.mean_shape)

        identity = np.array([[1.0, 0.0, 0.0, 0.0]])
        for _ in range(1000):
            w = rng.normal(size=(1, model.p_max))
            t = np.array([[rng.uniform(0.3, 2.5), rng.uniform(-np.pi, np.pi),
                           rng.uniform(-80, 80), rng.uniform(-80, 80)]])
            direct = layer_forward_coords(model, w, t)[0]
            local = layer_forward_coords(model, w, identity)[0]
            composed = apply_transform_matrix(
                build_transform_matrix(GlobalTransform(*t[0])), local
            )
            assert np.abs(direct - composed).max() < 1e-9


def test_criterion_3_pca_round_trip_and_spectrum():
    with criterion(3, "reconstruct(project(.)) identity at full rank (1e-6 rel) on a "
                      "500-shape corpus; spectrum recovers amplitudes^2 within 10%"):
        amps = (18.0, 13.0, 9.0, 6.0)
        # The corpus seed is fixed: sample eigenvalues of a 500-shape corpus
        # fluctuate by ~6% (1 sigma), so the 10% bound needs a frozen draw.
        spec = SynthSpec(
            num_samples=500, num_landmarks=12, num_modes=4, mode_amplitudes=amps,
            noise_sigma=0.0, scale_range=(1.0, 1.0), rotation_max_deg=0.0,
            translation_max=0.0, seed=902,
        )
        result = generate_dataset(spec)
        corpus = [LandmarkSet(ls.points, Frame.CANONICAL) for ls in result.landmarks]
        model = compute_pca(corpus)  # full rank: min(2L, N-1) = 24
        scale = float(np.abs(np.stack([c.points for c in corpus])).max())
        for shape in corpus[::25]:
            rebuilt = reconstruct(model, project(model, shape))
            rel = np.abs(rebuilt.points - shape.points).max() / scale
            assert rel < 1e-6
        npt.assert_allclose(model.eigenvalues[:4], np.array(amps) ** 2, rtol=0.10)


def test_criterion_4_metric_oracle():
    with criterion(4, "metric matches naive double loop within 1e-12 on 1000 pairs; "
                      "scale/translation invariant; 0.05 closed-form case exact"):
        from test_eval_metrics import naive_normalized_error

        rng = np.random.default_rng(20240004)
        for _ in range(1000):
            num = int(rng.integers(3, 40))
            gt = rng.normal(0, 60, (num, 2))
            pred = gt + rng.normal(0, 6, (num, 2))
            fast = normalized_p2p_error(pred, gt)
            slow = naive_normalized_error(pred.tolist(), gt.tolist())
            assert abs(fast - slow) < 1e-12
            k = float(rng.uniform(0.1, 50))
            shift = rng.uniform(-500, 500, 2)
            assert abs(normalized_p2p_error(pred * k, gt * k) - fast) < 1e-12 * max(1, fast)
            assert abs(normalized_p2p_error(pred + shift, gt + shift) - fast) < 1e-12 * max(1, fast)

        gt = np.array([(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0)])
        assert normalized_p2p_error(gt + np.array([3.0, 4.0]), gt) == 0.05


# ---------------------------------------------------------------------------
# Heavyweight fixtures for criteria 5-7


END_TO_END = {
    "seed": 1001,
    "input_size": 112,
    "channel_plan": (10, 14, 20, 20, 40, 40, 48),
    "frequencies": (1, 1, 1, 1, 2, 1, 2),
    "epochs": 40,
    "batch_size": 16,
    "early_stop": 0.042,
}

SWEEP = {
    "seed": 2002,
    "num_samples": 750,
    "input_size": 56,
    "channel_plan": (10, 14, 20, 20, 40),
    "frequencies": (1, 1, 1, 1, 2),
    "epochs": 25,
    "batch_size": 16,
    "seeds": (0, 1, 2),
}


@pytest.fixture(scope="module")
def end_to_end_corpus(tmp_path_factory):
    """2000-sample, 10-mode corpus cropped at the reduced CPU input size."""
    root = tmp_path_factory.mktemp("acceptance_e2e")
    spec = SynthSpec(
        num_samples=2000, num_landmarks=14, num_modes=10,
        mode_amplitudes=tuple([12.0] * 10), rotation_max_deg=25.0,
        seed=END_TO_END["seed"],
    )
    generate_dataset(spec, out_dir=root)
    size = END_TO_END["input_size"]
    dataset_train = load_dataset(root / "manifest.csv", "train", out_size=size)
    dataset_test = load_dataset(root / "manifest.csv", "test", out_size=size)
    model = compute_pca(
        align_corpus([s.landmarks for s in dataset_train.samples]), p_max=25
    )
    return dataset_train, dataset_test, model


@pytest.fixture(scope="module")
def trained_end_to_end(end_to_end_corpus):
    dataset_train, dataset_test, model = end_to_end_corpus
    net_config = NetConfig(
        num_shape_params=10, in_channels=1, input_size=END_TO_END["input_size"],
        channel_plan=END_TO_END["channel_plan"],
        block_frequencies=END_TO_END["frequencies"],
    )
    config = TrainConfig(
        num_shape_params=10, epochs=END_TO_END["epochs"],
        batch_size=END_TO_END["batch_size"], seed=0,
        early_stop_error=END_TO_END["early_stop"],
    )
    start = time.perf_counter()
    result = train(dataset_train, config, model, net_config=net_config)
    elapsed = time.perf_counter() - start
    return result, elapsed


def test_criterion_5_end_to_end_training(end_to_end_corpus, trained_end_to_end):
    with criterion(5, "end-to-end synthetic training: held-out error < 0.05 and "
                      "< 0.5 x mean-shape baseline"):
        dataset_train, dataset_test, model = end_to_end_corpus
        result, elapsed = trained_end_to_end
        eval_result = evaluate(result.checkpoint, dataset_test, model)
        baseline = baseline_mean_shape_error([s.landmarks for s in dataset_test.samples])
        print(
            f"\n  held-out error {eval_result.mean:.4f}, baseline {baseline:.4f}, "
            f"training {elapsed / 60:.1f} min over {len(result.history)} epochs "
            f"(runtime target: < 45 min CPU at input 112)"
        )
        assert eval_result.mean < 0.05
        assert eval_result.mean < 0.5 * baseline


def test_criterion_6_parameter_sweep_trend(tmp_path_factory):
    with criterion(6, "sweep trend: error(p=5) >= 1.2 x error(p=15); "
                      "error(p=15) vs error(p=25) within 10% (median of 3 seeds)"):
        root = tmp_path_factory.mktemp("acceptance_sweep")
        spec = SynthSpec(
            num_samples=SWEEP["num_samples"], num_landmarks=14, num_modes=10,
            mode_amplitudes=tuple([12.0] * 10), rotation_max_deg=25.0,
            seed=SWEEP["seed"],
        )
        generate_dataset(spec, out_dir=root)
        size = SWEEP["input_size"]
        dataset_train = load_dataset(root / "manifest.csv", "train", out_size=size)
        dataset_test = load_dataset(root / "manifest.csv", "test", out_size=size)
        model = compute_pca(
            align_corpus([s.landmarks for s in dataset_train.samples]), p_max=25
        )
        net_config = NetConfig(
            num_shape_params=5, in_channels=1, input_size=size,
            channel_plan=SWEEP["channel_plan"], block_frequencies=SWEEP["frequencies"],
        )
        per_seed = []
        for seed in SWEEP["seeds"]:
            config = TrainConfig(
                num_shape_params=5, epochs=SWEEP["epochs"],
                batch_size=SWEEP["batch_size"], seed=seed,
            )
            sweep = parameter_sweep(
                dataset_train, dataset_test, [5, 15, 25], config, model,
                net_config=net_config,
            )
            assert all(row.status == "ok" for row in sweep.rows)
            per_seed.append([row.mean_error for row in sweep.rows])
            print(f"\n  seed {seed}: " + " ".join(
                f"p{p}={e:.4f}" for p, e in zip([5, 15, 25], per_seed[-1])
            ))
        medians = np.median(np.array(per_seed), axis=0)
        e5, e15, e25 = medians
        print(f"  medians: p5={e5:.4f} p15={e15:.4f} p25={e25:.4f}")
        assert e5 >= 1.2 * e15, f"p=5 error {e5:.4f} not >= 1.2x p=15 error {e15:.4f}"
        assert abs(e15 - e25) < 0.10 * e15, (
            f"p=15 ({e15:.4f}) vs p=25 ({e25:.4f}) differ by more than 10%"
        )


def test_criterion_7_shape_model_constancy(end_to_end_corpus, trained_end_to_end):
    with criterion(7, "shape-model tensors bit-identical before and after training"):
        dataset_train, _, model = end_to_end_corpus
        snapshot = (
            model.mean_shape.tobytes(),
            model.eigenvectors.tobytes(),
            model.eigenvalues.tobytes(),
        )
        fingerprint = model.fingerprint()
        result, _ = trained_end_to_end  # training already ran against `model`
        assert model.mean_shape.tobytes() == snapshot[0]
        assert model.eigenvectors.tobytes() == snapshot[1]
        assert model.eigenvalues.tobytes() == snapshot[2]
        assert model.fingerprint() == fingerprint
        assert result.checkpoint.model_fingerprint == fingerprint


def test_criterion_8_throughput_invariant_in_p():
    with criterion(8, "forward throughput fps(p=5) / fps(p=75) within [0.8, 1.25]"):
        rng = np.random.default_rng(20240008)
        corpus = [
            LandmarkSet(rng.normal(100.0, 15.0, (40, 2)), Frame.CANONICAL)
            for _ in range(100)
        ]
        model = compute_pca(corpus, p_max=75)
        fingerprint = model.fingerprint()
        results = {}
        for p in (5, 75):
            net_config = NetConfig(
                num_shape_params=p, in_channels=1, input_size=112,
                channel_plan=(10, 14, 20, 20, 40, 40, 48),
                block_frequencies=(1, 1, 1, 1, 2, 1, 2),
            )
            network = build_network(net_config, seed=0)
            center_head_on_model(network, model.mean_shape)
            checkpoint = Checkpoint(
                meta={
                    "net_config": net_config.to_dict(),
                    "net_seed": 0,
                    "train_config": {},
                    "shape_model_fingerprint": fingerprint,
                },
                tensors=network.state_dict(),
            )
            results[p] = benchmark_fps(checkpoint, model, batch_size=1, iterations=30)
        ratio = results[5].fps / results[75].fps
        print(
            f"\n  fps(p=5)={results[5].fps:.1f}, fps(p=75)={results[75].fps:.1f}, "
            f"ratio {ratio:.3f} on {results[5].hardware} "
            "(the published 410 fps figure is accelerator hardware, reported not asserted)"
        )
        assert 0.8 <= ratio <= 1.25


def test_criterion_9_serialization_round_trips(tmp_path):
    with criterion(9, "shape-model and checkpoint containers round-trip value-exact; "
                      "predict after reload bit-identical"):
        rng = np.random.default_rng(20240009)
        model = random_model(rng, 10)
        model_path = tmp_path / "model.json"
        save_model(model, model_path)
        loaded = load_model(model_path)
        npt.assert_array_equal(loaded.mean_shape, model.mean_shape)
        npt.assert_array_equal(loaded.eigenvectors, model.eigenvectors)
        npt.assert_array_equal(loaded.eigenvalues, model.eigenvalues)
        assert loaded.fingerprint() == model.fingerprint()

        net_config = NetConfig(
            num_shape_params=4, in_channels=1, input_size=32,
            channel_plan=(6, 8, 12), block_frequencies=(1, 1, 1),
        )
        network = build_network(net_config, seed=5)
        center_head_on_model(network, model.mean_shape)
        checkpoint = Checkpoint(
            meta={
                "net_config": net_config.to_dict(),
                "net_seed": 5,
                "train_config": {},
                "shape_model_fingerprint": model.fingerprint(),
            },
            tensors=network.state_dict(),
        )
        images = rng.random((6, 32, 32, 1)).astype(np.float32)
        before = Predictor(checkpoint, loaded).predict_coords(images)

        ckpt_path = tmp_path / "ckpt.npz"
        checkpoint.save(ckpt_path)
        reloaded = Checkpoint.load(ckpt_path)
        for key, tensor in checkpoint.tensors.items():
            npt.assert_array_equal(reloaded.tensors[key], tensor)
        after = Predictor(reloaded, loaded).predict_coords(images)
        npt.assert_array_equal(after, before)
