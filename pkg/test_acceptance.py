"""
Acceptance suite

The recurrence-depth experiments train full-size models and only run
with --runslow.
"""
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent))

import numpy as np
import pytest
from click.testing import CliRunner
from numpy.testing import assert_array_equal

from cli.app import cli
from conftest import random_net
from models.dataset import DatasetSpec
from models.filters import FilterBank
from models.network import DenseQP, LayerConfig, RGNetwork
from services.dense_solvers import dense_coordinate_descent, projected_gradient
from services.experiments import run_depth_study, summarize
from services.inference import nms_group_update, qp_k, qp_until_converged
from services.rg_model import check_copositive_grid, dense_expand, replicate_filter, score
from services.run_config import build_model, load_run_config
from services.synth_data import generate_dataset
from services.tensor_ops import convolve_transposed, correlate, max_pool, rectify
from services.training import finite_diff_check
from test_tensor_ops import random_case

SMALL_CONFIG = Path(__file__).parent / "configs" / "small.env"


# (input dims, layers): stride 1 unpadded, stride 2 unpadded, padded with a
# stride-2 top, padded stride 1; each has at most 13 latent variables
CONCAVE_ARCHITECTURES = [
    ((1, 3, 3), [(2, 2, 1, None, 0), (2, 2, 1, None, 0)]),
    ((1, 4, 4), [(2, 2, 2, None, 0), (2, 2, 1, None, 0)]),
    ((1, 2, 2), [(2, 3, 1, None, 1), (1, 3, 2, None, 1)]),
    ((1, 3, 3), [(1, 3, 1, None, 1), (1, 2, 1, None, 0)]),
]


def concave_nets(rng, count):
    """Small NMS-free nets, of random architecture, whose energy is strictly concave"""
    found = 0
    while found < count:
        dims, layers = CONCAVE_ARCHITECTURES[int(rng.integers(len(CONCAVE_ARCHITECTURES)))]
        net = random_net(rng, dims, layers, scale=0.15)
        x = rng.normal(size=dims)
        qp = dense_expand(net, x)
        if np.max(np.linalg.eigvalsh(qp.W)) > -0.1:
            continue
        assert check_copositive_grid(-qp.W, 6).copositive
        found += 1
        yield net, x, qp


def test_concave_nets_cover_strided_and_padded_layers():
    rng = np.random.default_rng(2024)
    seen = {(tuple(f.stride for f in net.filters), tuple(f.pad for f in net.filters))
            for net, _, _ in concave_nets(rng, 100)}
    assert any(2 in strides for strides, _ in seen)
    assert any(any(pads) for _, pads in seen)


def test_layered_descent_matches_dense_solvers():
    rng = np.random.default_rng(2024)
    for net, x, qp in concave_nets(rng, 100):
        layered = qp_until_converged(net, x, tol=1e-8).flatten()
        dense = dense_coordinate_descent(qp, tol=1e-12)
        assert dense.converged
        assert np.max(np.abs(layered - dense.z)) < 1e-6
        step = 1.0 / np.max(np.abs(np.linalg.eigvalsh(qp.W)))
        assert np.max(np.abs(layered - projected_gradient(qp, step, 5000))) < 1e-5


def test_coordinate_updates_never_lower_the_score():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(2, 17))
        a = rng.normal(0.0, 1.0 / np.sqrt(n), size=(n, n))
        W = np.triu(a, 1) + np.triu(a, 1).T - np.eye(n)
        order = rng.permutation(n)
        groups, start = [], 0
        for _ in range(int(rng.integers(0, n // 3 + 1))):
            size = int(rng.integers(2, 4))
            if start + size > n:
                break
            groups.append(np.sort(order[start:start + size]))
            start += size
        qp = DenseQP(W=W, b=rng.normal(size=n), groups=groups)
        scores = []
        dense_coordinate_descent(qp, max_sweeps=30, callback=lambda z: scores.append(score(qp, z)))
        assert None not in scores
        assert all(b >= a - 1e-9 * max(1.0, abs(a)) for a, b in zip(scores, scores[1:]))


def random_layers(rng):
    layers = []
    for stride in (1, 2, 1):
        nms = (2, 2) if stride == 1 and rng.random() < 0.5 else None
        layers.append((int(rng.integers(1, 4)), 3, stride, nms, None))
    layers[-1] = layers[-1][:3] + (None, None)
    return layers


def test_single_pass_is_a_cnn():
    rng = np.random.default_rng(3)
    for _ in range(100):
        channels = int(rng.integers(1, 3))
        net = random_net(rng, (channels, 8, 8), random_layers(rng))
        x = rng.normal(size=(channels, 8, 8))
        trace = qp_k(net, x, 1)
        below = x
        for cfg, f, b, z in zip(net.layers, net.filters, net.biases, trace.states):
            drive = correlate(f, below) + b[:, None, None]
            below = rectify(drive) if cfg.nms_group is None else nms_group_update(drive, cfg.nms_group)
            assert_array_equal(z, below)


def test_replicated_weights_reduce_nms_to_max_pooling():
    rng = np.random.default_rng(4)
    for _ in range(100):
        c_in, c_mid, c_out = (int(v) for v in rng.integers(1, 4, size=3))
        size = int(rng.choice([4, 6, 8]))
        f1 = FilterBank(rng.integers(-3, 4, size=(c_mid, c_in, 3, 3)).astype(float), 1, 1)
        f2 = FilterBank(rng.integers(-3, 4, size=(c_out, c_mid, 3, 3)).astype(float), 1, 1)
        b1 = rng.integers(-2, 3, size=c_mid).astype(float)
        b2 = rng.integers(-2, 3, size=c_out).astype(float)
        big = replicate_filter(f2, (2, 2))
        net = RGNetwork(
            layers=[LayerConfig(c_in, c_mid, (3, 3), 1, (2, 2), 1),
                    LayerConfig(c_mid, c_out, big.kernel, 2, None, big.pad)],
            filters=[f1, big], biases=[b1, b2], input_dims=(c_in, size, size),
        )
        x = rng.integers(-4, 5, size=(c_in, size, size)).astype(float)
        pooled = max_pool(rectify(correlate(f1, x) + b1[:, None, None]), (2, 2))
        expected = rectify(correlate(f2, pooled) + b2[:, None, None])
        assert_array_equal(qp_k(net, x, 1).layer(2), expected)


def test_transposed_convolution_is_the_adjoint():
    rng = np.random.default_rng(5)
    for _ in range(100):
        f, shape = random_case(rng)
        x = rng.normal(size=shape)
        y = rng.normal(size=(f.out_channels,) + f.output_dims(shape[1], shape[2]))
        assert abs(np.sum(correlate(f, x) * y) - np.sum(x * convolve_transposed(f, y, shape))) < 1e-10


@pytest.mark.parametrize("k", [1, 2, 3])
def test_gradients_match_finite_differences(k):
    cfg = load_run_config(SMALL_CONFIG, environ={}, overrides={'K': k})
    rng = np.random.default_rng(100 + k)
    net, heads = build_model(cfg, seed=k)
    for b in net.biases:
        b[...] = rng.normal(0.0, 0.1, size=b.shape)
    for p in (heads.coarse.weight, heads.coarse.bias, heads.taps[0].weight, heads.taps[0].bias):
        p[...] = rng.normal(0.0, 0.1, size=p.shape)
    samples = list(generate_dataset(DatasetSpec(n_samples=2, image_size=16, n_keypoints=2, seed=k)))
    err = finite_diff_check(net, heads, samples, k, weight_decay=cfg.train.weight_decay,
                            max_per_param=10, rng=rng)
    assert err < 1e-3


def test_activations_stay_finite_without_copositivity():
    rng = np.random.default_rng(6)
    layers = [(2, 3, 1, (2, 2), None), (3, 3, 2, None, None), (2, 3, 1, None, None)]
    for trial in range(1000):
        net = random_net(rng, (1, 6, 6), layers, scale=2.0, bias_scale=1.0)
        trace = qp_k(net, rng.normal(size=(1, 6, 6)), 1 + trial % 8)
        assert all(np.all(np.isfinite(z)) for z in trace.states)


def run_pipeline(root: Path) -> dict:
    runner = CliRunner()
    base = ["--config", str(SMALL_CONFIG), "--seed", "3"]
    steps = [
        ["gen-data", str(root / "data.rgds"), "--n-samples", "8"],
        ["train", str(root / "data.rgds"), str(root / "model.rgck")],
        ["infer", str(root / "model.rgck"), str(root / "data.rgds"), str(root / "pred"), "--index", "2"],
        ["eval", str(root / "model.rgck"), str(root / "data.rgds"), "--ks", "1,2"],
    ]
    outputs = []
    for step in steps:
        result = runner.invoke(cli, base + step)
        assert result.exit_code == 0, result.output
        outputs.append(result.output)
    files = {p.relative_to(root).as_posix(): p.read_bytes()
             for p in sorted(root.rglob("*")) if p.is_file() and p.suffix != ".log"}
    return {'files': files, 'infer': outputs[2], 'eval': outputs[3]}


def test_pipeline_is_reproducible(tmp_path):
    first = run_pipeline(tmp_path / "a")
    second = run_pipeline(tmp_path / "b")
    assert sorted(first['files']) == ["data.rgds", "model.rgck", "pred/heatmap_00.pgm",
                                      "pred/heatmap_01.pgm", "pred/keypoints.txt"]
    assert first == second


@pytest.fixture(scope="module")
def depth_results():
    cfg = load_run_config(environ={})
    spec = DatasetSpec(n_samples=2000, image_size=56, n_keypoints=cfg.n_keypoints, occlusion_rate=0.3,
                       ambiguity=1.0, seed=0)
    train_set = generate_dataset(spec)
    test_set = generate_dataset(DatasetSpec(n_samples=500, image_size=56, n_keypoints=cfg.n_keypoints,
                                            occlusion_rate=0.3, ambiguity=1.0, seed=1))
    results = run_depth_study(train_set, test_set, cfg, ks=(1, 2), seeds=(0, 1, 2), alphas=[0.1])
    return {row.k: row for row in summarize(results, 0.1)}


@pytest.mark.slow
def test_top_down_pass_improves_localization(depth_results):
    assert depth_results[2].pck - depth_results[1].pck >= 0.02


@pytest.mark.slow
def test_top_down_pass_keeps_visibility_recall(depth_results):
    assert depth_results[2].recall_at_p80 >= depth_results[1].recall_at_p80 - 0.01
