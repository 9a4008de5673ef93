"""Tests for heads, loss, exact gradients and SGD training"""
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent))

import math
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import random_net
from models.dataset import DatasetSpec, Sample
from models.filters import FilterBank
from models.heads import CoarseHead, HeadBank, Tap
from models.inference import InferenceTrace
from models.network import LayerConfig, RGNetwork
from models.training import TrainConfig
from services.synth_data import generate_sample, make_target
from services.training import (
    backward, decode_keypoints, filter_gradient_split, finite_diff_check, heatmap_loss, heatmap_loss_grad,
    learning_rate_scales, model_parameters, predict, predict_heads, sgd_step, sigmoid, train,
)
from utils.errors import ConfigError, RGNetError, ShapeError


def scalar_model(w, v):
    """One 1x1 filter on a 1x1 image, coarse head on a 1x1 grid"""
    net = RGNetwork([LayerConfig(1, 1, (1, 1), 1, None, 0)], [FilterBank(np.full((1, 1, 1, 1), w))],
                    [np.zeros(1)], (1, 1, 1))
    heads = HeadBank(coarse=CoarseHead(np.full((1, 1), v), np.zeros((1, 1, 1))))
    return net, heads


def pixel_sample(value, image_size=1):
    return Sample(image=np.full((1, image_size, image_size), value), keypoints=np.zeros((1, 2)),
                  visibility=np.array([True]))


def multiscale_model(rng, n_keypoints=2):
    net = random_net(rng, (1, 8, 8), [(3, 3, 1, (2, 2), None), (4, 3, 2, None, None), (3, 3, 2, None, None)])
    top_size = 3 * 2 * 2
    heads = HeadBank(
        coarse=CoarseHead(rng.normal(0.0, 0.3, size=(n_keypoints * 4, top_size)),
                          rng.normal(0.0, 0.3, size=(n_keypoints, 2, 2))),
        taps=[Tap(2, rng.normal(0.0, 0.3, size=(n_keypoints, 4)), rng.normal(0.0, 0.3, size=n_keypoints)),
              Tap(1, rng.normal(0.0, 0.3, size=(n_keypoints, 3)), rng.normal(0.0, 0.3, size=n_keypoints))],
    )
    return net, heads


def small_samples(n=2, seed=3):
    spec = DatasetSpec(n_samples=n, image_size=8, n_keypoints=2, occlusion_rate=0.3, seed=seed)
    return [generate_sample(spec, i) for i in range(n)]


def one_hot_samples():
    """The four 2x2 images with a single bright pixel, keypoint on that pixel"""
    samples = []
    for v in range(2):
        for u in range(2):
            image = np.zeros((1, 2, 2))
            image[0, v, u] = 1.0
            samples.append(Sample(image=image, keypoints=np.array([[float(u), float(v)]]),
                                  visibility=np.array([True])))
    return samples


def identity_model():
    net = RGNetwork([LayerConfig(1, 1, (1, 1), 1, None, 0)], [FilterBank(np.ones((1, 1, 1, 1)))],
                    [np.zeros(1)], (1, 2, 2))
    return net, HeadBank.zeros(1, 4, (2, 2), [])


class TestHeads:
    def test_coarse_then_tap(self):
        top = np.arange(4, dtype=np.float64).reshape(1, 2, 2)
        fine = np.ones((1, 4, 4))
        heads = HeadBank(
            coarse=CoarseHead(np.eye(4), np.zeros((1, 2, 2))),
            taps=[Tap(1, np.array([[2.0]]), np.array([1.0]))],
        )
        trace = InferenceTrace(states=[fine, top])
        expected = np.repeat(np.repeat(top, 2, axis=1), 2, axis=2) + 3.0
        assert_array_equal(predict_heads(heads, trace), expected)
        assert_array_equal(predict_heads(heads, trace, n_taps=0), top)

    def test_tap_resolution_must_be_a_multiple(self):
        heads = HeadBank(coarse=CoarseHead(np.zeros((4, 4)), np.zeros((1, 2, 2))),
                         taps=[Tap(1, np.zeros((1, 1)), np.zeros(1))])
        trace = InferenceTrace(states=[np.ones((1, 3, 3)), np.ones((1, 2, 2))])
        with pytest.raises(ShapeError):
            predict_heads(heads, trace)

    def test_too_many_taps_requested(self):
        heads = HeadBank.zeros(1, 4, (2, 2), [])
        with pytest.raises(RGNetError):
            predict_heads(heads, InferenceTrace(states=[np.ones((1, 2, 2))]), n_taps=1)

    def test_predict_shape(self):
        rng = np.random.default_rng(0)
        net, heads = multiscale_model(rng)
        logits = predict(net, heads, rng.normal(size=(1, 8, 8)), k=2)
        assert logits.shape == (2, 8, 8)
        assert predict(net, heads, rng.normal(size=(1, 8, 8)), k=2, n_taps=1).shape == (2, 4, 4)

    def test_decode(self):
        logits = np.zeros((1, 2, 4))
        logits[0, 1, 3] = 2.0
        assert_allclose(decode_keypoints(logits, 8), [[6.0, 4.0, sigmoid(2.0)]])


class TestLoss:
    def test_zero_logits(self):
        assert heatmap_loss(np.zeros((2, 3, 3)), np.zeros((2, 3, 3))) == pytest.approx(math.log(2))
        target = np.zeros((2, 3, 3))
        target[0, 1, 1] = 1
        assert heatmap_loss(np.zeros((2, 3, 3)), target) == pytest.approx(math.log(2))

    def test_invisible_channel_is_all_negative(self):
        logits = np.full((1, 2, 2), 3.0)
        target = np.ones((1, 2, 2))
        assert heatmap_loss(logits, target, np.array([False])) == pytest.approx(np.logaddexp(0, 3.0))
        assert heatmap_loss(logits, target, np.array([True])) == pytest.approx(np.logaddexp(0, -3.0))

    def test_extreme_logits_stay_finite(self):
        logits = np.array([[[1e4, -1e4]]])
        target = np.array([[[0.0, 1.0]]])
        assert heatmap_loss(logits, target) == pytest.approx(1e4)
        assert np.all(np.isfinite(heatmap_loss_grad(logits, target)))

    def test_gradient_at_zero(self):
        target = np.array([[[1.0, 0.0], [0.0, 0.0]]])
        assert_allclose(heatmap_loss_grad(np.zeros((1, 2, 2)), target), (0.5 - target) / 4)

    def test_targets_must_be_binary(self):
        with pytest.raises(RGNetError):
            heatmap_loss(np.zeros((1, 2, 2)), np.full((1, 2, 2), 0.5))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            heatmap_loss(np.zeros((1, 2, 2)), np.zeros((1, 3, 3)))


class TestParameters:
    def test_names(self):
        net, heads = multiscale_model(np.random.default_rng(1))
        assert list(model_parameters(net, heads)) == [
            'layer1.weight', 'layer1.bias', 'layer2.weight', 'layer2.bias', 'layer3.weight', 'layer3.bias',
            'coarse.weight', 'coarse.bias', 'tap0.weight', 'tap0.bias', 'tap1.weight', 'tap1.bias',
        ]

    def test_views_are_live(self):
        net, heads = multiscale_model(np.random.default_rng(2))
        model_parameters(net, heads)['layer2.bias'][0] = 7.0
        assert net.biases[1][0] == 7.0

    def test_learning_rate_scales(self):
        _, heads = multiscale_model(np.random.default_rng(3))
        scales = learning_rate_scales(heads, 10.0)
        assert scales['tap0.weight'] == pytest.approx(0.1)
        assert scales['tap1.bias'] == pytest.approx(0.01)
        assert 'coarse.weight' not in scales


class TestBackward:
    def test_closed_form(self):
        w, v, c = 0.8, 1.5, 0.5
        net, heads = scalar_model(w, v)
        loss, grads = backward(net, heads, [pixel_sample(c)], k=1, radius=0.0)
        logit = v * w * c
        assert loss == pytest.approx(np.logaddexp(0.0, logit) - logit)
        err = sigmoid(logit) - 1.0
        assert grads['layer1.weight'].item() == pytest.approx(err * v * c)
        assert grads['layer1.bias'].item() == pytest.approx(err * v)
        assert grads['coarse.weight'].item() == pytest.approx(err * w * c)
        assert grads['coarse.bias'].item() == pytest.approx(err)

    def test_inactive_unit_passes_no_gradient(self):
        net, heads = scalar_model(-1.0, 2.0)
        _, grads = backward(net, heads, [pixel_sample(1.0)], k=1)
        assert grads['layer1.weight'].item() == 0.0
        assert grads['coarse.weight'].item() == 0.0

    def test_zero_heads_give_zero_network_gradient(self):
        rng = np.random.default_rng(4)
        net = random_net(rng, (1, 8, 8), [(3, 3, 1, (2, 2), None), (4, 3, 2, None, None)])
        heads = HeadBank.zeros(2, 4 * 4 * 4, (4, 4), [(1, 3)])
        _, grads = backward(net, heads, small_samples(), k=2)
        for name in ('layer1.weight', 'layer1.bias', 'layer2.weight', 'layer2.bias'):
            assert not grads[name].any()
        assert grads['coarse.bias'].any()

    def test_extra_passes_without_lower_layers_change_nothing(self):
        net, heads = scalar_model(0.7, -0.4)
        batch = [pixel_sample(0.9)]
        loss1, grads1 = backward(net, heads, batch, k=1)
        loss3, grads3 = backward(net, heads, batch, k=3)
        assert loss1 == loss3
        for name in grads1:
            assert_array_equal(grads1[name], grads3[name])

    def test_parameters_untouched(self):
        rng = np.random.default_rng(5)
        net, heads = multiscale_model(rng)
        before = {name: p.copy() for name, p in model_parameters(net, heads).items()}
        backward(net, heads, small_samples(), k=3, weight_decay=0.01)
        for name, p in model_parameters(net, heads).items():
            assert_array_equal(p, before[name])

    def test_weight_decay_term(self):
        rng = np.random.default_rng(6)
        net, heads = multiscale_model(rng)
        batch = small_samples()
        plain, g_plain = backward(net, heads, batch, k=2)
        decayed, g_decayed = backward(net, heads, batch, k=2, weight_decay=0.1)
        params = model_parameters(net, heads)
        penalty = 0.5 * sum(np.sum(p * p) for name, p in params.items() if name.endswith('.weight'))
        assert decayed == pytest.approx(plain + 0.1 * penalty)
        assert_allclose(g_decayed['layer1.weight'], g_plain['layer1.weight'] + 0.1 * params['layer1.weight'])
        assert_array_equal(g_decayed['layer1.bias'], g_plain['layer1.bias'])

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_loss_matches_predictions(self, k):
        rng = np.random.default_rng(7)
        net, heads = multiscale_model(rng)
        batch = small_samples()
        loss, _ = backward(net, heads, batch, k=k, n_taps=1)
        expected = []
        for sample in batch:
            logits = predict(net, heads, sample.image, k, n_taps=1)
            expected.append(heatmap_loss(logits, make_target(sample, logits.shape[1:], 1.0), sample.visibility))
        assert loss == pytest.approx(np.mean(expected), rel=1e-12)

    def test_shared_filters_sum_both_uses(self):
        rng = np.random.default_rng(30)
        net, heads = multiscale_model(rng)
        batch = small_samples()
        _, grads = backward(net, heads, batch, k=2)
        split = filter_gradient_split(net, heads, batch, k=2)
        assert sorted(split) == ['layer1.weight', 'layer2.weight', 'layer3.weight']
        for name, (bottom_up, top_down) in split.items():
            assert_allclose(bottom_up + top_down, grads[name], rtol=1e-10, atol=1e-14)
        # the first filter never carries a top-down signal
        assert not split['layer1.weight'][1].any()
        assert split['layer2.weight'][1].any() or split['layer3.weight'][1].any()
        err = finite_diff_check(net, heads, batch, 2, max_per_param=20, rng=np.random.default_rng(30))
        assert err < 1e-4

    def test_single_pass_has_no_top_down_gradient(self):
        rng = np.random.default_rng(31)
        net, heads = multiscale_model(rng)
        batch = small_samples()
        _, grads = backward(net, heads, batch, k=1)
        for name, (bottom_up, top_down) in filter_gradient_split(net, heads, batch, k=1).items():
            assert not top_down.any()
            assert_array_equal(bottom_up, grads[name])

    def test_empty_batch(self):
        net, heads = scalar_model(1.0, 1.0)
        with pytest.raises(RGNetError):
            backward(net, heads, [], k=1)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_matches_finite_differences(self, k):
        rng = np.random.default_rng(10 + k)
        net, heads = multiscale_model(rng)
        err = finite_diff_check(net, heads, small_samples(), k, eps=1e-5, weight_decay=0.01,
                                max_per_param=20, rng=np.random.default_rng(k))
        assert err < 1e-4

    def test_finite_differences_with_fewer_taps(self):
        rng = np.random.default_rng(20)
        net, heads = multiscale_model(rng)
        assert finite_diff_check(net, heads, small_samples(), 2, n_taps=1, max_per_param=20) < 1e-4

    def test_finite_difference_check_restores_parameters(self):
        rng = np.random.default_rng(21)
        net, heads = multiscale_model(rng)
        before = {name: p.copy() for name, p in model_parameters(net, heads).items()}
        finite_diff_check(net, heads, small_samples(1), 2, max_per_param=5)
        for name, p in model_parameters(net, heads).items():
            assert_array_equal(p, before[name])

    def test_finite_difference_check_of_chosen_parameters(self):
        rng = np.random.default_rng(22)
        net, heads = multiscale_model(rng)
        err = finite_diff_check(net, heads, small_samples(1), 2, names=['layer2.weight', 'tap1.bias'])
        assert err < 1e-4
        with pytest.raises(RGNetError):
            finite_diff_check(net, heads, small_samples(1), 2, names=['layer9.weight'])

    def test_finite_difference_check_fails_when_nothing_is_compared(self):
        # drive exactly 0: every bias perturbation flips the unit
        net, heads = scalar_model(1.0, 1.0)
        with pytest.raises(RGNetError, match="compared nothing"):
            finite_diff_check(net, heads, [pixel_sample(0.0)], 1, names=['layer1.bias'])


class TestSGD:
    def test_momentum_and_decay(self):
        cfg = TrainConfig(learning_rate=0.1, momentum=0.9, weight_decay=0.1)
        params = {'a.weight': np.array([1.0]), 'a.bias': np.array([1.0])}
        grads = {'a.weight': np.array([0.5]), 'a.bias': np.array([0.5])}
        velocity = {}
        sgd_step(params, grads, velocity, cfg)
        assert_allclose(params['a.weight'], [0.94])
        assert_allclose(params['a.bias'], [0.95])
        sgd_step(params, grads, velocity, cfg)
        assert_allclose(velocity['a.weight'], [-0.1134])
        assert_allclose(params['a.weight'], [0.8266])

    def test_learning_rate_scale(self):
        cfg = TrainConfig(learning_rate=0.1, momentum=0.0, weight_decay=0.0)
        params = {'tap0.bias': np.array([0.0])}
        sgd_step(params, {'tap0.bias': np.array([1.0])}, {}, cfg, {'tap0.bias': 0.1})
        assert_allclose(params['tap0.bias'], [-0.01])

    def test_zero_momentum_is_gradient_descent(self):
        rng = np.random.default_rng(8)
        cfg = TrainConfig(learning_rate=0.05, momentum=0.0, weight_decay=0.0)
        theta = rng.normal(size=(3, 2))
        params = {'x.weight': theta.copy()}
        velocity = {}
        for _ in range(3):
            g = rng.normal(size=(3, 2))
            expected = params['x.weight'] - 0.05 * g
            sgd_step(params, {'x.weight': g}, velocity, cfg)
            assert_allclose(params['x.weight'], expected)

    def test_config_validation(self):
        TrainConfig(learning_rate=1e-6)
        for bad in (dict(learning_rate=0.0), dict(momentum=1.0), dict(batch_size=0), dict(k=0),
                    dict(epochs=-1), dict(weight_decay=-1.0), dict(seed=-1)):
            with pytest.raises(ConfigError):
                TrainConfig(**bad)


class TestTrain:
    def test_learns_one_hot_images(self):
        net, heads = identity_model()
        cfg = TrainConfig(learning_rate=0.5, momentum=0.9, weight_decay=0.0, batch_size=1, epochs=100,
                          k=1, positive_radius=0.0, seed=0)
        ckpt = train(one_hot_samples(), net, heads, cfg)
        assert ckpt.history[0].loss == pytest.approx(math.log(2), rel=0.2)
        assert ckpt.history[-1].loss < 0.1 * math.log(2)
        for sample in one_hot_samples():
            logits = predict(ckpt.net, ckpt.heads, sample.image, k=1)
            decoded = decode_keypoints(logits, 2)
            assert_allclose(decoded[0, :2], sample.keypoints[0])

    def test_zero_epochs_returns_initial_parameters(self):
        rng = np.random.default_rng(9)
        net, heads = multiscale_model(rng)
        ckpt = train(small_samples(), net, heads, TrainConfig(epochs=0))
        assert ckpt.history == []
        assert ckpt.epoch == 0
        for name, p in model_parameters(ckpt.net, ckpt.heads).items():
            assert_array_equal(p, model_parameters(net, heads)[name])

    def test_inputs_are_not_modified(self):
        net, heads = identity_model()
        train(one_hot_samples(), net, heads, TrainConfig(epochs=1, batch_size=2))
        assert_array_equal(heads.coarse.weight, np.zeros((4, 4)))
        assert_array_equal(net.filters[0].weights, np.ones((1, 1, 1, 1)))

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        net, heads = multiscale_model(rng)
        cfg = TrainConfig(learning_rate=0.01, batch_size=1, epochs=1, k=2, seed=4)
        a = train(small_samples(3), net, heads, cfg)
        b = train(small_samples(3), net, heads, cfg)
        for name, p in model_parameters(a.net, a.heads).items():
            assert_array_equal(p, model_parameters(b.net, b.heads)[name])
        assert [r.loss for r in a.history] == [r.loss for r in b.history]

    def test_coarse_to_fine_stages(self):
        rng = np.random.default_rng(11)
        net, heads = multiscale_model(rng)
        seen = []
        cfg = TrainConfig(learning_rate=0.01, batch_size=2, epochs=2, k=1)
        ckpt = train(small_samples(), net, heads, cfg, on_epoch=seen.append)
        assert [r.stage for r in ckpt.history] == [0, 0, 1, 1, 2, 2]
        assert [r.epoch for r in ckpt.history] == [1, 2, 1, 2, 1, 2]
        assert seen == ckpt.history
        assert ckpt.epoch == 6
        assert set(ckpt.velocity) == set(model_parameters(net, heads))

    def test_single_stage(self):
        rng = np.random.default_rng(12)
        net, heads = multiscale_model(rng)
        ckpt = train(small_samples(), net, heads, TrainConfig(learning_rate=0.01, epochs=1, k=1),
                     coarse_to_fine=False)
        assert [r.stage for r in ckpt.history] == [2]

    def test_empty_dataset(self):
        net, heads = identity_model()
        with pytest.raises(RGNetError):
            train([], net, heads, TrainConfig())

    def test_stages_continue_where_they_left_off(self):
        rng = np.random.default_rng(13)
        net, heads = multiscale_model(rng)
        samples = small_samples(4)
        cfg = TrainConfig(learning_rate=0.05, batch_size=2, epochs=2, k=2, seed=3)
        full = train(samples, net, heads, cfg)
        coarse = train(samples, net, heads, cfg, stages=[0])
        rest = train(samples, coarse.net, coarse.heads, cfg, stages=[1, 2], history=coarse.history)
        for name, p in model_parameters(full.net, full.heads).items():
            assert_array_equal(p, model_parameters(rest.net, rest.heads)[name])
        assert [(r.stage, r.epoch, r.loss) for r in rest.history] == [(r.stage, r.epoch, r.loss) for r in full.history]
        assert rest.epoch == full.epoch == 6

    def test_coarse_stage_ignores_the_descending_pass(self):
        rng = np.random.default_rng(14)
        net, heads = multiscale_model(rng)
        cfg = TrainConfig(learning_rate=0.05, batch_size=2, epochs=2, k=1, seed=3)
        one = train(small_samples(4), net, heads, cfg, stages=[0])
        two = train(small_samples(4), net, heads, replace(cfg, k=2), stages=[0])
        for name, p in model_parameters(one.net, one.heads).items():
            assert_array_equal(p, model_parameters(two.net, two.heads)[name])
        three = train(small_samples(4), net, heads, replace(cfg, k=3), stages=[0])
        assert not np.array_equal(three.heads.coarse.weight, one.heads.coarse.weight)

    def test_unknown_stage(self):
        net, heads = identity_model()
        with pytest.raises(RGNetError):
            train(one_hot_samples(), net, heads, TrainConfig(epochs=1), stages=[1])
