import math
import warnings

import numpy as np
import pytest

from oracles import fd_weights
from lesion_ensemble.activation import ActivationKind, sinact
from lesion_ensemble.dice import dsc
from lesion_ensemble.errors import NonDifferentiable, NoTrainingData, ShapeMismatch
from lesion_ensemble.ensemble import (
    EnsembleModel,
    FusionOverlapWarning,
    OpinionSet,
    TrainConfig,
    fuse,
    grad_weights,
    initial_model,
    load_model,
    loss,
    majority_vote,
    merge_groups,
    save_model,
    train_ensemble,
)
from lesion_ensemble.volume import Volume3, threshold

THIRD = (1 / 3, 1 / 3, 1 / 3)


def random_set(rng, shape=(4, 4, 4)):
    gt = (rng.random(shape) < 0.4).astype(float)
    if not gt.any():
        gt.flat[0] = 1.0
    return OpinionSet(rng.random(shape), rng.random(shape), rng.random(shape), gt=gt)


def lesion_gt(shape=(10, 10, 10)):
    gt = np.zeros(shape)
    gt[2:6, 3:7, 1:5] = 1
    gt[8, 8, 8] = 1
    return gt


class TestFuse:
    def test_perfect_opinions(self):
        gt = lesion_gt()
        out = fuse(OpinionSet(gt, gt, gt, gt=gt), EnsembleModel(THIRD))
        np.testing.assert_array_equal(out, gt)

    def test_uniform_point_nine(self):
        x = np.full((2, 2, 2), 0.9)
        out = fuse(OpinionSet(x, x, x), EnsembleModel(THIRD))
        expected = 0.9 + math.sin(0.2 * math.pi) / (2 * math.pi)
        np.testing.assert_allclose(out, expected, atol=1e-12)
        assert expected == pytest.approx(0.99355, abs=1e-5)

    def test_projection(self, rng):
        o = random_set(rng)
        np.testing.assert_array_equal(fuse(o, EnsembleModel((1, 0, 0))), sinact(o.x1))

    def test_output_in_unit_interval(self, rng):
        xs = [rng.uniform(-3, 3, (5, 5, 5)) for _ in range(3)]
        for kind in ActivationKind:
            out = fuse(OpinionSet(*xs), EnsembleModel(rng.normal(size=3), kind))
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_sharpening(self):
        for v in np.linspace(0, 1, 101):
            x = np.full((1, 1, 1), v)
            h = float(fuse(OpinionSet(x, x, x), EnsembleModel(THIRD))[0, 0, 0])
            assert h == pytest.approx(sinact(v), abs=1e-12)
            assert abs(h - 0.5) >= abs(v - 0.5) - 1e-12

    def test_keeps_volume_type(self):
        v = Volume3(np.zeros((2, 2, 2)), (1.0, 2.0, 3.0))
        out = fuse(OpinionSet(v, v, v), initial_model())
        assert isinstance(out, Volume3) and out.spacing == v.spacing

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            OpinionSet(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))

    def test_sigmoid_initial_model_centres_on_half(self):
        m = initial_model("Sigmoid")
        x = np.full((1, 1, 1), 0.5)
        assert float(fuse(OpinionSet(x, x, x), m)[0, 0, 0]) == pytest.approx(0.5)
        z = np.zeros((1, 1, 1))
        assert float(fuse(OpinionSet(z, z, z), m)[0, 0, 0]) < 0.5


class TestGradWeights:
    def test_identical_opinions(self, rng):
        o = random_set(rng)
        same = OpinionSet(o.x1, o.x1, o.x1, gt=o.gt)
        g = grad_weights(same, EnsembleModel((0.2, 0.3, 0.4)))
        assert g[0] == g[1] == g[2]

    def test_zero_at_saturation(self):
        gt = lesion_gt()
        g = grad_weights(OpinionSet(gt, gt, gt, gt=gt), EnsembleModel(THIRD))
        np.testing.assert_array_equal(g, 0.0)

    def test_step(self, rng):
        with pytest.raises(NonDifferentiable):
            grad_weights(random_set(rng), EnsembleModel(THIRD, "Step"))

    @pytest.mark.parametrize("kind", ["Sigmoid", "SinAct"])
    def test_finite_differences(self, rng, kind):
        worst = 0.0
        for _ in range(100):
            o = random_set(rng)
            m = EnsembleModel(tuple(rng.uniform(0.1, 0.6, 3)), kind)
            g, fd = grad_weights(o, m), fd_weights(o, m)
            worst = max(worst, np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12))
        assert worst <= 1e-5


def noisy_suite(n, seed, shape=(16, 16, 16)):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        gt = np.zeros(shape)
        for _ in range(3):
            lo = rng.integers(0, 12, size=3)
            gt[tuple(slice(a, a + 4) for a in lo)] = 1
        x1 = (rng.random(shape) < 0.3).astype(float)
        x3 = (rng.random(shape) < 0.3).astype(float)
        out.append(OpinionSet(x1, gt, x3, gt=gt))
    return out


class TestTrain:
    def test_perfect_opinions_stay_put(self):
        gt = lesion_gt()
        data = [OpinionSet(gt, gt, gt, gt=gt)] * 3
        model, hist = train_ensemble(data, TrainConfig(5, 0.01))
        assert model.weights == THIRD
        assert hist == [-1.0] * 5

    def test_recovers_reliable_opinion(self):
        data = noisy_suite(10, 1)
        model, hist = train_ensemble(data[:8], TrainConfig(10, 0.1))
        w1, w2, w3 = model.weights
        assert w2 > w1 and w2 > w3
        assert np.mean([dsc(threshold(fuse(o, model)), o.gt) for o in data[8:]]) >= 0.95

    def test_history_contract(self):
        data = noisy_suite(4, 2)
        _, hist = train_ensemble(data, TrainConfig(10, 0.01))
        assert len(hist) == 10 and hist[-1] <= hist[0]

    def test_deterministic(self):
        data = noisy_suite(4, 3)
        a = train_ensemble(data, TrainConfig(5, 0.1))
        b = train_ensemble(data, TrainConfig(5, 0.1))
        assert a == b

    def test_permutation_equivariance(self):
        data = noisy_suite(4, 4)
        m, _ = train_ensemble(data, TrainConfig(5, 0.1))
        ms, _ = train_ensemble([o.swapped(0, 1) for o in data], TrainConfig(5, 0.1))
        assert ms.weights == (m.weights[1], m.weights[0], m.weights[2])

    def test_empty(self):
        with pytest.raises(NoTrainingData):
            train_ensemble([], TrainConfig())

    def test_bad_config(self):
        with pytest.raises(ValueError):
            TrainConfig(0, 0.1)
        with pytest.raises(ValueError):
            TrainConfig(1, 0.0)


class TestVote:
    @pytest.mark.parametrize("values, expected", [((0.6, 0.6, 0.2), 1.0), ((0.6, 0.4, 0.4), 0.0),
                                                  ((0.5, 0.5, 0.0), 1.0)])
    def test_voxel(self, values, expected):
        xs = [np.full((1, 1, 1), v) for v in values]
        assert majority_vote(OpinionSet(*xs))[0, 0, 0] == expected

    def test_unanimity(self):
        b = lesion_gt()
        np.testing.assert_array_equal(majority_vote(OpinionSet(b, b, b)), b)


class TestMerge:
    def test_large_only(self):
        gt = lesion_gt()
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            np.testing.assert_array_equal(merge_groups(np.zeros_like(gt), gt), gt)

    def test_overlap_warns(self):
        a = np.zeros((3, 3, 3))
        a[1, 1, 1] = 0.9
        with pytest.warns(FusionOverlapWarning):
            out = merge_groups(a, a)
        assert out.sum() == 1

    def test_both_empty(self):
        z = np.zeros((3, 3, 3))
        assert not merge_groups(z, z).any()


def test_model_roundtrip(tmp_path):
    m = EnsembleModel((0.1 + 0.2, 1 / 3, -2.5e-17), "Sigmoid", -0.5)
    save_model(tmp_path / "m.json", m, TrainConfig(), [-0.5, -0.6])
    assert load_model(tmp_path / "m.json") == m
