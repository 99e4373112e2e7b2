import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_tau
from topo_transfer.errors import FusionError, MissingTruthError, TooFewModelsError
from topo_transfer.fusion import (
    DEFAULT_GRID,
    FusionConfig,
    calibrate_pilot,
    fuse,
    gate,
    minmax_normalize,
    sigmoid,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
# distinct values stay distinct under the affine maps below (no absorption)
spaced = st.integers(-8000, 8000).map(lambda k: k / 8)


def zoo(grtd, lbtc):
    return [(f"m{k}", g, l) for k, (g, l) in enumerate(zip(grtd, lbtc))]


class TestGate:
    def test_single_class_is_half(self):
        assert gate(FusionConfig(1.0, 0.0, 1)) == 0.5

    def test_two_classes_closed_form(self):
        assert gate(FusionConfig(1.0, 0.0, 2)) == pytest.approx(2 / 3, abs=1e-12)

    def test_saturates(self):
        assert gate(FusionConfig(200.0, 0.0, 3)) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("gamma", [0.05, 0.5, 1.0, 2.0])
    def test_monotone_in_classes(self, gamma):
        alphas = [gate(FusionConfig(gamma, -1.0, c)) for c in range(1, 33)]
        assert all(b > a for a, b in zip(alphas, alphas[1:]))

    def test_sigmoid_stable(self):
        assert sigmoid(-800.0) == 0.0
        assert sigmoid(800.0) == 1.0
        assert sigmoid(0.3) == pytest.approx(1 / (1 + math.exp(-0.3)), rel=1e-15)

    def test_bad_config(self):
        with pytest.raises(FusionError):
            FusionConfig(float("nan"), 0.0, 2)
        with pytest.raises(FusionError):
            FusionConfig(1.0, 0.0, 0)


class TestNormalize:
    @pytest.mark.parametrize(
        "values, expected",
        [([2, 4, 6], [0, 0.5, 1]), ([3, 3, 3], [0.5, 0.5, 0.5]), ([-6, -2], [0, 1])],
    )
    def test_examples(self, values, expected):
        np.testing.assert_array_equal(minmax_normalize(values), expected)

    def test_needs_two(self):
        with pytest.raises(TooFewModelsError):
            minmax_normalize([1.0])


class TestFuse:
    def test_symmetric_blend(self):
        out = fuse(zoo([0.0, 1.0], [1.0, 0.0]), alpha=0.5)
        assert [s for _, s in out.fused] == [0.5, 0.5]

    def test_alpha_one_follows_grtd(self):
        rng = np.random.default_rng(0)
        g, l = rng.standard_normal(6) - 5, rng.uniform(size=6)
        out = fuse(zoo(g, l), alpha=1.0)
        np.testing.assert_array_equal(np.argsort([s for _, s in out.fused]), np.argsort(g))

    def test_alpha_zero_follows_lbtc(self):
        rng = np.random.default_rng(1)
        g, l = rng.standard_normal(6) - 5, rng.uniform(size=6)
        out = fuse(zoo(g, l), alpha=0.0)
        np.testing.assert_array_equal(np.argsort([s for _, s in out.fused]), np.argsort(l))

    def test_uses_gate(self):
        out = fuse(zoo([-3.0, -1.0], [0.2, 0.1]), FusionConfig(1.0, 0.0, 2))
        assert out.alpha == gate(FusionConfig(1.0, 0.0, 2))
        assert out.fused_map()["m1"] == pytest.approx(2 / 3, abs=1e-15)
        assert out.column("lbtc") == {"m0": 0.2, "m1": 0.1}

    def test_too_few_models(self):
        with pytest.raises(TooFewModelsError):
            fuse(zoo([-1.0], [0.5]))

    @settings(max_examples=150, deadline=None)
    @given(st.lists(st.tuples(finite, finite), min_size=2, max_size=9), st.floats(0, 1))
    def test_bounded_and_convex(self, rows, alpha):
        g, l = zip(*rows)
        out = fuse(zoo(g, l), alpha=alpha)
        ng, nl = minmax_normalize(g), minmax_normalize(l)
        for (_, s), x, y in zip(out.fused, ng, nl):
            assert 0.0 <= s <= 1.0
            assert min(x, y) - 1e-15 <= s <= max(x, y) + 1e-15

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(spaced, spaced), min_size=2, max_size=9),
           st.floats(0.01, 100), st.floats(-100, 100), st.floats(0, 1))
    def test_affine_rescaling_keeps_ranking(self, rows, a, b, alpha):
        g, l = map(np.array, zip(*rows))
        base = [s for _, s in fuse(zoo(g, l), alpha=alpha).fused]
        moved = [s for _, s in fuse(zoo(a * g + b, l), alpha=alpha).fused]
        np.testing.assert_allclose(moved, base, atol=1e-9)


class TestCalibration:
    def pilot(self, grtd, lbtc, truth):
        return [(f"m{k}", g, l, t) for k, (g, l, t) in enumerate(zip(grtd, lbtc, truth))]

    def oracle(self, rows, grid, num_classes):
        truths = [r[3] for r in rows]
        out = []
        for gamma, beta in grid:
            a = 1 / (1 + math.exp(-(gamma * math.log(num_classes) + beta)))
            g = np.array([r[1] for r in rows])
            l = np.array([r[2] for r in rows])
            ng = (g - g.min()) / (g.max() - g.min())
            nl = (l - l.min()) / (l.max() - l.min())
            out.append((gamma, beta, a, brute_force_tau(list(a * ng + (1 - a) * nl), truths)))
        return out

    def test_perfect_global_reversed_local(self):
        truth = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
        rows = self.pilot([-50, -40, -30, -20, -19, -1], [0.9, 0.8, 0.75, 0.7, 0.4, 0.1], truth)
        cal = calibrate_pilot(rows, DEFAULT_GRID, num_classes=3)
        expected = self.oracle(rows, DEFAULT_GRID, 3)
        best = max(t for *_, t in expected)
        assert cal.tau_w == pytest.approx(best, abs=1e-12)
        assert best == pytest.approx(1.0)
        assert gate(cal.config) > 0.5
        for (g, b, a, t), (g2, b2, a2, t2) in zip(cal.evaluated, expected):
            assert (g, b) == (g2, b2)
            assert a == pytest.approx(a2, abs=1e-15)
            assert t == pytest.approx(t2, abs=1e-12)
        winners = [(g, b) for g, b, _, t in expected if t == pytest.approx(best, abs=1e-12)]
        nearest = min(math.hypot(g - 1, b) for g, b in winners)
        assert math.hypot(cal.config.gamma - 1, cal.config.beta) == nearest

    def test_single_grid_point(self):
        rows = self.pilot([-3, -2, -1], [0.1, 0.2, 0.3], [0.1, 0.3, 0.2])
        cal = calibrate_pilot(rows, [(-2.0, 2.0)], num_classes=2)
        assert (cal.config.gamma, cal.config.beta) == (-2.0, 2.0)

    def test_agreeing_metrics_prefer_default(self):
        rows = self.pilot([-3, -2, -1], [0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
        cal = calibrate_pilot(rows, DEFAULT_GRID, num_classes=4)
        assert (cal.config.gamma, cal.config.beta) == (1.0, 0.0)
        assert cal.tau_w == 1.0

    def test_missing_truth(self):
        rows = self.pilot([-3, -2], [0.1, 0.2], [0.1, None])
        with pytest.raises(MissingTruthError) as exc:
            calibrate_pilot(rows)
        assert exc.value.model_id == "m1"
