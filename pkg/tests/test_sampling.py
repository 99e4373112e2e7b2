from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topo_transfer.errors import SamplingError
from topo_transfer.io import dump_from_arrays
from topo_transfer.sampling import (
    SamplingConfig,
    allocate_quotas,
    make_rng,
    map_to_stage_grid,
    stratified_indices,
    stratified_sample,
)
from topo_transfer.types import StageRole


def volume(counts, shape=None):
    flat = np.concatenate([np.full(n, c, dtype=np.int32) for c, n in counts.items()])
    flat = np.random.default_rng(0).permutation(flat)
    return flat.reshape(shape or (1, 1, flat.size))


class TestQuotas:
    def test_balanced_example(self):
        assert allocate_quotas({0: 100, 1: 10}, 20, 0.5) == {0: 10, 1: 10}

    def test_background_only(self):
        assert allocate_quotas({0: 50}, 8, 0.5) == {0: 8}
        idx = stratified_indices(np.zeros((2, 2, 4), dtype=np.int32), SamplingConfig(budget=8))
        np.testing.assert_array_equal(idx, np.arange(16)[np.isin(np.arange(16), idx)])
        assert idx.size == 8

    def test_budget_too_small(self):
        with pytest.raises(SamplingError):
            allocate_quotas({0: 10, 1: 10}, 1, 0.5)

    def test_small_class_shortfall_goes_to_background(self):
        assert allocate_quotas({0: 100, 1: 3}, 20, 0.5) == {0: 17, 1: 3}

    def test_remainder_to_rarest_class(self):
        assert allocate_quotas({0: 100, 1: 50, 2: 20}, 11, 0.5) == {0: 5, 1: 3, 2: 3}
        assert allocate_quotas({0: 100, 1: 50, 2: 20, 3: 30}, 10, 0.5) == {0: 5, 1: 1, 2: 2, 3: 2}

    def test_short_background_feeds_foreground(self):
        assert allocate_quotas({0: 2, 1: 100}, 20, 0.5) == {0: 2, 1: 18}

    @settings(max_examples=200, deadline=None)
    @given(st.dictionaries(st.integers(0, 5), st.integers(0, 60), min_size=1),
           st.integers(2, 200), st.floats(0.01, 0.99))
    def test_conservation_and_coverage(self, counts, budget, ff):
        if sum(counts.values()) == 0:
            return
        q = allocate_quotas(counts, budget, ff)
        assert sum(q.values()) == min(budget, sum(counts.values()))
        for c, k in q.items():
            assert 0 <= k <= counts[c]

    @settings(max_examples=60, deadline=None)
    @given(st.dictionaries(st.integers(0, 4), st.integers(1, 40), min_size=1),
           st.integers(2, 80), st.integers(0, 2**32))
    def test_positive_quota_classes_are_sampled(self, counts, budget, seed):
        lab = volume(counts)
        idx = stratified_indices(lab, SamplingConfig(budget=budget, seed=seed))
        q = allocate_quotas(counts, budget, 0.5)
        present = set(np.unique(lab.reshape(-1)[idx]).tolist())
        assert present == {c for c, k in q.items() if k > 0}
        assert idx.size == min(budget, lab.size)


class TestStratifiedSample:
    def test_determinism(self):
        lab = volume({0: 300, 1: 40, 2: 12})
        cfg = SamplingConfig(budget=50, seed=3)
        np.testing.assert_array_equal(stratified_indices(lab, cfg, 1, 0), stratified_indices(lab, cfg, 1, 0))

    def test_sample_set_byte_identical(self):
        lab = np.zeros((4, 4, 4), dtype=np.int32)
        lab[:2] = 1
        t = np.random.default_rng(2).standard_normal((5, 4, 4, 4))
        dump = dump_from_arrays(t, lab, StageRole.decoder(0), 2)
        a = stratified_sample(dump, SamplingConfig(budget=10, seed=4))
        b = stratified_sample(dump, SamplingConfig(budget=10, seed=4))
        assert a.features.tobytes() == b.features.tobytes()
        assert a.voxel_index.tobytes() == b.voxel_index.tobytes()
        assert a.stage == StageRole.decoder(0)

    def test_counts_match_quotas(self):
        lab = volume({0: 300, 1: 40, 2: 12})
        idx = stratified_indices(lab, SamplingConfig(budget=60))
        got = np.bincount(lab.reshape(-1)[idx], minlength=3)
        assert dict(enumerate(got.tolist())) == allocate_quotas({0: 300, 1: 40, 2: 12}, 60, 0.5)
        assert np.unique(idx).size == idx.size

    def test_seed_sensitivity(self):
        lab = volume({0: 300, 1: 40})
        a = stratified_indices(lab, SamplingConfig(budget=30, seed=1))
        b = stratified_indices(lab, SamplingConfig(budget=30, seed=2))
        assert not np.array_equal(a, b)

    def test_stream_separates_draws(self):
        lab = volume({0: 300, 1: 40})
        cfg = SamplingConfig(budget=30)
        assert not np.array_equal(stratified_indices(lab, cfg, 0, 0), stratified_indices(lab, cfg, 1, 0))

    def test_rng_streams_reproducible(self):
        np.testing.assert_array_equal(make_rng(5, 1, 2).random(4), make_rng(5, 1, 2).random(4))

    def test_bad_fraction(self):
        with pytest.raises(SamplingError):
            SamplingConfig(foreground_fraction=1.0)


class TestStageGrid:
    @staticmethod
    def nearest(x, n, g):
        p = Fraction(2 * x + 1, 2) * Fraction(g, n) - Fraction(1, 2)
        lo = p.numerator // p.denominator
        k = lo if p - lo <= Fraction(1, 2) else lo + 1
        return min(max(k, 0), g - 1)

    def test_identity_grid(self):
        c = np.array([[0, 1, 2], [3, 3, 3]])
        np.testing.assert_array_equal(map_to_stage_grid(c, (4, 4, 4), (4, 4, 4)), c)

    def test_factor_two(self):
        x = np.arange(8)
        c = np.stack([x, x, x], axis=1)
        np.testing.assert_array_equal(map_to_stage_grid(c, (8, 8, 8), (4, 4, 4))[:, 0], x // 2)

    @pytest.mark.parametrize("n, g", [(8, 4), (8, 2), (12, 3), (9, 3), (7, 5), (6, 4), (5, 1)])
    def test_matches_exact_rational_oracle(self, n, g):
        x = np.arange(n)
        got = map_to_stage_grid(np.stack([x, x, x], 1), (n, n, n), (g, g, g))[:, 0]
        np.testing.assert_array_equal(got, [self.nearest(int(v), n, g) for v in x])
