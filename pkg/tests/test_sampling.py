"""Latin hypercube stratification and Sobol reference values."""

import numpy as np
import pytest

from kdnas.sampling import lhs_init, sobol_points


def assert_stratified(points: np.ndarray):
    n, d = points.shape
    for j in range(d):
        strata = np.floor(points[:, j] * n).astype(int)
        assert sorted(strata) == list(range(n)), f"dimension {j} not stratified"


class TestLhs:
    def test_four_by_two_stratification(self):
        assert_stratified(lhs_init(4, 2, rng_seed=0))

    def test_single_point(self):
        pts = lhs_init(1, 5, rng_seed=3)
        assert pts.shape == (1, 5)
        assert np.all((pts >= 0) & (pts < 1))

    def test_50_by_53_stratification(self):
        assert_stratified(lhs_init(50, 53, rng_seed=11))

    def test_deterministic_per_seed(self):
        assert np.array_equal(lhs_init(8, 5, 42), lhs_init(8, 5, 42))
        assert not np.array_equal(lhs_init(8, 5, 42), lhs_init(8, 5, 43))

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            lhs_init(0, 3, 0)


class TestSobol:
    def test_first_three_1d_points_after_skipping_zero(self):
        pts = sobol_points(1, 3, skip=1).ravel()
        assert pts == pytest.approx([0.5, 0.75, 0.25], abs=0.0)

    def test_all_coordinates_in_unit_interval(self):
        pts = sobol_points(7, 100)
        assert np.all((pts >= 0.0) & (pts < 1.0))

    def test_base2_net_property_d2_n16(self):
        # The first 16 points (no skip) hit the 16 dyadic rationals k/16
        # exactly once per dimension.
        pts = sobol_points(2, 16, skip=0)
        for j in range(2):
            vals = sorted(pts[:, j] * 16)
            assert vals == pytest.approx(list(range(16)), abs=0.0)

    def test_dimension_limit(self):
        with pytest.raises(ValueError, match="direction numbers"):
            sobol_points(30000, 4)
