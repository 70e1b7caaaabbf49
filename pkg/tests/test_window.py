import math

import numpy as np
import pytest

from needlab.window import build_window, NeedletWindow, PARTITION_TOL


@pytest.fixture(scope="module")
def window2():
    return build_window(2.0)


class TestSupport:
    def test_zero_outside_support(self, window2):
        assert window2(2.5) == 0.0
        assert window2(0.45) == 0.0
        assert window2(2.0) == 0.0
        assert window2(0.5) == 0.0

    def test_positive_inside(self, window2):
        xs = np.linspace(0.55, 1.95, 64)
        assert np.all(window2(xs) >= 0.0)
        assert window2(1.0) > 0.5


class TestPartitionOfUnity:
    def test_residual_on_probe_interval(self, window2):
        probe = np.linspace(1.0, 2.0**5, 200)
        residual = np.max(np.abs(window2.squared_sum(probe) - 1.0))
        assert residual < PARTITION_TOL

    def test_three_term_identity(self, window2):
        # at xi = 3 only scales 1..3 contribute for B = 2
        val = window2(3.0) ** 2 + window2(1.5) ** 2 + window2(0.75) ** 2
        assert abs(val - 1.0) < 1e-8

    def test_other_band_ratios(self):
        for B in (1.5, 3.0):
            w = build_window(B)
            probe = np.linspace(1.0, B**5, 200)
            assert np.max(np.abs(w.squared_sum(probe) - 1.0)) < PARTITION_TOL


class TestShape:
    def test_max_strictly_inside(self, window2):
        i = int(np.argmax(window2.b_table))
        assert 0.5 < window2.xi_table[i] < 2.0

    def test_numerically_c1(self):
        # centered differences stay bounded and stable across a refinement pair
        slopes = []
        for n in (2048, 4096):
            w = build_window(2.0, n)
            xs = np.linspace(0.5005, 1.9995, 4001)
            grad = np.gradient(w(xs), xs)
            slopes.append(np.abs(grad).max())
        assert slopes[0] < 20.0
        assert abs(slopes[1] - slopes[0]) < 0.05 * slopes[0]

    def test_exact_matches_table(self, window2):
        xs = np.linspace(0.51, 1.99, 333)
        assert np.max(np.abs(window2(xs) - window2.exact(xs))) < 1e-7


class TestValidation:
    def test_b_must_exceed_one(self):
        with pytest.raises(ValueError):
            build_window(1.0)

    def test_grid_floor(self):
        with pytest.raises(ValueError):
            build_window(2.0, 100)
