import math

import numpy as np
import pytest

from needlab.errors import NodeBudgetError
from needlab.sphere import (
    FOUR_PI,
    SpherePoint,
    build_quadrature,
    farthest_point_indices,
    gauss_legendre,
    legendre_all,
    projection_kernel,
    spherical_distance,
    windowed_legendre_sum,
)

from conftest import grid_angles, real_harmonic


class TestSpherePoint:
    def test_from_angles_unit_norm(self):
        rng = np.random.default_rng(1)
        for theta, phi in rng.uniform([0, 0], [math.pi, 2 * math.pi], size=(200, 2)):
            p = SpherePoint.from_angles(theta, phi)
            assert abs(p.x**2 + p.y**2 + p.z**2 - 1.0) < 1e-12

    def test_angle_round_trip(self):
        rng = np.random.default_rng(2)
        for theta, phi in rng.uniform([0.05, 0], [math.pi - 0.05, 2 * math.pi], size=(200, 2)):
            t2, p2 = SpherePoint.from_angles(theta, phi).to_angles()
            assert abs(t2 - theta) < 1e-12
            assert abs(p2 - phi) % (2 * math.pi) < 1e-11

    def test_from_xyz_normalizes(self):
        p = SpherePoint.from_xyz(3.0, 4.0, 0.0)
        assert (p.x, p.y, p.z) == (0.6, 0.8, 0.0)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            SpherePoint.from_xyz(0.0, 0.0, 0.0)


class TestLegendre:
    def test_p0_constant(self):
        assert np.allclose(legendre_all(0, 0.7), [1.0])

    def test_p1_identity(self):
        assert np.allclose(legendre_all(1, 0.5), [1.0, 0.5])

    def test_p5_explicit_value(self):
        # (63 u^5 - 70 u^3 + 15 u) / 8 at u = 0.3
        vals = legendre_all(5, 0.3)
        assert abs(vals[5] - 0.34538625) < 1e-12

    def test_recurrence_matches_explicit_up_to_l6(self):
        explicit = [
            lambda u: np.ones_like(u),
            lambda u: u,
            lambda u: 0.5 * (3 * u**2 - 1),
            lambda u: 0.5 * (5 * u**3 - 3 * u),
            lambda u: (35 * u**4 - 30 * u**2 + 3) / 8,
            lambda u: (63 * u**5 - 70 * u**3 + 15 * u) / 8,
            lambda u: (231 * u**6 - 315 * u**4 + 105 * u**2 - 5) / 16,
        ]
        rng = np.random.default_rng(3)
        u = rng.uniform(-1, 1, 100)
        vals = legendre_all(6, u)
        for l, f in enumerate(explicit):
            assert np.max(np.abs(vals[l] - f(u))) < 1e-12

    def test_bounded_by_one(self):
        rng = np.random.default_rng(4)
        u = rng.uniform(-1, 1, 500)
        assert np.max(np.abs(legendre_all(40, u))) <= 1.0 + 1e-12

    def test_domain_error(self):
        with pytest.raises(ValueError):
            legendre_all(3, 1.001)

    def test_windowed_sum_matches_direct(self):
        rng = np.random.default_rng(5)
        coeffs = rng.standard_normal(23)
        u = rng.uniform(-1, 1, 64)
        direct = (coeffs[:, None] * legendre_all(22, u)).sum(axis=0)
        assert np.allclose(windowed_legendre_sum(coeffs, u), direct, atol=1e-12)


class TestProjectionKernel:
    def test_l0_value(self):
        assert abs(projection_kernel(0, 0.37) - 1.0 / FOUR_PI) < 1e-15

    def test_l1_at_one(self):
        assert abs(projection_kernel(1, 1.0) - 3.0 / FOUR_PI) < 1e-15

    def test_matches_harmonic_sum(self):
        # Sum_m conj(Y_4m(x)) Y_4m(y) at a pair with <x, y> = 0.2
        x = SpherePoint.from_angles(1.1, 0.4)
        # construct y at angle arccos(0.2) from x
        gamma = math.acos(0.2)
        helper = np.array([0.0, 0.0, 1.0])
        e1 = np.cross(x.as_array(), helper)
        e1 /= np.linalg.norm(e1)
        yv = math.cos(gamma) * x.as_array() + math.sin(gamma) * e1
        y = SpherePoint(*yv)
        tx, px = x.to_angles()
        ty, py = y.to_angles()
        total = 0.0
        for m in range(-4, 5):
            total += real_harmonic(4, m, tx, px) * real_harmonic(4, m, ty, py)
        assert abs(projection_kernel(4, 0.2) - total) < 1e-12


class TestSphericalDistance:
    def test_identical(self):
        # arccos near 1 amplifies the last-bit rounding of the dot product
        p = SpherePoint.from_angles(0.3, 1.0)
        assert spherical_distance(p, p) < 1e-7

    def test_antipodal(self):
        p = SpherePoint.from_angles(0.3, 1.0)
        q = SpherePoint(-p.x, -p.y, -p.z)
        assert abs(spherical_distance(p, q) - math.pi) < 1e-7

    def test_orthogonal(self):
        north = SpherePoint(0.0, 0.0, 1.0)
        equator = SpherePoint(1.0, 0.0, 0.0)
        assert abs(spherical_distance(north, equator) - math.pi / 2) < 1e-12

    def test_triangle_inequality(self):
        rng = np.random.default_rng(6)
        pts = rng.standard_normal((100, 3, 3))
        pts /= np.linalg.norm(pts, axis=2, keepdims=True)
        for a, b, c in pts:
            dab = spherical_distance(a, b)
            dbc = spherical_distance(b, c)
            dac = spherical_distance(a, c)
            assert dac <= dab + dbc + 1e-12


class TestGaussLegendre:
    def test_matches_numpy(self):
        for n in (1, 2, 7, 33, 129):
            x, w = gauss_legendre(n)
            xr, wr = np.polynomial.legendre.leggauss(n)
            assert np.max(np.abs(x - xr[::-1])) < 1e-13
            assert np.max(np.abs(w - wr[::-1])) < 1e-13


class TestQuadrature:
    def test_degree_zero_integrates_constant(self):
        grid = build_quadrature(0)
        assert abs(grid.integrate(np.ones(grid.node_count)) - FOUR_PI) < 1e-12

    def test_weights_sum_to_sphere_area(self):
        for L in (1, 5, 16, 64):
            for mode in ("full", "reduced"):
                grid = build_quadrature(L, azimuth=mode)
                assert abs(grid.weights.sum() - FOUR_PI) < 1e-10
                assert np.all(grid.weights > 0)

    def test_harmonics_vanish_at_L16(self):
        grid = build_quadrature(16)
        theta, phi = grid_angles(grid)
        for l in range(1, 17):
            for m in range(-l, l + 1):
                val = grid.integrate(real_harmonic(l, m, theta, phi))
                assert abs(val) < 1e-10

    def test_legendre_product_orthogonality_L8(self):
        grid = build_quadrature(8)
        z = grid.xyz[:, 2]
        p3 = legendre_all(3, z)[3]
        p5 = legendre_all(5, z)[5]
        assert abs(grid.integrate(p3 * p5)) < 1e-12

    def test_random_harmonic_products(self):
        # spot version of the larger acceptance battery
        rng = np.random.default_rng(7)
        for mode in ("full", "reduced"):
            grid = build_quadrature(32, azimuth=mode)
            theta, phi = grid_angles(grid)
            for _ in range(50):
                l1, l2 = rng.integers(0, 17, size=2)
                m1 = rng.integers(-l1, l1 + 1) if l1 else 0
                m2 = rng.integers(-l2, l2 + 1) if l2 else 0
                vals = real_harmonic(l1, m1, theta, phi) * real_harmonic(l2, m2, theta, phi)
                expected = 1.0 if (l1, m1) == (l2, m2) else 0.0
                assert abs(grid.integrate(vals) - expected) < 1e-9

    def test_reduced_mode_trims_polar_rings(self):
        full = build_quadrature(128, azimuth="full")
        red = build_quadrature(128, azimuth="reduced")
        assert red.node_count < full.node_count
        ratio_full = full.weights.max() / full.weights.min()
        ratio_red = red.weights.max() / red.weights.min()
        assert ratio_red < 0.6 * ratio_full

    def test_node_budget(self):
        with pytest.raises(NodeBudgetError):
            build_quadrature(64, node_budget=1000)

    def test_node_ordering_colatitude_major(self):
        grid = build_quadrature(8)
        theta, _ = grid_angles(grid)
        assert np.all(np.diff(theta) > -1e-12)


class TestFarthestPoint:
    def test_spread_selection(self):
        grid = build_quadrature(16)
        idx = farthest_point_indices(grid.xyz, 2)
        dot = float(grid.xyz[idx[0]] @ grid.xyz[idx[1]])
        assert dot < -0.9  # near-antipodal

    def test_subset_nested(self):
        grid = build_quadrature(16)
        a = farthest_point_indices(grid.xyz, 4)
        b = farthest_point_indices(grid.xyz, 8)
        assert list(a) == list(b[:4])
