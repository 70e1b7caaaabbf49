import math

import numpy as np
import pytest

from needlab.errors import BandwidthError, NodeBudgetError
from needlab.frame import (
    analyze,
    abs_sum_at,
    build_frame,
    fit_localization,
    frame_diagnostics,
    lp_norm,
    needlet_eval,
    norm_constants,
    profile,
    profile_interp,
    synthesize,
)
from needlab.sphere import FOUR_PI, SpherePoint


class TestFrameStructure:
    def test_degree_exact(self, frame6):
        # ceil(2 * B^(j+1)) at B=2, j=3
        assert frame6.scale(3).grid.degree_exact == 32

    def test_count_scaling(self, frame6):
        ratios = [frame6.scale(j).count / 4.0**j for j in range(1, 6)]
        assert max(ratios) / min(ratios) <= 4.0

    def test_weights_sum(self, frame6):
        for j in (2, 4):
            assert abs(frame6.scale(j).weights.sum() - FOUR_PI) < 1e-10

    def test_weight_uniformity(self, frame6):
        # lambda_jk * B^{2j} within one window, stable across scales
        mins, maxs = [], []
        for j in range(1, 7):
            lam = frame6.scale(j).weights * 4.0**j
            mins.append(lam.min())
            maxs.append(lam.max())
        assert max(maxs) / min(mins) < 20.0
        # per-scale drift of the window edges stays mild
        assert max(mins) / min(mins) < 5.0
        assert max(maxs) / min(maxs) < 5.0

    def test_window_slots_vanish_outside_band(self, frame6):
        sc = frame6.scale(3)
        assert sc.l_min == 5 and sc.l_max == 15
        assert np.all(sc.window_values[: sc.l_min] == 0.0)

    def test_invalid_scale_raises(self, frame6):
        with pytest.raises(IndexError):
            frame6.scale(99)

    def test_node_budget_respected(self):
        with pytest.raises(NodeBudgetError):
            build_frame(2.0, 9, node_budget=100_000)


class TestNeedletEval:
    def test_peak_at_center(self, frame6):
        j, k = 3, 37
        sc = frame6.scale(j)
        center_val = needlet_eval(frame6, j, k, SpherePoint(*sc.centers[k]))
        rng = np.random.default_rng(11)
        pts = rng.standard_normal((500, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        vals = needlet_eval(frame6, j, k, pts)
        assert center_val > 0
        assert np.max(np.abs(vals)) <= center_val + 1e-12

    def test_far_field_decay(self, frame6):
        # |psi| at distance pi/2 is < 1e-3 of the peak for B=2, j=4
        j, k = 4, 1000
        sc = frame6.scale(j)
        xi = sc.centers[k]
        helper = np.array([0.0, 0.0, 1.0]) if abs(xi[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        e1 = np.cross(xi, helper)
        e1 /= np.linalg.norm(e1)
        far = SpherePoint(*e1)
        peak = needlet_eval(frame6, j, k, SpherePoint(*xi))
        assert abs(needlet_eval(frame6, j, k, far)) < 1e-3 * peak

    def test_truncation_is_exact(self, frame6):
        # window slots outside (B^(j-1), B^(j+1)) contribute exactly nothing
        sc = frame6.scale(3)
        u = np.linspace(-1, 1, 101)
        from needlab.sphere import windowed_legendre_sum

        padded = np.concatenate([sc.profile_coeffs, np.zeros(8)])
        assert np.array_equal(
            windowed_legendre_sum(padded, u), windowed_legendre_sum(sc.profile_coeffs, u)
        )

    def test_index_error(self, frame6):
        with pytest.raises(IndexError):
            needlet_eval(frame6, 3, 10**6, SpherePoint(0, 0, 1.0))

    def test_interp_matches_exact(self, frame6):
        rng = np.random.default_rng(12)
        u = rng.uniform(-1, 1, 4000)
        exact = profile(frame6, 4, u)
        approx = profile_interp(frame6, 4, u)
        scale = np.max(np.abs(exact))
        assert np.max(np.abs(exact - approx)) < 2e-4 * scale


class TestNorms:
    def test_l2_exact_sum_oracle(self, frame6):
        # ||psi||_2^2 = lambda * sum b^2 (2l+1) / (4 pi) by the addition theorem
        for j, k in ((2, 10), (4, 321)):
            sc = frame6.scale(j)
            ls = np.arange(sc.l_max + 1)
            exact = math.sqrt(
                sc.weights[k] * np.sum(sc.window_values**2 * (2 * ls + 1)) / FOUR_PI
            )
            assert abs(lp_norm(frame6, j, k, 2.0) - exact) < 1e-12

    def test_l2_window(self, frame6):
        nc = norm_constants(frame6, 2.0, js=range(2, 7))
        assert 0 < nc.q_low <= nc.q_high < 1.0  # sits inside (0, 1)
        assert nc.q_high / nc.q_low <= 5.0

    def test_l1_scaling(self, frame6):
        nc = norm_constants(frame6, 1.0, js=range(2, 7))
        assert nc.q_high / nc.q_low <= 5.0

    def test_l3_scaling(self, frame6):
        # ||psi||_3^3 * B^-j bounded above across scales
        vals = []
        for j in range(2, 7):
            sc = frame6.scale(j)
            k = int(np.argmax(sc.weights))
            vals.append(lp_norm(frame6, j, k, 3.0) ** 3 * 2.0 ** (-j))
        assert max(vals) < 10 * min(vals)
        assert max(vals) < 1.0

    def test_linf_scaling(self, frame6):
        nc = norm_constants(frame6, math.inf, js=range(2, 7))
        assert nc.q_high / nc.q_low <= 5.0

    def test_invalid_p(self, frame6):
        with pytest.raises(ValueError):
            lp_norm(frame6, 3, 0, 0.5)


class TestLocalization:
    def test_tau3_stability(self, frame6):
        fit = fit_localization(frame6, 3, 2000, js=range(2, 7))
        vals = list(fit.max_ratio_by_scale.values())
        assert math.isfinite(fit.kappa_hat)
        assert max(vals) / min(vals) <= 3.0

    def test_tau2_stability(self, frame6):
        fit = fit_localization(frame6, 2, 2000, js=range(2, 7))
        vals = list(fit.max_ratio_by_scale.values())
        assert max(vals) / min(vals) <= 3.0

    def test_tau4_finite(self, frame6):
        # the tau=4 envelope is dominated by the genuine antipodal floor of
        # the bump window, which oscillates with j; finiteness and a loose
        # uniform factor are what hold at these scales
        fit = fit_localization(frame6, 4, 2000, js=range(2, 7))
        vals = list(fit.max_ratio_by_scale.values())
        assert math.isfinite(fit.kappa_hat)
        assert max(vals) / min(vals) <= 25.0

    def test_center_ratio_below_kappa(self, frame6):
        fit = fit_localization(frame6, 3, 2000, js=range(2, 7))
        j, k = 3, 17
        sc = frame6.scale(j)
        val = needlet_eval(frame6, j, k, SpherePoint(*sc.centers[k]))
        assert abs(val) / 2.0**j <= fit.kappa_hat + 1e-12

    def test_sample_saturation(self, frame6):
        a = fit_localization(frame6, 3, 2000, js=range(2, 7))
        b = fit_localization(frame6, 3, 4000, js=range(2, 7))
        assert abs(b.kappa_hat - a.kappa_hat) < 0.05 * a.kappa_hat


class TestUniformSum:
    def test_abs_sum_bounded(self, frame6):
        # max_z sum_k |psi_jk(z)| <= kappa'' B^j with kappa'' stable in j
        rng = np.random.default_rng(13)
        z = rng.standard_normal((150, 3))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        ratios = []
        for j in range(2, 6):
            vals = abs_sum_at(frame6, j, z)
            ratios.append(float(vals.max()) / 2.0**j)
        assert max(ratios) / min(ratios) < 3.0


class TestAnalysisSynthesis:
    @pytest.fixture(scope="class")
    def frame4(self):
        return build_frame(2.0, 4)

    def test_constant_has_no_detail(self, frame4):
        f = lambda xyz: np.full(xyz.shape[0], 1.0 / FOUR_PI)
        coeffs = analyze(frame4, f)
        for j, beta in coeffs.betas.items():
            if j > 1:
                assert np.max(np.abs(beta)) < 1e-12
        assert abs(coeffs.average - 1.0 / FOUR_PI) < 1e-14

    def test_bandlimited_round_trip(self, frame4):
        # real-form Y_32 is the degree-3 polynomial below
        c = 0.25 * math.sqrt(105.0 / math.pi)
        f = lambda xyz: c * (xyz[:, 0] ** 2 - xyz[:, 1] ** 2) * xyz[:, 2]
        coeffs = analyze(frame4, f, degree=3)
        rng = np.random.default_rng(14)
        pts = rng.standard_normal((400, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        rec = synthesize(frame4, coeffs, pts)
        assert np.max(np.abs(rec - f(pts))) < 1e-8

    def test_zero_function(self, frame4):
        f = lambda xyz: np.zeros(xyz.shape[0])
        coeffs = analyze(frame4, f)
        assert all(np.all(b == 0.0) for b in coeffs.betas.values())
        pts = np.array([[0.0, 0.0, 1.0]])
        assert synthesize(frame4, coeffs, pts)[0] == 0.0

    def test_bandwidth_guard(self, frame4):
        f = lambda xyz: xyz[:, 2]
        with pytest.raises(BandwidthError):
            analyze(frame4, f, degree=99)


class TestDiagnostics:
    def test_json_payload(self, frame6, tmp_path):
        from needlab.frame import write_frame_diagnostics
        import json

        path = tmp_path / "diag.json"
        write_frame_diagnostics(frame6, str(path))
        data = json.loads(path.read_text())
        assert data["B"] == 2.0
        assert len(data["scales"]) == 7
        assert {"j", "K_j", "degree_exact"} <= set(data["scales"][0])
        assert "2.0" in data["norm_constants"]
