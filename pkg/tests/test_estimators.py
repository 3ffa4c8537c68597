import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochnse.basis import TorusSpec, build_basis
from stochnse.errors import DegenerateDenominator, ExponentOutOfRange
from stochnse.estimators import (EstimatorConfig, denominator, estimate, estimate_check, estimate_hat,
                                 estimate_tilde, ito_mode_integral, ito_numerator, kappa,
                                 noise_martingale, predicted_std, theoretical_variance)
from stochnse.linear import OuParams, linear_energy_growth, ou_time_integral_moments, simulate_linear
from stochnse.noise import NoiseSpec
from stochnse.solver import SolverConfig, simulate
from stochnse.trajectory import Trajectory

A2 = SolverConfig(nu=1.0, noise=NoiseSpec(1.2, 0), grid_n=64, T=1.0, dt=1e-3)


def synthetic(basis, states, T=1.0, gamma=1.5):
    states = np.asarray(states, dtype=float)
    times = np.linspace(0.0, T, len(states))
    return Trajectory(times, states, basis, gamma, config={"nonlinear": True})


@pytest.fixture(scope="module")
def a2_traj():
    return simulate(A2, 0)


@pytest.fixture(scope="module")
def a2_panel():
    """Per-replicate estimator values for 20 replicates of the reference setup."""
    rows = []
    for r in range(20):
        traj = simulate(A2, r)
        row = {}
        for N in (8, 16, 32):
            cfg = EstimatorConfig(1.2, N)
            for kind in ("tilde", "check", "hat"):
                row[(kind, N)] = estimate(traj, cfg, kind)
        for stride in (1, 2, 4, 8):
            row[("stride", stride)] = estimate_tilde(traj, EstimatorConfig(1.2, 32, stride)).value
        rows.append(row)
    return rows


class TestItoIntegral:
    def test_zero_path(self, small_basis):
        tr = synthetic(small_basis, np.zeros((11, 24)), T=2.0)
        lam = small_basis.eigenvalues[5]
        expected = -2.0 * lam ** (1 + 2 * 0.7 - 2 * 1.5) / 2
        assert ito_mode_integral(tr, 5, 0.7) == pytest.approx(expected, rel=1e-14)

    def test_exact_cancellation(self, small_basis):
        lam = small_basis.eigenvalues[4]
        states = np.zeros((5, 24))
        states[-1, 4] = math.sqrt(1.0 * lam ** -3.0)
        assert ito_mode_integral(synthetic(small_basis, states), 4, 1.3) == pytest.approx(0, abs=1e-15)

    def test_forms_agree(self, a2_traj):
        for k in (0, 7, 31):
            a = ito_mode_integral(a2_traj, k, 1.2)
            s = ito_mode_integral(a2_traj, k, 1.2, form="sum")
            assert s == pytest.approx(a, rel=1e-9, abs=1e-12)
        with pytest.raises(ValueError):
            ito_mode_integral(a2_traj, 0, 1.2, form="bogus")

    def test_numerator_is_sum_of_modes(self, a2_traj):
        total = sum(ito_mode_integral(a2_traj, k, 1.2) for k in range(16))
        assert ito_numerator(a2_traj, 1.2, 16) == pytest.approx(total, rel=1e-12)

    def test_ou_mean_identity(self, torus):
        basis = build_basis(torus, 8)
        spec = NoiseSpec(1.5, 21)
        nu, alpha, k = 0.8, 0.5, 4
        vals = np.array([ito_mode_integral(simulate_linear(basis, spec, nu, 1.0, 0.01, r), k, alpha)
                         for r in range(1000)])
        lam = basis.eigenvalues[k]
        target = -nu * lam ** (2 + 2 * alpha) * ou_time_integral_moments(OuParams(nu, lam, 1.5), 1.0)[0]
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean() - target) < 3 * se


class TestDenominator:
    def test_zero_path(self, small_basis):
        with pytest.raises(DegenerateDenominator):
            denominator(synthetic(small_basis, np.zeros((11, 24))), 1.0, 8)

    def test_constant_single_mode(self, small_basis):
        states = np.zeros((101, 24))
        states[:, 0] = 0.3
        tr = synthetic(small_basis, states, T=2.0)
        assert denominator(tr, 0.6, 1) == pytest.approx(1.0 ** (3.2) * 0.09 * 2.0, rel=1e-12)

    def test_linear_mean(self, torus):
        basis = build_basis(torus, 16)
        spec = NoiseSpec(1.5, 8)
        alpha, N = 1.0, 16
        vals = np.array([denominator(simulate_linear(basis, spec, 1.0, 1.0, 1e-3, r), alpha, N)
                         for r in range(400)])
        exact = linear_energy_growth(basis, 1.0, 1.5, 1.0, 1 + alpha, N)
        assert abs(vals.mean() - exact) < 3 * vals.std(ddof=1) / math.sqrt(400)


class TestEstimators:
    def test_linear_data_all_equal(self, small_basis):
        tr = simulate_linear(small_basis, NoiseSpec(1.5, 2), 1.0, 1.0, 1e-3, 0)
        cfg = EstimatorConfig(1.5, 12)
        t, c, h = (estimate(tr, cfg, k) for k in ("tilde", "check", "hat"))
        assert t.value == c.value == h.value
        assert kappa(tr, cfg) == 0.0

    def test_single_path_within_prediction(self, a2_traj):
        cfg = EstimatorConfig(1.2, 32)
        res = estimate_tilde(a2_traj, cfg)
        sd = predicted_std(a2_traj.basis, cfg, 1.0, 1.2, 1.0)
        assert abs(res.value - 1.0) < 5 * sd
        assert res.denominator > 0 and res.kind == "tilde" and res.N == 32

    def test_representation_identity(self, a2_traj):
        cfg = EstimatorConfig(1.2, 32)
        res = estimate_tilde(a2_traj, cfg)
        reconstructed = 1.0 - noise_martingale(a2_traj, 1.2, 32) / res.denominator
        assert abs(res.value - reconstructed) <= 10 * math.sqrt(a2_traj.dt)
        # the scheme is far more accurate than the stated tolerance
        assert abs(res.value - reconstructed) < 0.05

    def test_hat_identity(self, a2_traj):
        for N in (8, 32):
            cfg = EstimatorConfig(1.2, N)
            t, h = estimate_tilde(a2_traj, cfg), estimate_hat(a2_traj, cfg)
            assert h.value == pytest.approx(t.value - t.kappa, rel=1e-12)
            assert kappa(a2_traj, cfg) == t.kappa

    def test_check_at_full_cutoff_equals_tilde(self):
        cfg = SolverConfig(nu=1.0, noise=NoiseSpec(1.2, 4), grid_n=16, T=0.2, dt=1e-3)
        traj = simulate(cfg, 0)
        ecfg = EstimatorConfig(1.2, traj.mode_count)
        t, c = estimate_tilde(traj, ecfg), estimate_check(traj, ecfg)
        assert c.value == pytest.approx(t.value, rel=1e-12)
        assert c.numerator_nonlinear == pytest.approx(t.numerator_nonlinear, rel=1e-10)

    def test_check_single_mode_is_exactly_linear(self, a2_traj):
        res = estimate_check(a2_traj, EstimatorConfig(1.2, 1))
        assert res.numerator_nonlinear == 0.0
        assert res.value == estimate_hat(a2_traj, EstimatorConfig(1.2, 1)).value

    def test_kappa_single_mode_data(self):
        cfg = SolverConfig(nu=1.0, noise=NoiseSpec(1.2), grid_n=16, T=0.1, dt=1e-3,
                           zero_noise=True, u0={3: 1.0})
        assert abs(kappa(simulate(cfg), EstimatorConfig(1.2, 4))) < 1e-12

    def test_linear_hat_recovers_viscosity(self, torus):
        basis = build_basis(torus, 16)
        tr = simulate_linear(basis, NoiseSpec(1.5, 3), 0.7, 10.0, 1e-3, 0)
        cfg = EstimatorConfig(1.5, 16)
        sd = predicted_std(basis, cfg, 0.7, 1.5, 10.0)
        assert abs(estimate_hat(tr, cfg).value - 0.7) < 3 * sd

    def test_degenerate(self, small_basis):
        with pytest.raises(DegenerateDenominator):
            estimate_hat(synthetic(small_basis, np.zeros((11, 24))), EstimatorConfig(1.0, 4))

    def test_bad_inputs(self, a2_traj):
        with pytest.raises(ValueError):
            EstimatorConfig(1.0, 0)
        with pytest.raises(ValueError):
            estimate(a2_traj, EstimatorConfig(1.0, 4), "median")
        with pytest.raises(ValueError):
            estimate(a2_traj, EstimatorConfig(1.0, 10 ** 6), "hat")

    def test_regimes(self):
        assert EstimatorConfig(1.2, 8).regime(1.2) == "normal"
        assert EstimatorConfig(0.5, 8).regime(1.2) == "consistent"
        assert EstimatorConfig(0.1, 8).regime(1.2) == "none"

    def test_zero_modes_appended(self, torus, rng):
        small = build_basis(torus, 20)
        big = build_basis(torus, 40)
        states = np.zeros((201, 20))
        states[1:] = 0.1 * rng.standard_normal((200, 20)).cumsum(axis=0) / 10
        pad = np.hstack([states, np.zeros((201, 20))])
        cfg = EstimatorConfig(1.0, 8)
        for kind in ("tilde", "check", "hat"):
            a = estimate(synthetic(small, states), cfg, kind).value
            b = estimate(synthetic(big, pad), cfg, kind).value
            assert b == pytest.approx(a, rel=1e-12)

    def test_dict_fields(self, a2_traj):
        d = estimate_hat(a2_traj, EstimatorConfig(1.2, 8)).to_dict()
        assert set(d) == {"kind", "value", "numerator_ito", "numerator_nonlinear", "denominator",
                          "kappa", "alpha", "N"}


class TestPanelTrends:
    @staticmethod
    def _median(panel, f):
        return float(np.median([f(row) for row in panel]))

    def test_kappa_shrinks(self, a2_panel):
        k8 = self._median(a2_panel, lambda r: abs(r[("tilde", 8)].kappa))
        k32 = self._median(a2_panel, lambda r: abs(r[("tilde", 32)].kappa))
        assert k32 < k8

    def test_check_approaches_tilde(self, a2_panel):
        d = [self._median(a2_panel, lambda r, N=N: abs(r[("check", N)].value - r[("tilde", N)].value))
             for N in (8, 16, 32)]
        assert d[2] < d[0]

    def test_hat_identity_on_panel(self, a2_panel):
        for row in a2_panel:
            for N in (8, 16, 32):
                t, h = row[("tilde", N)], row[("hat", N)]
                assert h.value == pytest.approx(t.value - t.kappa, rel=1e-12)

    def test_subsampling_converges(self, a2_panel):
        def diff(s_fine, s_coarse):
            return self._median(a2_panel, lambda r: abs(r[("stride", s_coarse)] - r[("stride", s_fine)]))

        assert diff(1, 2) < diff(4, 8)


class TestTheoreticalVariance:
    def test_reference_value(self):
        basis = build_basis(TorusSpec(), 4)
        assert theoretical_variance(basis, EstimatorConfig(1.7, 4), 1.0, 1.7, 1.0)[1] == pytest.approx(4.0)

    @settings(max_examples=30)
    @given(T=st.floats(0.1, 100), a=st.floats(1.05, 3))
    def test_inverse_horizon(self, T, a):
        basis = build_basis(TorusSpec(), 16)
        cfg = EstimatorConfig(a, 16)
        f1, i1 = theoretical_variance(basis, cfg, 1.3, 1.2, 1.0)
        fT, iT = theoretical_variance(basis, cfg, 1.3, 1.2, T)
        assert iT == pytest.approx(i1 / T, rel=1e-12)
        assert fT == pytest.approx(f1 / T, rel=1e-12)

    @pytest.mark.parametrize("alpha", [1.2, 1.5, 1.9])
    def test_idealized_limit(self, alpha):
        basis = build_basis(TorusSpec(), 1)
        N = 10_000
        lam = basis.lambda_1 * np.arange(1, N + 1)
        finite, ideal = theoretical_variance(basis, EstimatorConfig(alpha, N), 1.0, 1.2, 1.0, lam)
        assert finite == pytest.approx(ideal, rel=0.02)

    def test_range(self):
        basis = build_basis(TorusSpec(), 8)
        with pytest.raises(ExponentOutOfRange):
            theoretical_variance(basis, EstimatorConfig(0.7, 8), 1.0, 1.2, 1.0)
