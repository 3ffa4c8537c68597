import math

import numpy as np
import pytest

from stochnse.errors import ConfigError, ExponentOutOfRange
from stochnse.experiments import (INSUFFICIENT_REPLICATES, ExperimentPlan, fit_loglog_slope,
                                  linear_moment_rows, run_consistency, run_linear_battery,
                                  run_normality, run_residual_study, subset, with_solver)
from stochnse.noise import NoiseSpec
from stochnse.solver import SolverConfig

KINDS = [(1.2, "tilde"), (1.2, "check"), (1.2, "hat")]


def tiny(**kw):
    base = dict(nu=1.0, noise=NoiseSpec(1.2, 5), grid_n=16, T=0.05, dt=1e-3)
    base.update(kw)
    return SolverConfig(**base)


class TestPlan:
    def test_validation(self):
        with pytest.raises(ConfigError, match="replicates"):
            ExperimentPlan(tiny(), KINDS, [4], 1)
        with pytest.raises(ConfigError, match="increasing"):
            ExperimentPlan(tiny(), KINDS, [8, 4], 2)
        with pytest.raises(ConfigError, match="M_sim/2"):
            ExperimentPlan(tiny(), KINDS, [4, tiny().mode_count], 2)
        with pytest.raises(ConfigError, match="estimator"):
            ExperimentPlan(tiny(), [(1.2, "mean")], [4], 2)

    def test_regime_guards(self):
        with pytest.raises(ExponentOutOfRange):
            run_consistency(ExperimentPlan(tiny(), [(0.1, "hat")], [4], 2))
        with pytest.raises(ExponentOutOfRange):
            run_normality(ExperimentPlan(tiny(), [(0.6, "hat")], [4], 2))

    def test_zero_horizon_rejected(self):
        with pytest.raises(ConfigError, match="solver.T"):
            tiny(T=0.0)


@pytest.fixture(scope="module")
def report():
    return run_normality(ExperimentPlan(tiny(), KINDS, [2, 4, 8], 2))


class TestSmoke:
    def test_schema(self, report):
        d = report.to_dict()
        assert {"study", "nu_true", "replicates", "entries", "failures", "failure_fraction",
                "success_fraction", "wall_time", "config_hash"} <= set(d)
        assert len(report.entries) == 9
        assert len(report.rows()) == 18
        e = report.entry("hat", 4)
        assert len(e.values) == 2 and e.n_success == 2
        assert np.all(np.isfinite(e.values))

    def test_insufficient_replicates_flag(self, report):
        for e in report.entries:
            assert INSUFFICIENT_REPLICATES in e.flags
            assert e.ks_pvalue is None

    def test_totals(self, report):
        assert report.failure_fraction + report.success_fraction == 1.0
        assert report.failure_fraction == 0.0

    def test_failures_are_aggregated(self):
        plan = ExperimentPlan(tiny(u0={0: 5.0}, blowup_bound=1.0), KINDS, [2], 3)
        rep = run_consistency(plan)
        assert rep.failure_fraction == 1.0 and rep.success_fraction == 0.0
        assert all("BlowUp" in msg for msg in rep.failures.values())
        assert math.isnan(rep.entries[0].median_abs_error)

    def test_median_trend_accessor(self, report):
        assert [n for n, _ in report.median_trend("tilde")] == [2, 4, 8]


class TestOrderIndependence:
    def test_subset_and_offset_are_bitwise(self):
        plan = ExperimentPlan(tiny(), KINDS, [4, 8], 4)
        full = run_consistency(plan)
        part = run_consistency(ExperimentPlan(tiny(), KINDS, [4, 8], 2, first_replicate=2))
        sub = subset(full, [2, 3])
        for a, b in zip(part.entries, sub.entries):
            assert a.values == b.values
            assert a.median_abs_error == b.median_abs_error
        # reversed order of execution: reduction is by replicate index
        rev = subset(full, [3, 2])
        assert sorted(rev.entries[0].values) == sorted(part.entries[0].values)

    def test_workers_do_not_change_results(self):
        plan = ExperimentPlan(tiny(), KINDS, [4], 3)
        serial = run_consistency(plan)
        pooled = run_consistency(ExperimentPlan(tiny(), KINDS, [4], 3, workers=2))
        assert [e.values for e in serial.entries] == [e.values for e in pooled.entries]

    def test_subset_rejects_unknown(self):
        rep = run_consistency(ExperimentPlan(tiny(), KINDS, [4], 2))
        with pytest.raises(ValueError):
            subset(rep, [7])


class TestLinearStudies:
    def test_consistency_trend(self):
        cfg = SolverConfig(nu=1.0, noise=NoiseSpec(1.5, 1), grid_n=16, T=5.0, dt=1e-3, nonlinear=False)
        rep = run_consistency(ExperimentPlan(cfg, [(1.5, "hat")], [8, 16, 32], 30))
        med = [m for _, m in rep.median_trend("hat")]
        assert med[0] > med[1] > med[2]

    def test_normality(self):
        cfg = SolverConfig(nu=1.0, noise=NoiseSpec(1.2, 2), grid_n=16, m_sim=64, T=1.0, dt=1e-3,
                           nonlinear=False)
        rep = run_normality(ExperimentPlan(cfg, [(1.2, "hat")], [32], 200))
        e = rep.entry("hat", 32)
        assert e.ks_pvalue > 0.01
        assert 0.75 <= e.variance_ratio <= 1.33
        assert e.idealized_variance == pytest.approx(4.0)

    def test_battery(self):
        cfg = SolverConfig(nu=1.0, noise=NoiseSpec(1.2, 3), T=1.0, dt=1e-3)
        rep = run_linear_battery(cfg, replicates=400, modes=20, beta=2.2, n_grid=(16, 32, 64, 128))
        assert rep.target_slope == pytest.approx(2.0)
        assert abs(rep.exact_slope - 2.0) < 0.15
        assert abs(rep.empirical_slope - 2.0) < 0.15
        assert np.all(np.abs(rep.z_score) < 4)
        rows = linear_moment_rows(rep)
        assert len(rows) == 20 and rows[0][0] == 1

    def test_battery_guards(self):
        with pytest.raises(ExponentOutOfRange):
            run_linear_battery(tiny(), replicates=4, beta=1.0)
        with pytest.raises(ConfigError):
            run_linear_battery(tiny(), replicates=1)


def test_slope_fit():
    x = np.array([16, 32, 64, 128])
    assert fit_loglog_slope(x, 3.0 * x ** 1.7) == pytest.approx(1.7)


class TestResidualStudy:
    def test_requires_tracking(self):
        with pytest.raises(ConfigError, match="track_residual"):
            run_residual_study(tiny(), [0.4], [4, 8])

    def test_monotone_grid(self):
        with pytest.raises(ConfigError, match="increasing"):
            run_residual_study(tiny(track_residual=True), [0.4], [8, 4])

    def test_linear_residual_vanishes(self):
        rep = run_residual_study(tiny(track_residual=True, nonlinear=False), [0.4], [4, 8], 2)
        assert rep.i2_mean[0.4] == [0.0, 0.0]

    def test_nonlinear_residual_positive(self):
        rep = run_residual_study(tiny(track_residual=True, T=0.1), [0.4, 0.6], [4, 8, 16], 2)
        assert all(v > 0 for v in rep.i2_mean[0.4])
        assert set(rep.decay_factor) == {0.4, 0.6}
        assert rep.to_dict()["n_grid"] == [4, 8, 16]


def test_with_solver():
    plan = ExperimentPlan(tiny(), KINDS, [4], 2)
    changed = with_solver(plan, dt=5e-4)
    assert changed.solver.dt == 5e-4 and plan.solver.dt == 1e-3
