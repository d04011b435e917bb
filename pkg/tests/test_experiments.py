import math

import numpy as np
import pytest

from effrank.errors import FitError, UnsupportedAlpha
from effrank.estimator import EstimatorConfig
from effrank.experiments import (
    concentration_tail, fit_affine_in_inverse_n, fit_line, fit_loglog, limit_sweep,
    moment_comparison, powerlaw_sweep, validate_ntk_limit, width_sweep, wilson_interval,
)
from effrank.kernels import RBF, MercerPowerLaw, mercer_moments, sample_dataset
from effrank.ntk import MLPSpec


class TestFits:
    def test_exact_line(self):
        n = np.array([100.0, 300.0, 1000.0, 3000.0])
        fit = fit_line(1 / n, 2.0 + 5.0 / n)
        assert fit.intercept == pytest.approx(2.0, abs=1e-12)
        assert fit.slope == pytest.approx(5.0, rel=1e-10)
        assert fit.residual_rms < 1e-12

    def test_constant_response(self):
        fit = fit_line([1.0, 2.0, 3.0, 4.0], [7.0] * 4)
        assert fit.slope == pytest.approx(0.0, abs=1e-12)
        assert fit.intercept == pytest.approx(7.0)

    def test_standard_errors_match_textbook(self, rng):
        x = np.linspace(0, 1, 30)
        y = 1 + 2 * x + rng.standard_normal(30) * 0.1
        fit = fit_line(x, y)
        resid = y - fit.intercept - fit.slope * x
        s2 = resid @ resid / 28
        assert fit.se_slope == pytest.approx(math.sqrt(s2 / np.sum((x - x.mean()) ** 2)), rel=1e-10)

    def test_loglog_power(self):
        m = np.array([64.0, 128, 256, 512])
        assert fit_loglog(m, 3 * m**-0.5).slope == pytest.approx(-0.5, rel=1e-12)

    def test_degenerate_design(self):
        with pytest.raises(FitError):
            fit_line([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_too_few_points(self):
        with pytest.raises(FitError):
            fit_line([1.0, 2.0], [1.0, 2.0])


class TestWilson:
    def test_contains_estimate(self):
        lo, hi = wilson_interval(30, 200)
        assert lo < 0.15 < hi

    def test_zero_count(self):
        lo, hi = wilson_interval(0, 200)
        assert lo == 0.0 and 0 < hi < 0.03


class TestLimitSweep:
    def test_single_n_has_no_fit(self):
        sweep = limit_sweep(RBF(0.2), "uniform01", [50], seeds=3)
        assert len(sweep.rows) == 1 and "inverse_n" not in sweep.fits

    def test_mercer_plateau(self):
        k = MercerPowerLaw(2.0, 1.0, 50)
        sweep = limit_sweep(k, "uniform01", [200, 600, 2000], seeds=8)
        r_inf = mercer_moments(k.spectrum())[2]
        assert sweep.fits["inverse_n"].intercept == pytest.approx(r_inf, rel=0.05)

    def test_reproducible_across_threads(self):
        a = limit_sweep(RBF(0.2), "uniform01", [20, 40, 80], seeds=4, threads=1)
        b = limit_sweep(RBF(0.2), "uniform01", [20, 40, 80], seeds=4, threads=3)
        assert a.rows == b.rows and a.fits["inverse_n"].to_dict() == b.fits["inverse_n"].to_dict()

    def test_estimator_mode_agrees_with_exact(self):
        kw = dict(seeds=10, master_seed=5)
        exact = limit_sweep(RBF(0.2), "uniform01", [100, 300], **kw)
        est = limit_sweep(RBF(0.2), "uniform01", [100, 300], exact=False, cfg=EstimatorConfig(), **kw)
        for e, x in zip(est.rows, exact.rows):
            assert abs(e["mean"] - x["mean"]) <= 3 * e["mean_se_reff"] / math.sqrt(e["seeds"])

    def test_moment_comparison_fields(self):
        sweep = limit_sweep(RBF(0.2), "uniform01", [50, 100, 200], seeds=3)
        out = moment_comparison(RBF(0.2), "uniform01", sweep, S=10_000)
        assert out["runs"] == 9
        assert out["r_inf_fit"] == sweep.fits["inverse_n"].intercept

    def test_ascending_required(self):
        with pytest.raises(ValueError):
            limit_sweep(RBF(0.2), "uniform01", [100, 50])

    def test_affine_fit_needs_three(self):
        sweep = limit_sweep(RBF(0.2), "uniform01", [30, 60], seeds=2)
        with pytest.raises(FitError):
            fit_affine_in_inverse_n(sweep)


class TestConcentration:
    def test_monotone_in_eps(self):
        res = concentration_tail(RBF(0.2), "uniform01", [25, 50], [0.1, 0.2, 0.4], trials=200,
                                 moment_samples=100_000)
        for n in (25, 50):
            probs = [r["prob"] for r in res.rows if r["n"] == n]
            assert probs == sorted(probs, reverse=True)
            assert all(r["ci_lo"] <= r["prob"] <= r["ci_hi"] for r in res.rows)

    def test_given_limit_skips_moments(self):
        res = concentration_tail(RBF(0.2), "uniform01", [25], [0.5], trials=200, r_inf=3.18)
        assert res.r_inf == 3.18 and res.fits_vs_n == {}

    def test_minimum_trials(self):
        with pytest.raises(ValueError):
            concentration_tail(RBF(0.2), "uniform01", [25], [0.5], trials=50, r_inf=3.0)


class TestWidthSweep:
    def test_single_width_has_no_fit(self):
        D = sample_dataset("sphere", 8, 4, 0)
        sweep = width_sweep(MLPSpec(4, 1, 1, 1), D, [64], seeds=3)
        assert sweep.fits == {} and sweep.rows[0]["seeds"] == 3

    def test_gap_order_stable_in_n(self):
        spec = MLPSpec(8, 1, 2, 1)
        gaps = [width_sweep(spec, sample_dataset("sphere", n, 8, 1), [512], seeds=10).rows[0]["median_gap"]
                for n in (32, 64)]
        assert 1 / 3 < gaps[1] / gaps[0] < 3

    def test_gate_small(self):
        D = sample_dataset("sphere", 6, 4, 2)
        out = validate_ntk_limit(MLPSpec(4, 1, 1, 1), D, m=1024, seeds=30)
        assert set(out["stats"]) >= {"trace", "offdiag_sum"}
        assert out["passed"]


class TestPowerlaw:
    def test_regimes(self):
        out = powerlaw_sweep([0.75, 1.0, 2.0], [10**3, 10**4, 10**5])
        s = out["summaries"]
        assert s[2.0]["regime"] == "plateau" and s[2.0]["r_inf"] == pytest.approx(2.5, abs=1e-2)
        assert s[1.0]["regime"] == "log_squared"
        assert s[0.75]["predicted"] == 0.5
        assert len(out["rows"]) == 9

    def test_rejects_alpha(self):
        with pytest.raises(UnsupportedAlpha):
            powerlaw_sweep([0.5], [10])
