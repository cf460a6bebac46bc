import math

import numpy as np
import pytest
from scipy.stats import genpareto

from eqte import (
    AdTestResult,
    GpdParams,
    ad_pvalue,
    ad_statistic,
    fit_gpd_mle,
    gpd_cdf,
    gpd_tail_quantile,
)
from eqte.errors import (
    DegenerateTailError,
    DomainError,
    InsufficientTailError,
    InvalidArgumentError,
)


def gpd_loglik(y, sigma, xi):
    return float(np.sum(genpareto.logpdf(y, c=xi, loc=0.0, scale=sigma)))


class TestCdf:
    def test_lower_endpoint(self):
        assert gpd_cdf(3.0, 3.0, GpdParams(1.0, 0.5)) == 0.0

    def test_exponential_limit(self):
        assert gpd_cdf(1.0, 0.0, GpdParams(1.0, 0.0)) == pytest.approx(
            1.0 - math.exp(-1.0), abs=1e-12
        )

    def test_unit_shape(self):
        assert gpd_cdf(1.0, 0.0, GpdParams(1.0, 1.0)) == pytest.approx(0.5, abs=1e-12)

    def test_below_threshold_rejected(self):
        with pytest.raises(DomainError):
            gpd_cdf(-0.1, 0.0, GpdParams(1.0, 0.5))

    def test_beyond_negative_shape_endpoint(self):
        # upper endpoint at u - sigma/xi = 2.5
        assert gpd_cdf(5.0, 0.0, GpdParams(1.0, -0.4)) == 1.0

    def test_continuity_at_shape_switch(self):
        lo = gpd_cdf(1.3, 0.0, GpdParams(1.0, 2e-8))
        hi = gpd_cdf(1.3, 0.0, GpdParams(1.0, 0.0))
        assert abs(lo - hi) < 1e-6

    def test_monotone_in_y(self):
        params = GpdParams(2.0, 0.4)
        ys = np.linspace(0.0, 50.0, 200)
        vals = [gpd_cdf(v, 0.0, params) for v in ys]
        assert np.all(np.diff(vals) >= 0.0)
        assert vals[0] == 0.0 and vals[-1] < 1.0


class TestTailQuantile:
    def test_threshold_at_zero_depth(self):
        assert gpd_tail_quantile(0.9, 7.0, GpdParams(1.0, 0.5), 0.1) == 7.0

    def test_unit_shape_closed_form(self):
        assert gpd_tail_quantile(0.95, 0.0, GpdParams(1.0, 1.0), 0.1) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_exponential_closed_form(self):
        assert gpd_tail_quantile(0.99, 0.0, GpdParams(1.0, 0.0), 0.1) == pytest.approx(
            math.log(10.0), abs=1e-12
        )

    def test_bulk_levels_rejected(self):
        with pytest.raises(DomainError):
            gpd_tail_quantile(0.85, 0.0, GpdParams(1.0, 0.5), 0.1)

    def test_strictly_increasing_and_unbounded_for_heavy_tail(self):
        params = GpdParams(1.0, 0.7)
        taus = np.linspace(0.901, 0.99999, 50)
        q = [gpd_tail_quantile(t, 0.0, params, 0.1) for t in taus]
        assert np.all(np.diff(q) > 0.0)
        assert gpd_tail_quantile(1.0 - 1e-12, 0.0, params, 0.1) > 1e6

    def test_inverts_cdf(self):
        params = GpdParams(2.0, 0.3)
        zeta = 0.2
        for tau in (0.85, 0.9, 0.99, 0.9995):
            q = gpd_tail_quantile(tau, 5.0, params, zeta)
            conditional = 1.0 - (1.0 - tau) / zeta
            assert gpd_cdf(q, 5.0, params) == pytest.approx(conditional, abs=1e-9)


class TestMle:
    def test_recovers_heavy_tail_parameters(self):
        y = genpareto.rvs(c=0.3, scale=2.0, size=2000, random_state=np.random.default_rng(11))
        params = fit_gpd_mle(y)
        assert params.sigma == pytest.approx(2.0, abs=0.3)
        assert params.xi == pytest.approx(0.3, abs=0.1)

    def test_exponential_data_gives_near_zero_shape(self):
        y = np.random.default_rng(12).exponential(1.0, 5000)
        params = fit_gpd_mle(y)
        assert abs(params.xi) < 0.08

    def test_too_few_exceedances(self):
        with pytest.raises(InsufficientTailError):
            fit_gpd_mle(np.ones(5) + np.arange(5) * 0.1)

    def test_degenerate_tail(self):
        with pytest.raises(DegenerateTailError):
            fit_gpd_mle(np.full(20, 3.0))

    def test_nonpositive_rejected(self):
        with pytest.raises(InvalidArgumentError):
            fit_gpd_mle(np.concatenate([np.ones(10), [-1.0]]))

    def test_loglik_at_least_scipy(self):
        rng = np.random.default_rng(21)
        for c, scale in ((0.5, 1.0), (0.0, 2.0), (-0.2, 1.5), (1.2, 0.5)):
            y = genpareto.rvs(c=c, scale=scale, size=400, random_state=rng)
            params = fit_gpd_mle(y)
            mine = gpd_loglik(y, params.sigma, params.xi)
            c_s, _, s_s = genpareto.fit(y, floc=0.0)
            if -0.5 < c_s <= 2.0:
                assert mine >= gpd_loglik(y, s_s, c_s) - 1e-8
            # random comparison points never beat the fit
            for _ in range(20):
                s2 = params.sigma * rng.uniform(0.5, 2.0)
                x2 = min(max(params.xi + rng.uniform(-0.3, 0.3), -0.49), 2.0)
                assert mine >= gpd_loglik(y, s2, x2) - 1e-8

    def test_gradient_vanishes_at_interior_optimum(self):
        y = genpareto.rvs(c=0.4, scale=1.0, size=800,
                          random_state=np.random.default_rng(31))
        params = fit_gpd_mle(y)
        h = 1e-6
        dsig = (gpd_loglik(y, params.sigma + h, params.xi)
                - gpd_loglik(y, params.sigma - h, params.xi)) / (2 * h)
        dxi = (gpd_loglik(y, params.sigma, params.xi + h)
               - gpd_loglik(y, params.sigma, params.xi - h)) / (2 * h)
        # central differences carry O(h^2 * f''') noise; 1e-3 resolves 1e-6 grads
        assert abs(dsig) < 1e-3
        assert abs(dxi) < 1e-3

    def test_scale_equivariance(self):
        y = genpareto.rvs(c=0.2, scale=1.0, size=300,
                          random_state=np.random.default_rng(41))
        base = fit_gpd_mle(y)
        for a in (0.01, 7.3, 1e4):
            scaled = fit_gpd_mle(a * y)
            assert scaled.sigma == pytest.approx(a * base.sigma, rel=1e-6)
            assert scaled.xi == pytest.approx(base.xi, abs=1e-6)

    def test_shape_clamped_to_box(self):
        # uniform data has xi = -1; the constrained fit stops at the box edge
        y = np.random.default_rng(51).uniform(0.0, 1.0, 500)
        params = fit_gpd_mle(y)
        assert -0.5 < params.xi <= -0.45


class TestAdStatistic:
    def test_formula_fixture(self):
        # z = (0.1, 0.5, 0.9) under the unit exponential: x = -log(1-z)
        x = -np.log1p(-np.array([0.1, 0.5, 0.9]))
        a2 = ad_statistic(x, GpdParams(1.0, 0.0))
        assert a2 == pytest.approx(0.27255, abs=5e-5)

    def test_model_quantiles_give_small_statistic(self):
        params = GpdParams(1.5, 0.3)
        n = 500
        z = (np.arange(1, n + 1) - 0.5) / n
        x = params.sigma / params.xi * ((1.0 - z) ** -params.xi - 1.0)
        assert ad_statistic(x, params) < 1.0

    def test_single_far_tail_point_blows_up(self):
        params = GpdParams(1.0, 0.0)
        assert ad_statistic(np.array([40.0]), params) > 10.0

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ad_statistic(np.array([]), GpdParams(1.0, 0.0))


class TestAdPvalue:
    def test_deterministic_given_seed(self):
        y = genpareto.rvs(c=0.4, scale=1.0, size=120,
                          random_state=np.random.default_rng(61))
        r1 = ad_pvalue(y, n_boot=99, seed=7)
        r2 = ad_pvalue(y, n_boot=99, seed=7)
        assert r1 == r2
        assert isinstance(r1, AdTestResult)
        assert 0.0 < r1.p_value <= 1.0

    def test_nboot_floor(self):
        with pytest.raises(InvalidArgumentError):
            ad_pvalue(np.ones(20) + np.arange(20), n_boot=50, seed=0)

    @pytest.mark.slow
    def test_pvalue_roughly_uniform_under_null(self):
        rng = np.random.default_rng(71)
        hits = 0
        trials = 200
        for _ in range(trials):
            y = genpareto.rvs(c=0.3, scale=1.0, size=80, random_state=rng)
            if ad_pvalue(y, n_boot=99, seed=int(rng.integers(2**31))).p_value < 0.1:
                hits += 1
        assert abs(hits / trials - 0.1) <= 0.06

    @pytest.mark.slow
    def test_power_against_lognormal_body(self):
        # the lognormal needs a large sample for the misfit at a low
        # threshold to become detectable
        rng = np.random.default_rng(81)
        rejections = 0
        for _ in range(10):
            body = rng.lognormal(0.0, 1.0, 40_000)
            threshold = np.quantile(body, 0.2)
            exceed = body[body > threshold] - threshold
            if ad_pvalue(exceed, n_boot=99, seed=int(rng.integers(2**31))).p_value < 0.05:
                rejections += 1
        assert rejections >= 6
