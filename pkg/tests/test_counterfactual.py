import numpy as np
import pytest
from scipy.stats import genpareto

from eqte import (
    Dataset,
    GpdParams,
    GpdTailFit,
    GridConfig,
    ProposedFit,
    QuantileFit,
    StepCdf,
    build_grid,
    conditional_quantiles,
    estimate_effects,
    fit_proposed,
    fit_single_qr,
    gpd_tail_quantile,
    invert_cdf,
    marginal_cdf,
    select_transition,
    treated_cdf,
)
from eqte.errors import (
    EstimandUndefinedError,
    InsufficientTailError,
    InternalError,
    InvalidArgumentError,
    TailShapeWarning,
)
from eqte.threshold import ThresholdCandidate, TransitionSelection

CAND_LEVELS = tuple(np.linspace(0.75, 0.99, 10))


def gpd_tail_dataset(n, seed, xi=0.3, treatment_effect=2.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, n)
    d = rng.integers(0, 2, n)
    e = genpareto.rvs(c=xi, scale=1.0, size=n, random_state=rng)
    y = 1.0 + treatment_effect * d + 2.0 * x + e
    return Dataset.from_arrays(y, d, x.reshape(-1, 1), ["x"])


def pipeline_fit(ds, seed=0, grid=GridConfig(30, 10, 0.9995)):
    sel = select_transition(ds, CAND_LEVELS, n_boot=99, seed=seed)
    return fit_proposed(ds, sel, grid)


def manual_fit(t_coef=2.0, x_coef=1.0, n=20, n_treated=10, xi=0.5):
    grid = build_grid(0.8, 8, 4, 0.99)
    K = grid.transition_index
    coefs = np.column_stack(
        [np.linspace(-1.0, 1.0, K), np.full(K, t_coef), np.full(K, x_coef)]
    )
    bulk = QuantileFit(
        levels=grid.bulk_levels, coefficients=coefs,
        objective_value=0.0, duality_gap=0.0,
    )
    tail = GpdTailFit(
        threshold_coefficients=np.array([1.0, t_coef, x_coef]),
        params=GpdParams(1.0, xi),
        exceedance_rate=0.2,
        n_exceedances=50,
    )
    return ProposedFit(grid=grid, bulk=bulk, tail=tail, n=n, n_treated=n_treated)


def manual_selection(ds, level):
    beta = fit_single_qr(ds, level)
    n_exc = int(np.sum(ds.outcomes > ds.design_matrix @ beta))
    cand = ThresholdCandidate(level=level, coefficients=beta,
                              n_exceedances=n_exc, p_value=0.5)
    return TransitionSelection(
        candidates=(cand,), k_hat=0, selected_level=level,
        fdr_level=0.05, convention="paper-literal",
    )


class TestStepCdf:
    def test_invert_fixture(self):
        cdf = StepCdf(support=np.array([1.0, 2.0, 3.0]),
                      cum_mass=np.array([0.2, 0.5, 1.0]))
        assert invert_cdf(cdf, 0.5) == 2.0
        assert invert_cdf(cdf, 0.51) == 3.0
        assert invert_cdf(cdf, 0.2) == 1.0

    def test_invert_monotone_in_p(self):
        cdf = StepCdf(support=np.array([-1.0, 0.5, 9.0, 10.0]),
                      cum_mass=np.array([0.1, 0.4, 0.9, 1.0]))
        ps = np.linspace(0.01, 1.0, 67)
        vals = [invert_cdf(cdf, p) for p in ps]
        assert np.all(np.diff(vals) >= 0.0)

    def test_invert_validates_p(self):
        cdf = StepCdf(support=np.array([1.0]), cum_mass=np.array([1.0]))
        with pytest.raises(InvalidArgumentError):
            invert_cdf(cdf, 0.0)
        with pytest.raises(InvalidArgumentError):
            invert_cdf(cdf, 1.5)

    def test_ties_merged_exactly(self):
        cdf = StepCdf.from_pairs(np.array([2.0, 1.0, 2.0, 3.0]),
                                 np.array([0.25, 0.25, 0.25, 0.25]))
        assert cdf.support.tolist() == [1.0, 2.0, 3.0]
        assert cdf.cum_mass == pytest.approx([0.25, 0.75, 1.0], abs=1e-15)

    def test_validity_enforced(self):
        with pytest.raises(InvalidArgumentError):
            StepCdf(support=np.array([1.0, 1.0]), cum_mass=np.array([0.5, 1.0]))
        with pytest.raises(InvalidArgumentError):
            StepCdf(support=np.array([1.0, 2.0]), cum_mass=np.array([0.5, 0.9]))
        with pytest.raises(InternalError):
            StepCdf.from_pairs(np.array([1.0, 2.0]), np.array([0.3, 0.3]))


class TestConditionalQuantiles:
    def test_zero_treatment_effect_gives_identical_vectors(self):
        fit = manual_fit(t_coef=0.0)
        q0 = conditional_quantiles(fit, 0, [0.3])
        q1 = conditional_quantiles(fit, 1, [0.3])
        assert np.array_equal(q0, q1)

    def test_vector_is_sorted_and_tail_grows(self):
        fit = manual_fit(xi=0.5)
        q = conditional_quantiles(fit, 1, [0.7])
        assert np.all(np.diff(q) >= 0.0)
        J = len(fit.grid.levels)
        u = fit.grid.transition_index
        # heavy tail: last extreme value strictly above the first
        assert q[J - 1] > q[u]

    def test_matches_tail_quantile_op(self):
        fit = manual_fit()
        x = np.array([0.4])
        q = conditional_quantiles(fit, 1, x)
        w = np.concatenate([[1.0, 1.0], x])
        u_star = float(w @ fit.tail.threshold_coefficients)
        expected_last = gpd_tail_quantile(
            fit.grid.levels[-1], u_star, fit.tail.params, fit.tail.exceedance_rate
        )
        assert q[-1] == pytest.approx(expected_last, abs=1e-12)

    def test_dimension_checked(self):
        fit = manual_fit()
        with pytest.raises(InvalidArgumentError):
            conditional_quantiles(fit, 1, [0.1, 0.2])
        with pytest.raises(InvalidArgumentError):
            conditional_quantiles(fit, 2, [0.1])


class TestCdfAssembly:
    def test_single_unit_marginal_equals_conditional(self):
        fit = manual_fit(n=1, n_treated=1)
        ds = Dataset.from_arrays([5.0], [1], np.array([[0.7]]), ["x"])
        cdf = marginal_cdf(fit, ds, 1)
        q = conditional_quantiles(fit, 1, [0.7])
        assert cdf.support.tolist() == sorted(set(q.tolist()))
        assert cdf.cum_mass[-1] == pytest.approx(1.0, abs=1e-12)
        assert cdf.cum_mass == pytest.approx(np.cumsum(fit.grid.weights), abs=1e-12)

    def test_total_mass_is_one(self):
        fit = manual_fit()
        rng = np.random.default_rng(0)
        ds = Dataset.from_arrays(rng.normal(0, 1, 50), rng.integers(0, 2, 50),
                                 rng.normal(0, 1, (50, 1)), ["x"])
        for t in (0, 1):
            cdf = marginal_cdf(fit, ds, t)
            assert abs(cdf.cum_mass[-1] - 1.0) <= 1e-12

    def test_dominated_arm_lies_below(self):
        fit = manual_fit(t_coef=2.0)
        rng = np.random.default_rng(1)
        ds = Dataset.from_arrays(rng.normal(0, 1, 40), rng.integers(0, 2, 40),
                                 rng.normal(0, 1, (40, 1)), ["x"])
        f1 = marginal_cdf(fit, ds, 1)
        f0 = marginal_cdf(fit, ds, 0)
        grid = np.union1d(f1.support, f0.support)
        def eval_cdf(cdf, ys):
            idx = np.searchsorted(cdf.support, ys, side="right") - 1
            out = np.where(idx >= 0, cdf.cum_mass[np.maximum(idx, 0)], 0.0)
            return out
        assert np.all(eval_cdf(f1, grid) <= eval_cdf(f0, grid) + 1e-12)

    def test_treated_cdf_all_treated_equals_marginal(self):
        fit = manual_fit()
        rng = np.random.default_rng(2)
        ds = Dataset.from_arrays(rng.normal(0, 1, 30), np.ones(30, dtype=int),
                                 rng.normal(0, 1, (30, 1)), ["x"])
        m = marginal_cdf(fit, ds, 0)
        t = treated_cdf(fit, ds, 0)
        assert np.array_equal(m.support, t.support)
        assert np.array_equal(m.cum_mass, t.cum_mass)

    def test_treated_cdf_single_treated_unit(self):
        fit = manual_fit()
        ds = Dataset.from_arrays([1.0, 2.0, 3.0], [0, 1, 0],
                                 np.array([[0.0], [0.5], [1.0]]), ["x"])
        t = treated_cdf(fit, ds, 1)
        q = conditional_quantiles(fit, 1, [0.5])
        assert t.support.tolist() == sorted(set(q.tolist()))

    def test_treated_cdf_requires_treated_units(self):
        fit = manual_fit()
        ds = Dataset.from_arrays([1.0, 2.0], [0, 0], np.array([[0.0], [1.0]]), ["x"])
        with pytest.raises(EstimandUndefinedError):
            treated_cdf(fit, ds, 1)


class TestFitProposed:
    def test_components_wired_through(self):
        ds = gpd_tail_dataset(800, seed=3)
        sel = select_transition(ds, CAND_LEVELS, n_boot=99, seed=5)
        fit = fit_proposed(ds, sel, GridConfig(30, 10, 0.9995))
        assert fit.grid.transition_level == pytest.approx(sel.selected_level)
        assert tuple(fit.bulk.levels) == fit.grid.bulk_levels
        assert np.array_equal(
            fit.tail.threshold_coefficients, sel.selected_candidate.coefficients
        )
        assert abs(fit.tail.exceedance_rate - (1.0 - sel.selected_level)) < 0.03
        assert np.isfinite(fit.tail.params.xi)
        assert fit.n == 800

    def test_insufficient_tail(self):
        ds = gpd_tail_dataset(100, seed=4)
        sel = manual_selection(ds, 0.985)
        with pytest.raises(InsufficientTailError):
            fit_proposed(ds, sel, GridConfig(20, 5, 0.999))

    def test_light_tail_warns(self):
        rng = np.random.default_rng(5)
        x = rng.normal(0, 1, 600)
        d = rng.integers(0, 2, 600)
        y = x + rng.uniform(0, 1, 600)
        ds = Dataset.from_arrays(y, d, x.reshape(-1, 1), ["x"])
        sel = manual_selection(ds, 0.8)
        with pytest.warns(TailShapeWarning):
            fit_proposed(ds, sel, GridConfig(20, 5, 0.999))


class TestEffects:
    def test_requested_levels_validated(self):
        fit = manual_fit()
        ds = Dataset.from_arrays([1.0], [1], np.array([[0.0]]), ["x"])
        with pytest.raises(InvalidArgumentError):
            estimate_effects(fit, ds, [0.995], "QTE")  # grid tau_max is 0.99
        with pytest.raises(InvalidArgumentError):
            estimate_effects(fit, ds, [0.5], "ATE")

    def test_qtt_equals_qte_when_all_treated(self):
        fit = manual_fit()
        rng = np.random.default_rng(6)
        ds = Dataset.from_arrays(rng.normal(0, 1, 25), np.ones(25, dtype=int),
                                 rng.normal(0, 1, (25, 1)), ["x"])
        qte = estimate_effects(fit, ds, [0.5, 0.9], "QTE")
        qtt = estimate_effects(fit, ds, [0.5, 0.9], "QTT")
        for a, b in zip(qte, qtt):
            assert a.point == b.point and a.q1 == b.q1 and a.q0 == b.q0

    def test_all_control_flagged_at_estimate_time(self):
        fit = manual_fit()
        ds = Dataset.from_arrays([1.0, 2.0], [0, 0], np.array([[0.0], [1.0]]), ["x"])
        assert estimate_effects(fit, ds, [0.5], "QTE")[0].point == pytest.approx(2.0)
        with pytest.raises(EstimandUndefinedError):
            estimate_effects(fit, ds, [0.5], "QTT")

    def test_translation_equivariance(self):
        ds = gpd_tail_dataset(700, seed=7)
        shifted = Dataset.from_arrays(
            ds.outcomes + 37.5, ds.treatments.astype(int),
            ds.covariate_matrix, ds.covariate_names,
        )
        base = [e.point for e in estimate_effects(
            pipeline_fit(ds, seed=9), ds, [0.5, 0.9, 0.99], "QTE")]
        moved = [e.point for e in estimate_effects(
            pipeline_fit(shifted, seed=9), shifted, [0.5, 0.9, 0.99], "QTE")]
        assert moved == pytest.approx(base, abs=1e-7)

    def test_scale_equivariance(self):
        ds = gpd_tail_dataset(700, seed=8)
        a = 4.0
        scaled = Dataset.from_arrays(
            a * ds.outcomes, ds.treatments.astype(int),
            ds.covariate_matrix, ds.covariate_names,
        )
        base = [e.point for e in estimate_effects(
            pipeline_fit(ds, seed=10), ds, [0.5, 0.9, 0.99], "QTE")]
        moved = [e.point for e in estimate_effects(
            pipeline_fit(scaled, seed=10), scaled, [0.5, 0.9, 0.99], "QTE")]
        assert moved == pytest.approx([a * b for b in base], rel=1e-6)

    def test_json_shape(self):
        fit = manual_fit()
        ds = Dataset.from_arrays([1.0], [1], np.array([[0.0]]), ["x"])
        eff = estimate_effects(fit, ds, [0.9], "QTE")[0]
        d = eff.to_json_dict()
        assert set(d) == {"p", "estimand", "point", "q1", "q0"}
        assert d["point"] == d["q1"] - d["q0"]

    @pytest.mark.slow
    def test_null_effect_is_small(self):
        rng = np.random.default_rng(11)
        n = 2000
        x = rng.normal(0, 1, n)
        d = rng.integers(0, 2, n)
        y = rng.normal(0, 1, n)  # outcomes independent of treatment and x
        ds = Dataset.from_arrays(y, d, x.reshape(-1, 1), ["x"])
        fit = pipeline_fit(ds, seed=12, grid=GridConfig(75, 25, 0.9995))
        eta = estimate_effects(fit, ds, [0.9], "QTE")[0].point
        iqr = float(np.quantile(y, 0.75) - np.quantile(y, 0.25))
        assert abs(eta) < 0.25 * iqr


class TestBruteForceOracle:
    def test_matches_stratified_plugin_within_grid_step(self):
        # binary covariate, additive strata sharing one noise multiset, so
        # saturated per-stratum empirical quantiles are exactly additive
        m = 251
        base = (np.arange(m) + 0.5) / m
        x = np.repeat([0.0, 1.0, 0.0, 1.0], m)
        d = np.repeat([0, 0, 1, 1], m)
        y = np.concatenate([base, 0.5 + base, 2.0 + base, 2.5 + base])
        ds = Dataset.from_arrays(y, d, x.reshape(-1, 1), ["x"])

        sel = manual_selection(ds, 0.985)
        fit = fit_proposed(ds, sel, GridConfig(197, 1, 0.99))
        levels = np.asarray(fit.grid.levels)
        weights = np.asarray(fit.grid.weights)

        def stratum_quantiles(t, xv):
            mask = (ds.treatments == t) & (ds.covariate_matrix[:, 0] == xv)
            ys = np.sort(ds.outcomes[mask])
            idx = np.minimum(np.ceil(len(ys) * levels).astype(int), len(ys)) - 1
            return ys[np.maximum(idx, 0)]

        def brute_quantile(t, p):
            values, masses = [], []
            for xv in (0.0, 1.0):
                n_x = int(np.sum(ds.covariate_matrix[:, 0] == xv))
                values.append(stratum_quantiles(t, xv))
                masses.append(np.tile(weights * (n_x / ds.n), 1))
            v = np.concatenate(values)
            w = np.concatenate(masses)
            order = np.argsort(v, kind="stable")
            cum = np.cumsum(w[order])
            return float(v[order][np.searchsorted(cum / cum[-1], p, side="left")])

        step = 1.0 / 197  # uniform strata: probability step == value step
        for p in (0.3, 0.5, 0.9):
            eta_pipe = estimate_effects(fit, ds, [p], "QTE")[0].point
            eta_brute = brute_quantile(1, p) - brute_quantile(0, p)
            assert abs(eta_pipe - eta_brute) <= 2 * step + 1e-9
