import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import genpareto

from eqte import Dataset, forward_stop, generate_candidates, select_transition
from eqte.errors import ConventionWarning, InvalidArgumentError, SelectionFailureError


def forward_stop_brute(p, lam):
    p = np.minimum(np.asarray(p, dtype=float), 1.0 - 1e-15)
    best = 0
    for k in range(1, p.size + 1):
        if -np.mean(np.log1p(-p[:k])) <= lam:
            best = k
    return best


def gpd_tail_dataset(n, seed, xi=0.3):
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, n)
    d = rng.integers(0, 2, n)
    e = genpareto.rvs(c=xi, scale=1.0, size=n, random_state=rng)
    y = 1.0 + 2.0 * x + e
    return Dataset.from_arrays(y, d, x.reshape(-1, 1), ["x"])


def spliced_dataset(n, seed, switch=0.95, xi=0.4):
    # noise is normal below its `switch` quantile, GPD above it, so only
    # the highest candidate thresholds leave purely GPD exceedances
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, n)
    d = rng.integers(0, 2, n)
    z = rng.normal(0.0, 1.0, n)
    cut = float(np.quantile(z, switch))
    high = z > cut
    e = z.copy()
    e[high] = cut + genpareto.rvs(c=xi, scale=0.5, size=int(high.sum()),
                                  random_state=rng)
    y = 1.0 + 2.0 * x + e
    return Dataset.from_arrays(y, d, x.reshape(-1, 1), ["x"])


CAND_LEVELS = tuple(np.linspace(0.75, 0.99, 10))


class TestForwardStop:
    def test_spec_fixture(self):
        assert forward_stop([0.001, 0.002, 0.9], 0.05) == 2

    def test_first_term_already_large(self):
        assert forward_stop([0.9, 0.9], 0.05) == 0

    def test_all_zero_pvalues(self):
        assert forward_stop([0.0, 0.0, 0.0], 1e-9) == 3

    def test_p_equal_one_is_clamped(self):
        assert forward_stop([1.0, 0.0], 1e9) == 2

    def test_bounds_validated(self):
        with pytest.raises(InvalidArgumentError):
            forward_stop([0.5], 0.0)
        with pytest.raises(InvalidArgumentError):
            forward_stop([-0.1], 0.05)

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            p = rng.random(rng.integers(1, 12))
            lam = rng.choice([0.01, 0.05, 0.2, 1.0, 5.0])
            assert forward_stop(p, lam) == forward_stop_brute(p, lam)

    @settings(max_examples=100, deadline=None)
    @given(
        p=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=10),
        lam_lo=st.floats(0.01, 0.5),
        lam_hi=st.floats(0.5, 5.0),
    )
    def test_monotone_in_lambda(self, p, lam_lo, lam_hi):
        assert forward_stop(p, lam_lo) <= forward_stop(p, lam_hi)


class TestCandidates:
    def test_exceedance_counts_track_levels(self):
        ds = gpd_tail_dataset(500, seed=2)
        cands = generate_candidates(ds, CAND_LEVELS)
        assert [c.level for c in cands] == sorted(c.level for c in cands)
        for c in cands:
            expected = 500 * (1.0 - c.level)
            slack = 4.0 * np.sqrt(500 * c.level * (1.0 - c.level)) + 5.0
            assert abs(c.n_exceedances - expected) <= slack
            assert c.p_value is None

    def test_duplicate_levels_rejected(self):
        ds = gpd_tail_dataset(100, seed=3)
        with pytest.raises(InvalidArgumentError):
            generate_candidates(ds, [0.8, 0.8])

    def test_untestable_flag(self):
        ds = gpd_tail_dataset(60, seed=4)
        cands = generate_candidates(ds, [0.5, 0.99])
        assert cands[0].testable
        assert not cands[1].testable


class TestSelectTransition:
    def test_deterministic(self):
        ds = gpd_tail_dataset(400, seed=5)
        s1 = select_transition(ds, CAND_LEVELS, n_boot=99, seed=11)
        s2 = select_transition(ds, CAND_LEVELS, n_boot=99, seed=11)
        assert s1.k_hat == s2.k_hat
        assert s1.selected_level == s2.selected_level
        assert [c.p_value for c in s1.candidates] == [c.p_value for c in s2.candidates]

    def test_untestable_candidates_get_zero_pvalue(self):
        ds = gpd_tail_dataset(150, seed=6)
        sel = select_transition(ds, [0.5, 0.8, 0.995], n_boot=99, seed=0)
        assert sel.candidates[-1].p_value == 0.0
        assert not sel.candidates[-1].testable

    def test_all_untestable_raises(self):
        ds = gpd_tail_dataset(30, seed=7)
        with pytest.raises(SelectionFailureError):
            select_transition(ds, [0.97, 0.99], n_boot=99, seed=0)

    def test_huge_lambda_selects_last_level_paper_literal(self):
        ds = gpd_tail_dataset(2000, seed=8)
        sel = select_transition(ds, CAND_LEVELS, fdr_level=1e9, n_boot=99, seed=0)
        assert sel.k_hat == len(CAND_LEVELS)
        assert sel.selected_level == CAND_LEVELS[-1]

    def test_first_accepted_convention(self):
        ds = gpd_tail_dataset(2000, seed=9)
        sel = select_transition(ds, CAND_LEVELS, n_boot=99, seed=1,
                                convention="first-accepted")
        if sel.k_hat < len(CAND_LEVELS):
            assert sel.selected_level == CAND_LEVELS[sel.k_hat]

    def test_first_accepted_all_rejected_warns(self):
        ds = gpd_tail_dataset(2000, seed=10)
        with pytest.warns(ConventionWarning):
            sel = select_transition(ds, CAND_LEVELS, fdr_level=1e9, n_boot=99,
                                    seed=0, convention="first-accepted")
        assert sel.selected_level == CAND_LEVELS[-1]

    def test_unknown_convention_rejected(self):
        ds = gpd_tail_dataset(100, seed=11)
        with pytest.raises(InvalidArgumentError):
            select_transition(ds, CAND_LEVELS, convention="whatever")

    @pytest.mark.slow
    def test_pure_gpd_tail_selects_lowest_level(self):
        good = 0
        for seed in range(6):
            ds = gpd_tail_dataset(3000, seed=100 + seed)
            sel = select_transition(ds, CAND_LEVELS, n_boot=199, seed=seed)
            pvals = [c.p_value for c in sel.candidates if c.testable]
            if sel.k_hat == 0 and sel.selected_level == CAND_LEVELS[0]:
                good += 1
                assert np.median(pvals) > 0.1
            first_accepted = select_transition(
                ds, CAND_LEVELS, n_boot=199, seed=seed, convention="first-accepted"
            )
            if sel.k_hat == 0:
                assert first_accepted.selected_level == CAND_LEVELS[0]
        assert good >= 4

    @pytest.mark.slow
    def test_misspecified_body_pushes_selection_up(self):
        good = 0
        for seed in range(5):
            ds = spliced_dataset(8000, seed=200 + seed)
            sel = select_transition(ds, CAND_LEVELS, n_boot=99, seed=seed)
            if sel.k_hat > 0 and sel.selected_level >= 0.90:
                good += 1
        assert good >= 3
