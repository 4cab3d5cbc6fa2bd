import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from flmarket import strategies as st
from flmarket.strategies import LambdaSolution, StrategyParams
from flmarket.winmodel import WinForm, WinningFunctionModel


def simple(c):
    return WinningFunctionModel(WinForm.SIMPLE, c)


def complex_(c):
    return WinningFunctionModel(WinForm.COMPLEX, c)


class TestBaselines:
    def test_const(self):
        params = StrategyParams(const_bid=0.5)
        assert all(st.bid_const(params) == 0.5 for _ in range(5))

    def test_rand_range(self, rng):
        params = StrategyParams(rand_max=0.7)
        draws = [st.bid_rand(params, rng) for _ in range(500)]
        assert all(0 < b <= 0.7 for b in draws)

    def test_bmub_zero_utility(self, rng):
        assert st.bid_bmub(0.0, rng) == 0.0

    def test_bmub_range(self, rng):
        draws = [st.bid_bmub(1.3, rng) for _ in range(500)]
        assert all(0 < b <= 1.3 for b in draws)

    def test_lin(self):
        assert st.bid_lin(0.7, StrategyParams(lin_coef=2.0)) == pytest.approx(1.4)
        assert st.bid_lin(0.0, StrategyParams(lin_coef=2.0)) == 0.0

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            StrategyParams(const_bid=-1.0)


class TestClosedForms:
    def test_fbs_zero_utility(self):
        assert st.bid_fbs(0.0, 1.7, 0.3) == 0.0

    def test_fbs_known_values(self):
        assert st.bid_fbs(3.0, 1.0, 0.0) == pytest.approx(1.0)
        assert st.bid_fbs(8.0, 2.0, 1.0) == pytest.approx(math.sqrt(12) - 2)

    def test_fbc_zero_utility(self):
        assert st.bid_fbc(0.0, 1.7, 0.3) == pytest.approx(0.0, abs=1e-12)

    def test_fbc_known_value(self):
        # unique real root of b^3 + 3b = 4
        assert st.bid_fbc(2.0, 1.0, 0.0) == pytest.approx(1.0)

    def test_fbc_cubic_identity(self, rng):
        for _ in range(200):
            s, c, lam = rng.uniform(0.01, 10), rng.uniform(0.01, 5), rng.uniform(0, 5)
            b = st.bid_fbc(s, c, lam)
            rhs = 2 * c * c * s / (lam + 1)
            assert abs(b**3 + 3 * c * c * b - rhs) <= 1e-8 * (1 + abs(rhs))

    def test_invalid_arguments(self):
        for fn in (st.bid_fbs, st.bid_fbc):
            with pytest.raises(ValueError):
                fn(-1.0, 1.0, 0.0)
            with pytest.raises(ValueError):
                fn(1.0, 0.0, 0.0)
            with pytest.raises(ValueError):
                fn(1.0, 1.0, -0.5)

    @given(s=hs.floats(1e-3, 10), c=hs.floats(1e-3, 5), lam=hs.floats(0, 5))
    @settings(max_examples=300, deadline=None)
    def test_shading_below_utility(self, s, c, lam):
        assert st.bid_fbs(s, c, lam) < s
        assert st.bid_fbc(s, c, lam) < s

    @given(c=hs.floats(1e-2, 5), lam=hs.floats(0, 5))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_utility(self, c, lam):
        grid = np.linspace(0.1, 10, 40)
        for fn in (st.bid_fbs, st.bid_fbc):
            bids = [fn(s, c, lam) for s in grid]
            assert all(b2 > b1 for b1, b2 in zip(bids, bids[1:]))

    @given(c=hs.floats(1e-2, 5), s=hs.floats(0.1, 10))
    @settings(max_examples=100, deadline=None)
    def test_decreasing_in_lambda(self, c, s):
        lams = np.linspace(0, 5, 20)
        for fn in (st.bid_fbs, st.bid_fbc):
            bids = [fn(s, c, lam) for lam in lams]
            assert all(b2 < b1 for b1, b2 in zip(bids, bids[1:]))
            assert bids[0] == max(bids)


class TestFirstOrderCondition:
    def test_closed_forms_satisfy_foc(self, rng):
        for _ in range(100):
            s, c, lam = rng.uniform(0.01, 10), rng.uniform(0.01, 5), rng.uniform(0, 5)
            r_s = st.check_foc(s, st.bid_fbs(s, c, lam), simple(c), lam)
            r_c = st.check_foc(s, st.bid_fbc(s, c, lam), complex_(c), lam)
            assert abs(r_s) <= 1e-9 * (1 + s)
            assert abs(r_c) <= 1e-9 * (1 + s)

    def test_overbidding_sign(self):
        # bidding the full utility violates the optimality condition from above
        for lam in (0.0, 0.5, 2.0):
            assert st.check_foc(3.0, 3.0, simple(1.0), lam) < 0


class TestOracle:
    def test_zero_utility(self):
        assert st.oracle_optimal_bid(0.0, simple(1.0), 0.0) == 0.0

    @pytest.mark.parametrize("form_fn,bid_fn", [(simple, st.bid_fbs), (complex_, st.bid_fbc)])
    def test_agrees_with_closed_form(self, form_fn, bid_fn):
        rng = np.random.default_rng(7)
        for _ in range(25):
            s, c, lam = rng.uniform(0.01, 10), rng.uniform(0.01, 5), rng.uniform(0, 5)
            oracle = st.oracle_optimal_bid(s, form_fn(c), lam, grid_points=200_001)
            closed = bid_fn(s, c, lam)
            assert abs(closed - oracle) <= 1e-4 * (1 + oracle)


class TestSolveLambda:
    def _samples(self, rng, n=300):
        return rng.uniform(0.0, 2.0, n)

    def test_non_binding_budget(self, rng):
        sol = st.solve_lambda(self._samples(rng), simple(1.0), budget=1e6, num_requests=10)
        assert sol.lam == 0.0
        assert sol.expected_spend_per_request <= sol.target

    def test_binding_budget_hits_target(self, rng):
        samples = self._samples(rng)
        g0 = st.expected_spend_per_request(samples, simple(1.0), 0.0)
        budget = 0.1 * g0 * 100
        sol = st.solve_lambda(samples, simple(1.0), budget, 100)
        assert sol.lam > 0
        assert abs(sol.expected_spend_per_request - sol.target) <= 0.01 * sol.target

    def test_spend_decreasing_in_lambda(self, rng):
        for form in (simple(0.8), complex_(0.8)):
            samples = self._samples(rng)
            g = [st.expected_spend_per_request(samples, form, lam) for lam in np.linspace(0, 10, 50)]
            assert all(b < a for a, b in zip(g, g[1:]))

    def test_halving_budget_raises_lambda(self, rng):
        for _ in range(5):
            samples = self._samples(rng)
            g0 = st.expected_spend_per_request(samples, simple(1.2), 0.0)
            budget = 0.2 * g0 * 50
            lam_full = st.solve_lambda(samples, simple(1.2), budget, 50).lam
            lam_half = st.solve_lambda(samples, simple(1.2), budget / 2, 50).lam
            assert lam_half > lam_full

    def test_all_zero_samples(self):
        sol = st.solve_lambda(np.zeros(10), simple(1.0), 5.0, 10)
        assert sol.lam == 0.0
        assert sol.note is not None

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            st.solve_lambda([], simple(1.0), 5.0, 10)
        with pytest.raises(ValueError):
            st.solve_lambda([1.0], simple(1.0), -5.0, 10)
