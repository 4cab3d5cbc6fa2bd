"""Bidding strategies, the budget Lagrange-multiplier solver and the
brute-force optimal-bid oracle.

Baselines: constant bid, uniform random bid, uniform below estimated
utility (Bmub), linear in estimated utility (Lin).  The two closed-form
strategies (``fbs`` for the simple win model, ``fbc`` for the complex
one) maximize the per-request expected surplus

    f(b) = (s - b) W(b) - lambda * b W(b)

where s is the estimated utility, W the consumer's win model and lambda
the shadow price of its budget constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .winmodel import WinForm, WinningFunctionModel, win_prob, win_prob_derivative


class Strategy(str, Enum):
    CONST = "const"
    RAND = "rand"
    BMUB = "bmub"
    LIN = "lin"
    FBS = "fbs"
    FBC = "fbc"


@dataclass
class StrategyParams:
    const_bid: float = 0.5
    rand_max: float = 1.0
    lin_coef: float = 0.5

    def __post_init__(self):
        if self.const_bid <= 0 or self.rand_max <= 0 or self.lin_coef <= 0:
            raise ValueError("strategy constants must be positive")


@dataclass
class LambdaSolution:
    lam: float
    expected_spend_per_request: float
    target: float
    iterations: int
    note: Optional[str] = None


def bid_const(params: StrategyParams) -> float:
    return params.const_bid


def bid_rand(params: StrategyParams, rng: np.random.Generator) -> float:
    # uniform on (0, rand_max]
    return params.rand_max - float(rng.uniform(0.0, params.rand_max))


def bid_bmub(s: float, rng: np.random.Generator) -> float:
    if s <= 0:
        return 0.0
    return s - float(rng.uniform(0.0, s))


def bid_lin(s: float, params: StrategyParams) -> float:
    return params.lin_coef * max(s, 0.0)


def _check_closed_form_args(s, c, lam):
    if s < 0 or c <= 0 or lam < 0:
        raise ValueError(f"invalid bid arguments s={s}, c={c}, lambda={lam}")


def bid_fbs(s: float, c: float, lam: float) -> float:
    """Optimal bid under the simple win model: sqrt(c^2 + s c/(lam+1)) - c."""
    _check_closed_form_args(s, c, lam)
    return math.sqrt(c * c + s * c / (lam + 1.0)) - c


def bid_fbc(s: float, c: float, lam: float) -> float:
    """Optimal bid under the complex win model.

    Equivalently the unique real root of b^3 + 3 c^2 b = 2 c^2 s/(lam+1).
    """
    _check_closed_form_args(s, c, lam)
    big = s + math.sqrt(c * c * (lam + 1.0) ** 2 + s * s)
    t = (big / (c * (lam + 1.0))) ** (1.0 / 3.0)
    return c * (t - 1.0 / t)


def closed_form_bid(s: float, model: WinningFunctionModel, lam: float) -> float:
    if model.form is WinForm.SIMPLE:
        return bid_fbs(s, model.c, lam)
    return bid_fbc(s, model.c, lam)


def surplus(s: float, b, model: WinningFunctionModel, lam: float):
    """Per-request objective f(b) = (s - (1+lam) b) W(b)."""
    return (s - (1.0 + lam) * np.asarray(b, dtype=float)) * win_prob(model, b)


def check_foc(s: float, b: float, model: WinningFunctionModel, lam: float) -> float:
    """First-order-condition residual f'(b); near zero at the optimal bid.

    Returns (s - (lam+1) b) W'(b) - (lam+1) W(b).  Negative for
    overbidding (b above the optimum), positive below it.
    """
    return (s - (lam + 1.0) * b) * win_prob_derivative(model, b) - (
        lam + 1.0
    ) * win_prob(model, b)


def oracle_optimal_bid(
    s: float,
    model: WinningFunctionModel,
    lam: float,
    grid_points: int = 1_000_000,
    bisect_steps: int = 50,
) -> float:
    """Reference maximizer of the per-request surplus by dense grid search.

    Scans b in [0, s] (the optimum never exceeds s for lam >= 0, where
    f(b) < 0), then refines by bisection on f' around the best grid
    point.  Certifies the closed forms in tests; not for the hot path.
    """
    if s <= 0:
        return 0.0
    grid = np.linspace(0.0, s, grid_points)
    f = surplus(s, grid, model, lam)
    i = int(np.argmax(f))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid_points - 1)]
    if check_foc(s, lo, model, lam) > 0 > check_foc(s, hi, model, lam):
        for _ in range(bisect_steps):
            mid = 0.5 * (lo + hi)
            if check_foc(s, mid, model, lam) > 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
    return float(grid[i])


def expected_spend_per_request(
    utility_samples: np.ndarray, model: WinningFunctionModel, lam: float
) -> float:
    """Mean of b(s; lam) * W(b(s; lam)) over the utility samples."""
    bids = np.array([closed_form_bid(s, model, lam) for s in utility_samples])
    return float(np.mean(bids * win_prob(model, bids)))


def solve_lambda(
    utility_samples: Sequence[float],
    model: WinningFunctionModel,
    budget: float,
    num_requests: int,
    rel_tol: float = 0.01,
    max_iterations: int = 200,
) -> LambdaSolution:
    """Solve for the budget multiplier by bisection on expected spend.

    Finds lambda >= 0 such that the expected spend per request matches
    the per-request budget B/N, or returns lambda = 0 when the budget
    constraint is slack at the unconstrained optimum.
    """
    if len(utility_samples) == 0:
        raise ValueError("utility_samples must be non-empty")
    if budget <= 0 or num_requests < 1:
        raise ValueError("budget must be positive and num_requests >= 1")
    # a consumer bids 0 on negative estimated utility
    samples = np.maximum(np.asarray(utility_samples, dtype=float), 0.0)
    target = budget / num_requests
    if np.all(samples <= 0):
        return LambdaSolution(0.0, 0.0, target, 0, note="all utility samples are zero")
    g0 = expected_spend_per_request(samples, model, 0.0)
    if g0 <= target:
        return LambdaSolution(0.0, g0, target, 0)
    hi = 1.0
    iters = 0
    while expected_spend_per_request(samples, model, hi) >= target:
        hi *= 2.0
        iters += 1
        if hi > 1e12:
            break
    lo = 0.0
    lam = hi
    g = expected_spend_per_request(samples, model, lam)
    while iters < max_iterations:
        lam = 0.5 * (lo + hi)
        g = expected_spend_per_request(samples, model, lam)
        iters += 1
        if abs(g - target) <= rel_tol * target:
            break
        if g > target:
            lo = lam
        else:
            hi = lam
    return LambdaSolution(lam, g, target, iters)
