"""Concave win-rate models and their calibration from auction history.

A consumer models its probability of winning an auction as a function of
its own bid.  Two one-parameter families are supported:

* ``simple``:  W(b) = b / (c + b)
* ``complex``: W(b) = b^2 / (c^2 + b^2)

Both satisfy W(0) = 0, W(c) = 0.5 and sup W = 1.  The constant ``c`` is
calibrated against an empirical win-rate curve built from historical
bid/outcome records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np


class InsufficientDataError(ValueError):
    """Raised when history is too small or degenerate for calibration."""


class WinForm(str, Enum):
    SIMPLE = "simple"
    COMPLEX = "complex"


@dataclass(frozen=True)
class WinningFunctionModel:
    form: WinForm
    c: float

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"winning-function constant must be positive, got {self.c}")


@dataclass(frozen=True)
class WinCurveBucket:
    mid_bid: float
    win_rate: float
    count: int


WinCurve = list


def win_prob(model: WinningFunctionModel, b):
    """Win probability at bid ``b`` (scalar or array). Requires b >= 0."""
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise ValueError("bid must be non-negative")
    if model.form is WinForm.SIMPLE:
        w = b / (model.c + b)
    else:
        b2 = b * b
        w = b2 / (model.c * model.c + b2)
    return float(w) if w.ndim == 0 else w


def win_prob_derivative(model: WinningFunctionModel, b):
    """dW/db at bid ``b`` (scalar or array). Requires b >= 0."""
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise ValueError("bid must be non-negative")
    c = model.c
    if model.form is WinForm.SIMPLE:
        d = c / (c + b) ** 2
    else:
        d = 2.0 * b * c * c / (c * c + b * b) ** 2
    return float(d) if d.ndim == 0 else d


def empirical_win_curve(records: Sequence, num_buckets: int = 20) -> list[WinCurveBucket]:
    """Bucket historical (bid, won) records into an empirical win-rate curve.

    Equal-width bid buckets over [0, max bid]; empty buckets are omitted.
    ``records`` need only expose ``.bid`` and ``.won``.
    """
    if len(records) == 0:
        raise InsufficientDataError("no records to build a win curve from")
    if num_buckets < 2:
        raise ValueError("num_buckets must be >= 2")
    bids = np.array([r.bid for r in records], dtype=float)
    wins = np.array([1.0 if r.won else 0.0 for r in records])
    hi = bids.max()
    if hi <= 0:
        raise InsufficientDataError("all historical bids are zero")
    edges = np.linspace(0.0, hi, num_buckets + 1)
    # np.digitize puts b == hi into the last bucket
    idx = np.clip(np.digitize(bids, edges[1:-1]), 0, num_buckets - 1)
    curve = []
    for k in range(num_buckets):
        mask = idx == k
        n = int(mask.sum())
        if n == 0:
            continue
        curve.append(
            WinCurveBucket(
                mid_bid=float(0.5 * (edges[k] + edges[k + 1])),
                win_rate=float(wins[mask].mean()),
                count=n,
            )
        )
    return curve


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section(f, lo: float, hi: float, tol: float = 1e-6) -> float:
    """Minimize a unimodal f on [lo, hi]; returns the midpoint of the final bracket."""
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = f(d)
    return 0.5 * (lo + hi)


def calibration_objective(curve: Iterable[WinCurveBucket], form: WinForm, c: float) -> float:
    """Count-weighted squared error between the model and the empirical curve."""
    model = WinningFunctionModel(form, c)
    return float(
        sum(b.count * (win_prob(model, b.mid_bid) - b.win_rate) ** 2 for b in curve)
    )


def calibrate_c(curve: Sequence[WinCurveBucket], form: WinForm) -> float:
    """Fit the constant c by count-weighted least squares on the empirical curve.

    Golden-section search on c in [1e-4, 10 * max bucket bid].
    """
    if len(curve) < 2:
        raise InsufficientDataError("win curve needs at least 2 buckets")
    rates = [b.win_rate for b in curve]
    if all(r == 0.0 for r in rates) or all(r == 1.0 for r in rates):
        raise InsufficientDataError(
            "degenerate win curve (all rates 0 or 1); widen bid exploration"
        )
    hi = 10.0 * max(b.mid_bid for b in curve)
    c_hat = _golden_section(lambda c: calibration_objective(curve, form, c), 1e-4, hi)
    return max(c_hat, 1e-4)
