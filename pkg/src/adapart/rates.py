"""Closed-form rate and bound formulas, and empirical rate-exponent fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .errors import ArgumentError


@dataclass(frozen=True)
class RateParams:
    """Constants of the rate statements.

    ``c_star`` bounds log T_I <= c_star I log I; 1 + log p is admissible for
    every size that can be enumerated (checked in the test suite).
    """

    r: float = 1.0
    A2: float = 1.0
    c1: float = 0.5
    c_prime: float = 0.0
    c_star: float = 1.0

    def __post_init__(self):
        if not self.r > 0:
            raise ArgumentError(f"r must be positive, got {self.r}")
        if not self.A2 > 0:
            raise ArgumentError(f"A2 must be positive, got {self.A2}")
        if not 0 < self.c1 < 1:
            raise ArgumentError(f"c1 must lie in (0, 1), got {self.c1}")
        if not math.isfinite(self.c_prime):
            raise ArgumentError("c_prime must be finite")
        if not self.c_star > 0:
            raise ArgumentError(f"c_star must be positive, got {self.c_star}")


def _check_n(n) -> float:
    n = float(n)
    if not n >= 2 or not math.isfinite(n):
        raise ArgumentError(f"n must be a finite number >= 2, got {n}")
    return n


def epsilon_n(n, r: float) -> float:
    """Posterior contraction radius n^(-r/(2r+1)) (log n)^(2 + 1/(2r))."""
    n = _check_n(n)
    if not r > 0:
        raise ArgumentError(f"r must be positive, got {r}")
    ln = math.log(n)
    return math.exp(-r / (2 * r + 1) * ln + (2 + 1 / (2 * r)) * math.log(ln))


def delta_nI(n, I) -> float:
    """sqrt(I log I log n / n)."""
    n = _check_n(n)
    I = float(I)
    if not I >= 2:
        raise ArgumentError(f"I must be >= 2, got {I}")
    return math.sqrt(I * math.log(I) * math.log(n) / n)


def sieve_size_schedule(n, r: float, A2: float, c1: float, rounding: str = "nearest") -> int:
    """Sieve size ((2^8 A2^2 r / c1) n / log n)^(1/(2r+1)), rounded and at least 1."""
    RateParams(r=r, A2=A2, c1=c1)
    n = _check_n(n)
    log_val = (math.log(256 * A2 * A2 * r / c1) + math.log(n) - math.log(math.log(n))) / (2 * r + 1)
    val = math.exp(log_val)
    if rounding == "nearest":
        out = math.floor(val + 0.5)
    elif rounding == "floor":
        out = math.floor(val)
    elif rounding == "ceil":
        out = math.ceil(val)
    else:
        raise ArgumentError(f"rounding must be nearest, floor or ceil, got {rounding!r}")
    return max(1, int(out))


def entropy_upper_bound(eps: float, I: int, p: int, d: float, c_prime: float = 0.0) -> float:
    """Bracketing-entropy bound I log p + (I+1) log(I+1) + (I/2) log I + I log(d/eps) + c'."""
    if not (eps > 0 and d > 0):
        raise ArgumentError("eps and d must be positive")
    if eps > d:
        raise ArgumentError(f"eps={eps} exceeds d={d}")
    if I < 1 or p < 1:
        raise ArgumentError("I and p must be >= 1")
    return (I * math.log(p) + (I + 1) * math.log(I + 1) + 0.5 * I * math.log(I)
            + I * math.log(d / eps) + c_prime)


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r2: float
    stderr: float


def fit_rate_exponent(curve) -> RateFit:
    """Least-squares line through (log n, log error).

    The slope estimates -r/(2r+1). ``stderr`` is the slope's standard error.
    """
    arr = np.asarray(curve, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ArgumentError("curve must be a sequence of (n, error) pairs")
    if len(arr) < 3:
        raise ArgumentError(f"need at least 3 points, got {len(arr)}")
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise ArgumentError("all n and error values must be finite and positive")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    if np.ptp(x) == 0:
        raise ArgumentError("degenerate curve: all n are equal")
    res = stats.linregress(x, y)
    r2 = 1.0 if np.ptp(y) == 0 else float(res.rvalue) ** 2
    return RateFit(float(res.slope), float(res.intercept), r2, float(res.stderr))
