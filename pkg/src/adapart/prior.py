"""Prior over piecewise densities on binary partitions.

The size I has mass proportional to exp(-lam * I log I) on 1..n_cap, the
partition is uniform over the T_I distinct partitions of that size, and the
region masses follow a Dirichlet(alpha, ..., alpha) truncated to
min_i theta_i > tau(I) = D * I^(-kappa).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from .density import PiecewiseDensity
from .errors import ArgumentError, SamplingError, ZeroMassError
from .partition import (
    BinaryPartition,
    count_partitions,
    enumerate_partitions,
    log_count_partitions,
)

MIN_ACCEPTANCE = 1e-6
SAMPLING_ENUM_CAP = 200_000


@dataclass(frozen=True)
class PriorParams:
    lam: float = 1.0
    alpha: float = 0.5
    D: float = 1.0
    kappa: float = 6.0
    n_cap: int = 100

    def __post_init__(self):
        if not self.lam > 0:
            raise ArgumentError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.alpha < 1:
            raise ArgumentError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (self.D > 0 and self.kappa > 0):
            raise ArgumentError("truncation constants D and kappa must be positive")
        if int(self.n_cap) != self.n_cap or self.n_cap < 1:
            raise ArgumentError(f"n_cap must be a positive integer, got {self.n_cap}")
        if self.n_cap >= 2:
            # I * tau(I) = D I^(1 - kappa) is monotone in I
            worst = max(self.D * 2 ** (1 - self.kappa), self.D * self.n_cap ** (1 - self.kappa))
            if worst >= 1:
                raise ArgumentError("truncation tau(I) = D I^-kappa must stay below 1/I for 2 <= I <= n_cap")

    def tau(self, I: int) -> float:
        """Truncation level; the single-region prior is the point mass and is not truncated."""
        return 0.0 if I == 1 else self.D * I ** (-self.kappa)

    def with_cap(self, n_cap: int) -> PriorParams:
        return PriorParams(self.lam, self.alpha, self.D, self.kappa, n_cap)

    @classmethod
    def from_mapping(cls, cfg: dict, n_cap: int | None = None) -> PriorParams:
        return cls(
            lam=float(cfg.get("lambda", 1.0)),
            alpha=float(cfg.get("alpha", 0.5)),
            D=float(cfg.get("trunc_D", 1.0)),
            kappa=float(cfg.get("trunc_kappa", 6.0)),
            n_cap=int(n_cap if n_cap is not None else cfg.get("n_cap", 100)),
        )


def size_penalty(I, lam: float):
    I = np.asarray(I, dtype=float)
    return -lam * I * np.log(I)


@lru_cache(maxsize=256)
def log_size_normalizer(lam: float, n_cap: int) -> float:
    return float(logsumexp(size_penalty(np.arange(1, n_cap + 1), lam)))


def log_prior_size(I: int, params: PriorParams) -> float:
    if I < 1:
        raise ArgumentError(f"size must be >= 1, got {I}")
    if I > params.n_cap:
        raise ZeroMassError(f"size {I} exceeds the cap n_cap={params.n_cap}")
    return float(size_penalty(I, params.lam)) - log_size_normalizer(params.lam, params.n_cap)


def size_probabilities(params: PriorParams) -> np.ndarray:
    """Prior probabilities of sizes 1..n_cap."""
    lp = size_penalty(np.arange(1, params.n_cap + 1), params.lam)
    return np.exp(lp - logsumexp(lp))


def log_prior_partition(q: BinaryPartition, params: PriorParams, p: int | None = None,
                        log_T: float | None = None) -> float:
    """log of exp(-lam I log I) / (Z T_I) for the partition ``q``."""
    I = q.size
    p = q.p if p is None else p
    if log_T is None:
        log_T = log_count_partitions(I, p)
    return log_prior_size(I, params) - log_T


# -- truncated Dirichlet ----------------------------------------------------

_acceptance_cache: dict[tuple, float] = {}
_cache_lock = threading.Lock()


def truncation_acceptance(I: int, alpha: float, tau: float, method: str = "auto",
                          n_mc: int = 400_000, seed: int = 0) -> float:
    """P(min_i X_i > tau) for X ~ Dirichlet(alpha, ..., alpha) of length I.

    ``method="beta"`` uses the Beta(alpha, alpha) CDF and is exact for I = 2;
    ``method="mc"`` counts accepted draws. Results are cached per
    (I, alpha, tau, method); the cache has a single writer lock.
    """
    if I == 1 or tau <= 0:
        return 1.0
    if method == "auto":
        method = "beta" if I == 2 else "mc"
    key = (I, alpha, tau, method, n_mc, seed)
    hit = _acceptance_cache.get(key)
    if hit is not None:
        return hit
    if method == "beta":
        if I != 2:
            raise ArgumentError("the Beta CDF form only applies to I = 2")
        b = stats.beta(alpha, alpha)
        val = float(b.cdf(1 - tau) - b.cdf(tau))
    elif method == "mc":
        rng = np.random.default_rng(seed)
        x = rng.dirichlet(np.full(I, alpha), size=n_mc)
        val = float(np.mean(x.min(axis=1) > tau))
    else:
        raise ArgumentError(f"unknown method {method!r}")
    with _cache_lock:
        _acceptance_cache.setdefault(key, val)
    return val


def log_prior_weights(theta, q: BinaryPartition, params: PriorParams) -> float:
    """Log density of the truncated Dirichlet at ``theta``; -inf outside the truncation."""
    theta = np.asarray(theta, dtype=float).ravel()
    I = q.size
    if theta.size != I or np.any(~np.isfinite(theta)) or np.any(theta < 0):
        raise ArgumentError("theta must be a nonnegative vector with one entry per region")
    if abs(theta.sum() - 1.0) > 1e-10:
        raise ArgumentError(f"theta sums to {theta.sum()!r}, not 1")
    if I == 1:
        return 0.0
    tau = params.tau(I)
    if theta.min() <= tau:
        return -math.inf
    a = params.alpha
    log_dir = gammaln(a * I) - I * gammaln(a) + (a - 1) * np.sum(np.log(theta))
    acc = truncation_acceptance(I, a, tau)
    return float(log_dir - math.log(acc))


def sample_truncated_dirichlet(alphas, tau: float, rng: np.random.Generator, size: int = 1,
                               batch: int | None = None) -> np.ndarray:
    """Rejection draws from Dirichlet(alphas) restricted to min_i x_i > tau."""
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size == 1:
        return np.ones((size, 1))
    out = []
    got = attempts = 0
    batch = batch or max(2 * size, 64)
    while got < size:
        x = rng.dirichlet(alphas, size=batch)
        ok = x[x.min(axis=1) > tau]
        attempts += batch
        out.append(ok)
        got += len(ok)
        if attempts >= 1_000_000 and got / attempts < MIN_ACCEPTANCE:
            raise SamplingError(
                f"truncated Dirichlet acceptance {got / attempts:.2e} below {MIN_ACCEPTANCE} "
                f"(tau={tau:.3g}, alpha={alphas.min():.3g}..{alphas.max():.3g}, I={alphas.size})"
            )
        batch = min(batch * 2, 1_000_000)
    return np.concatenate(out)[:size]


# -- uniform partition sampling ---------------------------------------------

@lru_cache(maxsize=64)
def _partitions_of_size(I: int, p: int) -> tuple[BinaryPartition, ...]:
    return tuple(enumerate_partitions(I, p, cap=SAMPLING_ENUM_CAP))


def _random_split_sequence(I: int, p: int, rng: np.random.Generator) -> list:
    from .partition import DyadicBox
    regions = [DyadicBox.unit(p)]
    for _ in range(I - 1):
        i = int(rng.integers(len(regions)))
        box = regions.pop(i)
        regions.extend(box.halves(int(rng.integers(p))))
    return regions


def uniform_partition_chain(I: int, p: int, rng: np.random.Generator, steps: int | None = None) -> BinaryPartition:
    """Approximately uniform partition of size I from a merge-then-split Metropolis chain.

    A move merges a uniformly chosen sibling pair and splits a uniformly
    chosen region of the result on a uniform axis. Each move between distinct
    partitions has a unique path, so the chain is uniform when proposals are
    accepted with probability min(1, M(a) / M(b)), where M counts sibling pairs.
    """
    from .mcmc import _State
    steps = 100 * I if steps is None else steps
    state = _State.from_regions(_random_split_sequence(I, p, rng), p)
    for _ in range(steps):
        if I == 1:
            break
        prop = state.propose_swap(rng)
        if prop is None:
            continue
        m_a = state.n_pairs()
        m_b = prop.n_pairs()
        if rng.random() < min(1.0, m_a / m_b):
            state = prop
    return state.partition()


def sample_partition(I: int, p: int, rng: np.random.Generator, cap: int = SAMPLING_ENUM_CAP) -> BinaryPartition:
    if count_partitions(I, p) <= cap:
        parts = _partitions_of_size(I, p)
        return parts[int(rng.integers(len(parts)))]
    return uniform_partition_chain(I, p, rng)


def sample_prior(params: PriorParams, p: int, seed=None, cap: int = SAMPLING_ENUM_CAP) -> PiecewiseDensity:
    """One draw from the prior: size, then a uniform partition, then truncated-Dirichlet masses."""
    rng = np.random.default_rng(seed)
    I = int(rng.choice(np.arange(1, params.n_cap + 1), p=size_probabilities(params)))
    q = sample_partition(I, p, rng, cap=cap)
    theta = sample_truncated_dirichlet(np.full(I, params.alpha), params.tau(I), rng)[0]
    return PiecewiseDensity(q, theta / theta.sum())


# -- Dirichlet ball mass ----------------------------------------------------

def _check_ball_args(I: int, alpha: float, eps: float, tau: float) -> None:
    if I < 1 or not alpha > 0:
        raise ArgumentError("need I >= 1 and alpha > 0")
    if not 0 < eps < 1 / I:
        raise ArgumentError(f"need 0 < eps < 1/I, got eps={eps}, I={I}")
    if not 0 <= tau < eps**2:
        raise ArgumentError(f"need 0 <= tau < eps^2, got tau={tau}, eps^2={eps**2}")


def log_dirichlet_ball_mass_bound(I: int, alpha: float, eps: float, tau: float) -> float:
    _check_ball_args(I, alpha, eps, tau)
    return float(gammaln(alpha * I) - I * gammaln(alpha) + I * math.log(eps**2 - tau))


def dirichlet_ball_mass_bound(I: int, alpha: float, eps: float, tau: float) -> float:
    """Lower bound Gamma(alpha I) / Gamma(alpha)^I (eps^2 - tau)^I on P(|X - x0|_1 <= 2 eps)."""
    return math.exp(log_dirichlet_ball_mass_bound(I, alpha, eps, tau))


def dirichlet_ball_mass_mc(I: int, alpha: float, eps: float, tau: float, center=None,
                           n_mc: int = 1_000_000, seed=None) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of the truncated-Dirichlet L1-ball mass."""
    _check_ball_args(I, alpha, eps, tau)
    rng = np.random.default_rng(seed)
    x0 = np.full(I, 1.0 / I) if center is None else np.asarray(center, dtype=float)
    x = sample_truncated_dirichlet(np.full(I, alpha), tau, rng, size=n_mc)
    hit = np.abs(x - x0).sum(axis=1) <= 2 * eps
    m = hit.mean()
    return float(m), float(math.sqrt(m * (1 - m) / n_mc))

