"""Likelihood, sieve MLE, marginal likelihood and posterior computation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import gammaln, logsumexp

from .density import PiecewiseDensity, TruthDensity, truth_region_integrals
from .errors import ArgumentError, ResourceError
from .mcmc import PartitionChain
from .partition import (
    ENUMERATION_CAP,
    MAX_DEPTH,
    BinaryPartition,
    DyadicBox,
    _check_points,
    box_from_text,
    box_to_text,
    common_refinement,
    count_partitions,
    enumerate_partitions,
    intersection_cells,
    locate_many,
)
from .prior import PriorParams, log_prior_partition, sample_truncated_dirichlet

REFINEMENT_CAP = 200_000
LOG2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.points, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or x.shape[1] < 1:
            raise ArgumentError("points must be an (n, p) array")
        if len(x):
            _check_points(x, x.shape[1])
        x.setflags(write=False)
        object.__setattr__(self, "points", x)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def p(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n


def _as_points(data) -> np.ndarray:
    return data.points if isinstance(data, Dataset) else Dataset(data).points


def region_counts(data, q: BinaryPartition) -> np.ndarray:
    x = _as_points(data)
    if len(x) == 0:
        return np.zeros(q.size, dtype=np.int64)
    return np.bincount(locate_many(q, x), minlength=q.size)


class _GridCounter:
    """Region counts from a summed-area table of a fine dyadic histogram."""

    def __init__(self, x: np.ndarray, depth: int):
        p = x.shape[1]
        self.depth = depth
        m = 1 << depth
        cells = np.minimum(np.floor(np.ldexp(x, depth)).astype(np.int64), m - 1)
        hist = np.zeros((m,) * p, dtype=np.int64)
        np.add.at(hist, tuple(cells.T), 1)
        sat = hist
        for axis in range(p):
            sat = np.cumsum(sat, axis=axis)
        self.sat = np.pad(sat, [(1, 0)] * p)
        self.p = p

    def counts(self, q: BinaryPartition) -> np.ndarray:
        out = np.zeros(q.size, dtype=np.int64)
        for i, b in enumerate(q.regions):
            lo = [k << (self.depth - d) for d, k in zip(b.depths, b.indices)]
            hi = [(k + 1) << (self.depth - d) for d, k in zip(b.depths, b.indices)]
            total = 0
            for corner in range(1 << self.p):
                idx = tuple(hi[l] if corner >> l & 1 else lo[l] for l in range(self.p))
                sign = (-1) ** (self.p - bin(corner).count("1"))
                total += sign * self.sat[idx]
            out[i] = total
        return out


def log_likelihood(data, f: PiecewiseDensity) -> float:
    """sum_i N_i log beta_i; -inf when a point falls where f vanishes."""
    N = region_counts(data, f.partition)
    beta = f.heights
    live = N > 0
    if np.any(beta[live] <= 0):
        return -math.inf
    return float(np.sum(N[live] * np.log(beta[live])))


def _mle_loglik(N: np.ndarray, depth_sums: np.ndarray, n: int) -> float:
    live = N > 0
    Nl = N[live]
    return float(np.sum(Nl * (np.log(Nl / n) + depth_sums[live] * LOG2)))


def mle_fixed_partition(data, q: BinaryPartition) -> PiecewiseDensity:
    x = _as_points(data)
    if len(x) == 0:
        raise ArgumentError("the MLE needs at least one point")
    N = region_counts(x, q)
    return PiecewiseDensity(q, N / N.sum())


def _xlogx(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0)


def sieve_mle(data, I: int, strategy: str = "exhaustive", cap: int = ENUMERATION_CAP) -> PiecewiseDensity:
    """Maximum likelihood density over partitions of size I.

    ``exhaustive`` scans every partition of size I (ties go to the first in
    canonical order); ``greedy`` grows from the unit cube, each time taking the
    split with the largest likelihood gain (ties: lowest region, then axis).
    """
    x = _as_points(data)
    if len(x) == 0:
        raise ArgumentError("the MLE needs at least one point")
    if I < 1:
        raise ArgumentError(f"size must be >= 1, got {I}")
    p = x.shape[1]
    n = len(x)
    if strategy == "exhaustive":
        if count_partitions(I, p) > cap:
            raise ResourceError(f"T_{I} exceeds the enumeration cap {cap}")
        best, best_ll = None, -math.inf
        depth = I - 1
        grid = _GridCounter(x, depth) if (depth * p) <= 24 else None
        for q in enumerate_partitions(I, p, cap=cap):
            N = grid.counts(q) if grid is not None else region_counts(x, q)
            ll = _mle_loglik(N, q.depth_sums(), n)
            if ll > best_ll:
                best, best_ll = q, ll
        return mle_fixed_partition(x, best)
    if strategy == "greedy":
        return mle_fixed_partition(x, _greedy_partition(x, I))
    raise ArgumentError(f"unknown strategy {strategy!r}")


def _greedy_partition(x: np.ndarray, I: int) -> BinaryPartition:
    p = x.shape[1]
    members = {DyadicBox.unit(p): np.arange(len(x))}
    gains: dict[tuple[DyadicBox, int], tuple[float, np.ndarray, np.ndarray]] = {}

    def gain(box, axis):
        key = (box, axis)
        if key not in gains:
            idx = members[box]
            d, k = box.depths[axis], box.indices[axis]
            upper = x[idx, axis] >= math.ldexp(2 * k + 1, -(d + 1))
            lo, hi = idx[~upper], idx[upper]
            # N0 log N0 + N1 log N1 - N log N + N log 2
            g = float(_xlogx(len(lo)) + _xlogx(len(hi)) - _xlogx(len(idx)) + len(idx) * LOG2)
            gains[key] = (g, lo, hi)
        return gains[key][0]

    while len(members) < I:
        best = None
        for box in sorted(members):
            for axis in range(p):
                if box.depths[axis] >= MAX_DEPTH:
                    continue
                g = gain(box, axis)
                if best is None or g > best[0]:
                    best = (g, box, axis)
        if best is None:
            raise ResourceError("no admissible split left")
        _, box, axis = best
        _, lo, hi = gains[(box, axis)]
        c0, c1 = box.halves(axis)
        del members[box]
        members[c0], members[c1] = lo, hi
    return BinaryPartition(tuple(sorted(members)))


def log_marginal_likelihood(data, q: BinaryPartition, alpha: float, counts: np.ndarray | None = None) -> float:
    """log of the likelihood integrated over Dirichlet(alpha, ..., alpha) region masses.

    Equals log[ Gamma(alpha I) / Gamma(alpha I + n) prod_i Gamma(alpha + N_i) / Gamma(alpha)
    prod_i vol_i^(-N_i) ].
    """
    if not alpha > 0:
        raise ArgumentError("alpha must be positive")
    N = region_counts(data, q) if counts is None else np.asarray(counts)
    I, n = q.size, int(N.sum())
    return float(
        gammaln(alpha * I) - gammaln(alpha * I + n)
        + np.sum(gammaln(alpha + N) - gammaln(alpha))
        + LOG2 * np.sum(N * q.depth_sums())
    )


# -- posterior summaries -----------------------------------------------------

@dataclass
class PosteriorSummary:
    """Weighted partitions with their Dirichlet posterior parameters alpha + N_i."""

    partitions: list[BinaryPartition]
    log_weights: np.ndarray
    alpha_post: list[np.ndarray]
    params: PriorParams
    normalized: bool = True
    n: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=float)
        if not np.all(np.isfinite(lw)):
            raise ArgumentError("posterior log weights must be finite")
        if self.normalized:
            lw = lw - logsumexp(lw)
        self.log_weights = lw

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - logsumexp(self.log_weights))
        return w

    @property
    def sizes(self) -> np.ndarray:
        return np.array([q.size for q in self.partitions])

    def size_distribution(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for I, w in zip(self.sizes.tolist(), self.weights):
            out[I] = out.get(I, 0.0) + float(w)
        return dict(sorted(out.items()))

    @property
    def mode_size(self) -> int:
        dist = self.size_distribution()
        return max(dist, key=dist.get)

    def map_partition(self) -> BinaryPartition:
        return self.partitions[int(np.argmax(self.log_weights))]

    def as_dict(self) -> dict[BinaryPartition, float]:
        return {q: float(w) for q, w in zip(self.partitions, self.weights)}


def exact_posterior(data, params: PriorParams, I_max: int, cap: int = ENUMERATION_CAP) -> PosteriorSummary:
    """Posterior over all partitions of size <= I_max by enumeration."""
    x = _as_points(data)
    if len(x) == 0:
        raise ArgumentError("the posterior needs at least one point")
    p, n = x.shape[1], len(x)
    top = min(I_max, params.n_cap)
    for I in range(1, top + 1):
        if count_partitions(I, p) > cap:
            raise ResourceError(f"T_{I} in dimension {p} exceeds the enumeration cap {cap}")
    grid = _GridCounter(x, top - 1) if (top - 1) * p <= 24 else None
    parts, logw, apost = [], [], []
    for I in range(1, top + 1):
        for q in enumerate_partitions(I, p, cap=cap):
            N = grid.counts(q) if grid is not None else region_counts(x, q)
            lw = log_prior_partition(q, params) + log_marginal_likelihood(x, q, params.alpha, counts=N)
            parts.append(q)
            logw.append(lw)
            apost.append(N + params.alpha)
    return PosteriorSummary(parts, np.array(logw), apost, params, normalized=True, n=n,
                            meta={"method": "exact", "I_max": top})


def mcmc_posterior(data, params: PriorParams, iterations: int, seed=None, burn_in: int | None = None,
                   thin: int = 1, I_max: int | None = None, start: BinaryPartition | None = None,
                   likelihood: bool = True) -> PosteriorSummary:
    """Posterior summary from the collapsed Metropolis-Hastings sampler.

    Entries are the distinct visited partitions weighted by visit frequency
    after ``burn_in`` (default 10% of ``iterations``) and thinning.
    """
    x = _as_points(data)
    burn_in = iterations // 10 if burn_in is None else burn_in
    if burn_in >= iterations:
        raise ArgumentError("burn-in leaves no recorded iterations")
    chain = PartitionChain(x, params, seed=seed, I_max=I_max, start=start, likelihood=likelihood)
    visits = chain.run(iterations, burn_in=burn_in, thin=thin)
    keys = list(visits)
    counts = np.array([visits[k] for k in keys], dtype=float)
    parts = [BinaryPartition(k) for k in keys]
    apost = [chain.region_counts_of(k) + params.alpha for k in keys]
    return PosteriorSummary(parts, np.log(counts), apost, params, normalized=True, n=len(x),
                            meta={"method": "mcmc", "iterations": iterations, "burn_in": burn_in,
                                  "thin": thin, "acceptance": chain.stats.acceptance_rates()})


def posterior_mean_weights(alpha_post: np.ndarray) -> np.ndarray:
    a = np.asarray(alpha_post, dtype=float)
    return a / a.sum()


def posterior_mean_density(summary: PosteriorSummary, seed=None, draws_per_partition: int = 0,
                           cap: int = REFINEMENT_CAP) -> PiecewiseDensity:
    """Posterior mixture of per-partition posterior-mean densities on their common refinement.

    With ``draws_per_partition > 0`` the per-partition mean is estimated from
    truncated-Dirichlet draws instead of the closed form (alpha + N_i) / (alpha I + n).
    """
    if not summary.normalized:
        raise ArgumentError("summary must be normalized")
    rng = np.random.default_rng(seed)
    w = summary.weights
    order = np.argsort(-w, kind="stable")
    ref, values = None, None
    for k in order:
        q, a = summary.partitions[k], summary.alpha_post[k]
        if draws_per_partition > 0:
            th = sample_truncated_dirichlet(a, summary.params.tau(q.size), rng, size=draws_per_partition).mean(axis=0)
        else:
            th = posterior_mean_weights(a)
        heights = np.ldexp(th, q.depth_sums())
        if ref is None:
            ref, values = q, w[k] * heights
            continue
        if ref != q:
            new_ref, ia, ib = common_refinement(ref, q)
            if new_ref.size > cap:
                raise ResourceError(f"common refinement exceeds {cap} regions")
            values = values[ia] + w[k] * heights[ib]
            ref = new_ref
        else:
            values = values + w[k] * heights
    theta = np.ldexp(values, -ref.depth_sums())
    return PiecewiseDensity(ref, theta / theta.sum())


def _hellinger_batch(truth, q: BinaryPartition, thetas: np.ndarray, n_mc: int, rng) -> np.ndarray:
    """Hellinger distances from ``truth`` to densities on q with each row of ``thetas``."""
    root_h = np.sqrt(np.ldexp(thetas, q.depth_sums()[None, :]))
    if isinstance(truth, PiecewiseDensity):
        ia, ib, depth = intersection_cells(truth.partition, q)
        vol = np.ldexp(1.0, -depth)
        d = (np.sqrt(truth.heights[ia])[None, :] - root_h[:, ib]) ** 2
        return np.sqrt(np.maximum(d @ vol, 0.0))
    if truth.piecewise is not None or truth.p == 1:
        _, root = truth_region_integrals(truth, q)
    else:
        y = truth.sample(n_mc, rng)
        lab = locate_many(q, y)
        root = np.bincount(lab, weights=1.0 / np.sqrt(truth(y)), minlength=q.size) / n_mc
    return np.sqrt(np.maximum(2.0 - 2.0 * root_h @ root, 0.0))


def posterior_concentration_probability(summary: PosteriorSummary, f0: Union[TruthDensity, PiecewiseDensity],
                                        radius: float, n_mc: int = 10_000, seed=None) -> float:
    """Posterior probability that rho(f, f0) >= radius, from n_mc posterior draws."""
    if not summary.normalized:
        raise ArgumentError("summary must be normalized")
    rng = np.random.default_rng(seed)
    picks = np.bincount(rng.choice(len(summary.partitions), size=n_mc, p=summary.weights),
                        minlength=len(summary.partitions))
    hits = 0
    for k in np.flatnonzero(picks):
        q = summary.partitions[k]
        th = sample_truncated_dirichlet(summary.alpha_post[k], summary.params.tau(q.size), rng, size=int(picks[k]))
        rho = _hellinger_batch(f0, q, th, n_mc, rng)
        hits += int(np.sum(rho >= radius))
    return hits / n_mc


# -- serialization -------------------------------------------------------------

def summary_to_text(s: PosteriorSummary) -> str:
    pr = s.params
    lines = [
        "posterior-summary v1",
        f"lambda={pr.lam!r} alpha={pr.alpha!r} trunc_D={pr.D!r} trunc_kappa={pr.kappa!r} "
        f"n_cap={pr.n_cap} n={s.n} normalized={int(s.normalized)} entries={len(s.partitions)}",
    ]
    for q, lw, a in zip(s.partitions, s.log_weights, s.alpha_post):
        lines.append(f"entry {format(float(lw), '.17g')} {q.size}")
        lines += [f"{box_to_text(b)} | {format(float(ai), '.17g')}" for b, ai in zip(q.regions, a)]
    return "\n".join(lines) + "\n"


def summary_from_text(text: str) -> PosteriorSummary:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "posterior-summary v1":
        raise ArgumentError("missing 'posterior-summary v1' header")
    head = dict(tok.split("=") for tok in lines[1].split())
    params = PriorParams(float(head["lambda"]), float(head["alpha"]), float(head["trunc_D"]),
                         float(head["trunc_kappa"]), int(head["n_cap"]))
    parts, logw, apost = [], [], []
    i = 2
    while i < len(lines):
        tag, lw, size = lines[i].split()
        if tag != "entry":
            raise ArgumentError(f"expected an entry line, got {lines[i]!r}")
        size = int(size)
        rows = [ln.split("|") for ln in lines[i + 1:i + 1 + size]]
        parts.append(BinaryPartition.from_regions([box_from_text(r[0]) for r in rows]))
        logw.append(float(lw))
        apost.append(np.array([float(r[1]) for r in rows]))
        i += 1 + size
    if len(parts) != int(head["entries"]):
        raise ArgumentError("entry count does not match header")
    s = PosteriorSummary(parts, np.array(logw), apost, params, normalized=False, n=int(head["n"]))
    s.normalized = bool(int(head["normalized"]))
    return s
