"""Synthetic ground-truth densities with known approximation exponents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .density import PiecewiseDensity, TruthDensity, truth_region_integrals
from .errors import ArgumentError, UnsupportedError
from .partition import BinaryPartition, DyadicBox, split

FAMILIES = ("piecewise", "holder_1d", "bounded_variation_1d", "haar_sparse")


@dataclass(frozen=True)
class TruthSpec:
    family: str
    params: dict[str, Any] = field(default_factory=dict)
    nominal_r: Optional[float] = None

    @classmethod
    def from_mapping(cls, cfg: dict) -> TruthSpec:
        if "family" not in cfg:
            raise ArgumentError("truth spec needs a 'family' key")
        r = cfg.get("nominal_r")
        return cls(cfg["family"], dict(cfg.get("params", {})), None if r is None else float(r))


def _inverse_cdf(cdf, u: np.ndarray, iters: int = 60) -> np.ndarray:
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    for _ in range(iters):
        mid = (lo + hi) / 2
        below = cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return (lo + hi) / 2


def _truth_1d(pdf, cdf, breaks, nominal_r, name) -> TruthDensity:
    def sampler(rng, n):
        return _inverse_cdf(cdf, rng.random(n)).reshape(n, 1)

    return TruthDensity(p=1, pdf=lambda x: pdf(np.asarray(x)[:, 0]), sampler=sampler,
                        nominal_r=nominal_r, name=name, breaks=tuple(breaks))


def holder_density(beta: float = 1.0, L: float = 1.0) -> TruthDensity:
    """f(y) = 1 + (L/2) sign(2y - 1) |2y - 1|^beta, Hoelder-beta with constant of order L.

    For beta = 1 this is the linear density 1 + L (y - 1/2).
    """
    if not 0 < beta <= 1:
        raise ArgumentError(f"beta must lie in (0, 1], got {beta}")
    if not 0 < L < 2:
        raise ArgumentError(f"L must lie in (0, 2) for positivity, got {L}")

    def pdf(y):
        u = 2 * y - 1
        return 1 + (L / 2) * np.sign(u) * np.abs(u) ** beta

    def cdf(y):
        return y + (L / 4) * (np.abs(2 * y - 1) ** (beta + 1) - 1) / (beta + 1)

    return _truth_1d(pdf, cdf, (0.5,), beta, f"holder_1d(beta={beta}, L={L})")


def bounded_variation_density(L: float = 1.0, jumps=((1 / 3, 0.6), (0.7, -0.5))) -> TruthDensity:
    """Normalized 1 + L (y - 1/2) + sum_j h_j 1{y >= c_j}: a linear trend plus jumps."""
    jumps = tuple((float(c), float(h)) for c, h in jumps)
    for c, _ in jumps:
        if not 0 < c < 1:
            raise ArgumentError(f"jump location {c} outside (0, 1)")
    total = 1 + sum(h * (1 - c) for c, h in jumps)
    grid = np.linspace(0, 1, 2001)
    raw = 1 + L * (grid - 0.5) + sum(h * (grid >= c) for c, h in jumps)
    if raw.min() <= 0 or min(1 + L * (c - 0.5) + sum(h for c2, h in jumps if c2 <= c) for c, _ in jumps) <= 0:
        raise ArgumentError("bounded-variation density would not be positive")

    def pdf(y):
        return (1 + L * (y - 0.5) + sum(h * (y >= c) for c, h in jumps)) / total

    def cdf(y):
        return (y + L * (y * y - y) / 2 + sum(h * np.maximum(y - c, 0.0) for c, h in jumps)) / total

    return _truth_1d(pdf, cdf, tuple(c for c, _ in jumps), 1.0, f"bounded_variation_1d(L={L})")


def haar_sparse_density(levels: int = 6, decay: float = 1.0, per_level: int = 2, amplitude: float = 0.5,
                        floor: float = 0.05, seed=0) -> TruthDensity:
    """Finite sparse Haar expansion on [0, 1], floored and renormalized.

    Level j carries ``per_level`` randomly placed coefficients of size
    amplitude * 2^(-j * decay) (times the wavelet's 2^(j/2) normalization).
    The result is piecewise constant on the regular depth-``levels`` grid.
    """
    if levels < 1:
        raise ArgumentError("levels must be >= 1")
    rng = np.random.default_rng(seed)
    m = 1 << levels
    g = np.ones(m)
    for j in range(levels):
        for k in rng.choice(1 << j, size=min(per_level, 1 << j), replace=False):
            c = amplitude * 2.0 ** (-j * decay) * rng.choice([-1.0, 1.0])
            width = m >> j
            start = k * width
            g[start:start + width // 2] += c * 2 ** (j / 2)
            g[start + width // 2:start + width] -= c * 2 ** (j / 2)
    shift = max(0.0, -g.min()) + floor
    f = (g + shift) / (1 + shift)
    q = regular_partition(1, levels)
    theta = f / m
    dens = PiecewiseDensity(q, theta / theta.sum())
    return TruthDensity.from_piecewise(dens, nominal_r=decay, name=f"haar_sparse(levels={levels}, decay={decay})")


def regular_partition(p: int, depth: int) -> BinaryPartition:
    """The regular grid with 2^depth cells along every axis."""
    regions = [DyadicBox.unit(p)]
    for axis in range(p):
        for _ in range(depth):
            regions = [h for b in regions for h in b.halves(axis)]
    return BinaryPartition(tuple(sorted(regions)))


def piecewise_from_splits(p: int, splits, weights) -> PiecewiseDensity:
    """Build a density by applying (region_idx, axis) splits to the unit cube.

    Indices refer to the canonical region order at each step; axes count from 1.
    ``weights`` follow the canonical order of the final partition.
    """
    q = BinaryPartition.unit(p)
    for i, axis in splits:
        q = split(q, int(i), int(axis))
    w = np.asarray(weights, dtype=float)
    return PiecewiseDensity(q, w / w.sum())


def make_truth(spec: TruthSpec, seed=None) -> TruthDensity:
    fam, prm = spec.family, spec.params
    if fam == "piecewise":
        if "density" in prm:
            dens = prm["density"]
        else:
            dens = piecewise_from_splits(int(prm.get("p", 1)), prm.get("splits", []), prm.get("weights", [1.0]))
        return TruthDensity.from_piecewise(dens, nominal_r=spec.nominal_r, name="piecewise")
    if fam == "holder_1d":
        t = holder_density(float(prm.get("beta", 1.0)), float(prm.get("L", 1.0)))
    elif fam == "bounded_variation_1d":
        t = bounded_variation_density(float(prm.get("L", 1.0)), prm.get("jumps", ((1 / 3, 0.6), (0.7, -0.5))))
    elif fam == "haar_sparse":
        t = haar_sparse_density(int(prm.get("levels", 6)), float(prm.get("decay", 1.0)),
                                int(prm.get("per_level", 2)), float(prm.get("amplitude", 0.5)),
                                float(prm.get("floor", 0.05)), seed=prm.get("seed", 0 if seed is None else seed))
    else:
        raise ArgumentError(f"unknown truth family {fam!r}; expected one of {FAMILIES}")
    if spec.nominal_r is not None:
        object.__setattr__(t, "nominal_r", spec.nominal_r)
    return t


def best_approximation_error(truth: TruthDensity, I: int, max_depth: int = 12, weights: str = "optimal") -> float:
    """Smallest Hellinger distance from a 1D truth to a density on a size-I partition.

    Dynamic programming over dyadic trees of depth <= min(I - 1, max_depth).
    With ``weights="optimal"`` each partition uses the Hellinger-optimal masses
    theta_i proportional to (int_i sqrt f)^2 / vol_i, giving
    rho^2 = 2 - 2 sqrt(sum_i (int_i sqrt f)^2 / vol_i). ``weights="mass"`` uses
    theta_i = int_i f instead.
    """
    if truth.p != 1:
        raise UnsupportedError("best approximation error is only implemented for p = 1")
    if I < 1:
        raise ArgumentError("I must be >= 1")
    depth = min(I - 1, max_depth)
    if I > 1 << depth:
        raise ArgumentError(f"size {I} needs depth above max_depth={max_depth}")
    fine = regular_partition(1, depth)
    mass, root = truth_region_integrals(truth, fine)
    vol = math.ldexp(1.0, -depth)
    K = I

    def leaf_score(m, s, v):
        if weights == "optimal":
            return s * s / v
        if weights == "mass":
            return np.sqrt(m / v) * s
        raise ArgumentError(f"unknown weights mode {weights!r}")

    m, s, v = mass, root, vol
    best = np.full((m.size, K + 1), -np.inf)
    best[:, 1] = leaf_score(m, s, v)
    for _ in range(depth):
        left, right = best[0::2], best[1::2]
        m = m[0::2] + m[1::2]
        s = s[0::2] + s[1::2]
        v = v * 2
        nxt = np.full((m.size, K + 1), -np.inf)
        nxt[:, 1] = leaf_score(m, s, v)
        for k in range(2, K + 1):
            cand = left[:, 1:k] + right[:, k - 1:0:-1]
            nxt[:, k] = cand.max(axis=1)
        best = nxt
    score = best[0, I]
    if weights == "optimal":
        rho2 = 2 - 2 * math.sqrt(score)
    else:
        rho2 = 2 - 2 * score
    return math.sqrt(max(rho2, 0.0))
