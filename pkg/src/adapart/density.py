"""Piecewise-constant densities on binary partitions and distances between them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import ArgumentError, DivergenceError
from .partition import (
    BinaryPartition,
    _check_points,
    intersection_cells,
    locate,
    locate_many,
    partition_from_text,
    partition_to_text,
)

WEIGHT_TOL = 1e-12
TRUTH_NORM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class PiecewiseDensity:
    """f = sum_i theta_i / vol(region_i) on each region of ``partition``."""

    partition: BinaryPartition
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size != self.partition.size:
            raise ArgumentError(f"{w.size} weights for {self.partition.size} regions")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ArgumentError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL * max(1, w.size):
            raise ArgumentError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, p: int) -> PiecewiseDensity:
        return cls(BinaryPartition.unit(p), np.ones(1))

    @property
    def p(self) -> int:
        return self.partition.p

    @property
    def heights(self) -> np.ndarray:
        """Density value beta_i on each region."""
        return np.ldexp(self.weights, self.partition.depth_sums())

    def __eq__(self, other):
        if not isinstance(other, PiecewiseDensity):
            return NotImplemented
        return self.partition == other.partition and np.array_equal(self.weights, other.weights)

    __hash__ = None


def evaluate(f: PiecewiseDensity, point) -> float:
    return float(f.heights[locate(f.partition, point)])


def evaluate_many(f: PiecewiseDensity, points: np.ndarray) -> np.ndarray:
    return f.heights[locate_many(f.partition, points)]


def sample(f: PiecewiseDensity, count: int, seed=None) -> np.ndarray:
    """Draw ``count`` i.i.d. points: a region by weight, then uniform inside it."""
    if count < 0:
        raise ArgumentError("count must be nonnegative")
    rng = np.random.default_rng(seed)
    p = f.p
    if count == 0:
        return np.zeros((0, p))
    region = rng.choice(f.partition.size, size=count, p=f.weights / f.weights.sum())
    d = np.array([b.depths for b in f.partition.regions], dtype=np.int64)[region]
    k = np.array([b.indices for b in f.partition.regions], dtype=float)[region]
    u = rng.random((count, p))
    return np.ldexp(k + u, -d)


# -- exact metrics ----------------------------------------------------------

def _cells(f: PiecewiseDensity, g: PiecewiseDensity):
    if f.p != g.p:
        raise ArgumentError("densities live in different dimensions")
    ia, ib, depth = intersection_cells(f.partition, g.partition)
    vol = np.ldexp(1.0, -depth)
    return f.heights[ia], g.heights[ib], vol, ia, ib


def hellinger_exact(f: PiecewiseDensity, g: PiecewiseDensity) -> float:
    bf, bg, vol, _, _ = _cells(f, g)
    rho2 = float(np.sum((np.sqrt(bf) - np.sqrt(bg)) ** 2 * vol))
    return math.sqrt(max(rho2, 0.0))


def _log_ratio_cells(f: PiecewiseDensity, g: PiecewiseDensity):
    bf, bg, vol, ia, ib = _cells(f, g)
    mass = bf * vol
    live = mass > 0
    bad = live & (bg <= 0)
    if np.any(bad):
        c = int(np.flatnonzero(bad)[0])
        cell = (f.partition.regions[ia[c]], g.partition.regions[ib[c]])
        raise DivergenceError(f"second density vanishes on a cell with mass {mass[c]:.3g}", cell=cell)
    return mass[live], np.log(bf[live]) - np.log(bg[live])


def kl_exact(f: PiecewiseDensity, g: PiecewiseDensity) -> float:
    """K(f, g) = E_f log(f / g)."""
    mass, lr = _log_ratio_cells(f, g)
    return max(float(np.sum(mass * lr)), 0.0)


def logratio_variance(f: PiecewiseDensity, g: PiecewiseDensity) -> float:
    """Var_f log(f / g)."""
    mass, lr = _log_ratio_cells(f, g)
    mean = np.sum(mass * lr) / np.sum(mass)
    return float(np.sum(mass * (lr - mean) ** 2) / np.sum(mass))


def l1_exact(f: PiecewiseDensity, g: PiecewiseDensity) -> float:
    bf, bg, vol, _, _ = _cells(f, g)
    return float(np.sum(np.abs(bf - bg) * vol))


# -- truths -----------------------------------------------------------------

Sampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True, eq=False)
class TruthDensity:
    """A data-generating density on [0, 1]^p with an exact sampler.

    ``pdf`` maps an (n, p) array to n density values. For p = 1, ``breaks``
    lists interior points where the density is not smooth; quadrature splits
    there. ``piecewise`` is set when the truth is itself a PiecewiseDensity.
    """

    p: int
    pdf: Callable[[np.ndarray], np.ndarray]
    sampler: Sampler
    nominal_r: Optional[float] = None
    name: str = "truth"
    breaks: tuple[float, ...] = ()
    piecewise: Optional[PiecewiseDensity] = None
    check_normalization: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.check_normalization and self.piecewise is None and self.p <= 2:
            total = _integrate_truth(self)
            if abs(total - 1.0) > TRUTH_NORM_TOL:
                raise ArgumentError(f"truth {self.name!r} integrates to {total!r}")

    @classmethod
    def from_piecewise(cls, f: PiecewiseDensity, nominal_r: Optional[float] = None, name: str = "piecewise"):
        return cls(
            p=f.p,
            pdf=lambda x: evaluate_many(f, x),
            sampler=lambda rng, n: sample(f, n, seed=rng),
            nominal_r=nominal_r,
            name=name,
            piecewise=f,
        )

    def sample(self, count: int, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return np.asarray(self.sampler(rng, count), dtype=float).reshape(count, self.p)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.pdf(_check_points(x, self.p)), dtype=float)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def interval_integrals(func: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray,
                       breaks: tuple[float, ...] = ()) -> np.ndarray:
    """Gauss-Legendre integrals of a 1D function over [lo_i, hi_i], split at ``breaks``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    owner = np.arange(lo.size)
    a, b = lo.copy(), hi.copy()
    for c in breaks:
        inside = (a < c) & (c < b)
        if np.any(inside):
            owner = np.concatenate([owner, owner[inside]])
            a_new = np.full(int(inside.sum()), c)
            b_new = b[inside]
            b = b.copy()
            b[inside] = c
            a = np.concatenate([a, a_new])
            b = np.concatenate([b, b_new])
    half = (b - a) / 2
    mid = (a + b) / 2
    x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = func(x.reshape(-1, 1)).reshape(x.shape)
    parts = half * (vals @ _GL_WEIGHTS)
    out = np.zeros(lo.size)
    np.add.at(out, owner, parts)
    return out


def _integrate_truth(t: TruthDensity) -> float:
    if t.p == 1:
        pts = sorted(set(t.breaks))
        val, _ = integrate.quad(lambda y: float(t.pdf(np.array([[y]]))[0]), 0.0, 1.0,
                                points=pts or None, limit=400, epsabs=1e-11, epsrel=1e-11)
        return val
    # 2D: tensor Gauss-Legendre, 8 nodes on each cell of a 32 x 32 dyadic grid
    nodes, weights = np.polynomial.legendre.leggauss(8)
    mids = (np.arange(32) + 0.5) / 32
    xs = (mids[:, None] + nodes[None, :] / 64).ravel()
    ws = np.tile(weights / 64, 32)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    vals = t.pdf(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
    return float(ws @ vals @ ws)


def truth_region_integrals(t: TruthDensity, q: BinaryPartition) -> tuple[np.ndarray, np.ndarray]:
    """Per region of ``q``: mass of the truth and the integral of its square root (p = 1)."""
    if t.piecewise is not None:
        f = t.piecewise
        ia, ib, depth = intersection_cells(f.partition, q)
        vol = np.ldexp(1.0, -depth)
        mass = np.bincount(ib, weights=f.heights[ia] * vol, minlength=q.size)
        root = np.bincount(ib, weights=np.sqrt(f.heights[ia]) * vol, minlength=q.size)
        return mass, root
    if t.p != 1:
        raise ArgumentError("quadrature region integrals are only available for p = 1")
    lo = np.array([b.bounds()[0][0] for b in q.regions])
    hi = np.array([b.bounds()[1][0] for b in q.regions])
    mass = interval_integrals(t.pdf, lo, hi, t.breaks)
    root = interval_integrals(lambda x: np.sqrt(np.maximum(t.pdf(x), 0.0)), lo, hi, t.breaks)
    return mass, root


def hellinger_mc(f0: TruthDensity, g: PiecewiseDensity, n_mc: int, seed=None) -> tuple[float, float]:
    """Monte Carlo Hellinger distance via rho^2 = 2 - 2 E_{f0} sqrt(g / f0).

    Returns the estimate of rho and its delta-method standard error.
    """
    if n_mc < 1:
        raise ArgumentError("n_mc must be >= 1")
    y = f0.sample(n_mc, seed)
    w = np.sqrt(evaluate_many(g, y) / f0(y))
    m = w.mean()
    se_m = w.std(ddof=1) / math.sqrt(n_mc) if n_mc > 1 else 0.0
    rho2 = max(2.0 - 2.0 * m, 0.0)
    rho = math.sqrt(rho2)
    se = (2.0 * se_m) / (2.0 * rho) if rho > 0 else 2.0 * math.sqrt(se_m)
    return rho, se


def hellinger_to_truth(f0: TruthDensity, g: PiecewiseDensity, n_mc: int = 200_000, seed=None) -> float:
    """Hellinger distance from a truth: exact if piecewise, quadrature in 1D, else Monte Carlo."""
    if f0.piecewise is not None:
        return hellinger_exact(f0.piecewise, g)
    if f0.p == 1:
        _, root = truth_region_integrals(f0, g.partition)
        return math.sqrt(max(2.0 - 2.0 * float(np.sqrt(g.heights) @ root), 0.0))
    return hellinger_mc(f0, g, n_mc, seed)[0]


def metrics_mc(f: PiecewiseDensity, g: PiecewiseDensity, n_mc: int, seed=None) -> dict[str, tuple[float, float]]:
    """Monte Carlo estimates (value, standard error) of all four distances.

    Uses only pointwise evaluation: draws from f for KL and V, from f for
    Hellinger, and from the mixture (f + g) / 2 for L1.
    """
    rng = np.random.default_rng(seed)
    y = sample(f, n_mc, seed=rng)
    fy, gy = evaluate_many(f, y), evaluate_many(g, y)
    rho, rho_se = hellinger_mc(TruthDensity.from_piecewise(f), g, n_mc, seed=rng)
    with np.errstate(divide="ignore"):
        lr = np.log(fy) - np.log(gy)
    kl = (lr.mean(), lr.std(ddof=1) / math.sqrt(n_mc))
    c = lr - lr.mean()
    var = float(np.mean(c**2)) * n_mc / (n_mc - 1)
    var_se = math.sqrt(max(np.mean(c**4) - np.mean(c**2) ** 2, 0.0) / n_mc)
    pick = rng.random(n_mc) < 0.5
    z = np.where(pick[:, None], sample(f, n_mc, seed=rng), sample(g, n_mc, seed=rng))
    fz, gz = evaluate_many(f, z), evaluate_many(g, z)
    t = 2.0 * np.abs(fz - gz) / (fz + gz)
    l1 = (t.mean(), t.std(ddof=1) / math.sqrt(n_mc))
    return {"hellinger": (rho, rho_se), "kl": kl, "variance": (var, var_se), "l1": l1}


# -- serialization ----------------------------------------------------------

def density_to_text(f: PiecewiseDensity) -> str:
    lines = ["density v1", partition_to_text(f.partition).rstrip("\n"), "weights"]
    lines += [format(float(w), ".17g") for w in f.weights]
    return "\n".join(lines) + "\n"


def density_from_text(text: str) -> PiecewiseDensity:
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != "density v1":
        raise ArgumentError("missing 'density v1' header")
    try:
        cut = lines.index("weights")
    except ValueError as exc:
        raise ArgumentError("missing weights block") from exc
    q = partition_from_text("\n".join(lines[1:cut]))
    w = np.array([float(x) for x in lines[cut + 1:cut + 1 + q.size]])
    return PiecewiseDensity(q, w)


def refine_to(f: PiecewiseDensity, q: BinaryPartition) -> PiecewiseDensity:
    """Re-express f on a partition that refines its own."""
    ia, ib, depth = intersection_cells(q, f.partition)
    if not np.array_equal(ia, np.arange(q.size)) and np.unique(ia).size != ia.size:
        raise ArgumentError("target partition does not refine the density's partition")
    w = np.zeros(q.size)
    w[ia] = f.heights[ib] * np.ldexp(1.0, -depth)
    return PiecewiseDensity(q, w / w.sum())

