"""Dyadic boxes and binary partitions of the unit cube [0, 1]^p.

A box is stored as per-coordinate (depth, index) pairs, so all volumes and
intersection measures are exact powers of two. Boxes are half-open on every
upper face except faces lying on the cube boundary 1, which are closed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ArgumentError, ResourceError

MAX_DEPTH = 62
ENUMERATION_CAP = 10**7


class DyadicBox(NamedTuple):
    """Product of dyadic intervals [k 2^-d, (k+1) 2^-d) over the coordinates.

    Tuple ordering compares ``depths`` first and then ``indices``, which is
    the canonical region order used by :class:`BinaryPartition`.
    """

    depths: tuple[int, ...]
    indices: tuple[int, ...]

    @classmethod
    def unit(cls, p: int) -> DyadicBox:
        if p < 1:
            raise ArgumentError(f"dimension must be >= 1, got {p}")
        return cls((0,) * p, (0,) * p)

    @property
    def p(self) -> int:
        return len(self.depths)

    @property
    def depth_sum(self) -> int:
        return sum(self.depths)

    @property
    def volume(self) -> Fraction:
        return Fraction(1, 1 << self.depth_sum)

    @property
    def fvolume(self) -> float:
        return math.ldexp(1.0, -self.depth_sum)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Float lower and upper corners."""
        d = np.asarray(self.depths, dtype=float)
        k = np.asarray(self.indices, dtype=float)
        return np.ldexp(k, -d.astype(int)), np.ldexp(k + 1, -d.astype(int))

    def halves(self, axis: int) -> tuple[DyadicBox, DyadicBox]:
        """Lower and upper halves along 0-based ``axis``."""
        d = self.depths[axis]
        if d >= MAX_DEPTH:
            raise ResourceError(f"splitting would exceed maximum depth {MAX_DEPTH} on axis {axis}")
        depths = self.depths[:axis] + (d + 1,) + self.depths[axis + 1:]
        k = self.indices[axis]
        lo = self.indices[:axis] + (2 * k,) + self.indices[axis + 1:]
        hi = self.indices[:axis] + (2 * k + 1,) + self.indices[axis + 1:]
        return DyadicBox(depths, lo), DyadicBox(depths, hi)

    def sibling(self, axis: int) -> DyadicBox | None:
        """The other half of this box's parent along ``axis``; None at depth 0."""
        if self.depths[axis] == 0:
            return None
        k = self.indices[axis] ^ 1
        return DyadicBox(self.depths, self.indices[:axis] + (k,) + self.indices[axis + 1:])

    def parent(self, axis: int) -> DyadicBox:
        d = self.depths[axis]
        if d == 0:
            raise ArgumentError("the unit interval has no parent")
        return DyadicBox(
            self.depths[:axis] + (d - 1,) + self.depths[axis + 1:],
            self.indices[:axis] + (self.indices[axis] >> 1,) + self.indices[axis + 1:],
        )

    def contains_box(self, other: DyadicBox) -> bool:
        for d, k, d2, k2 in zip(self.depths, self.indices, other.depths, other.indices):
            if d2 < d or (k2 >> (d2 - d)) != k:
                return False
        return True

    def contains(self, point: Sequence[float]) -> bool:
        return all(_cell(x, d) == k for x, d, k in zip(point, self.depths, self.indices))


def _cell(x: float, depth: int) -> int:
    n = 1 << depth
    return n - 1 if x >= 1.0 else int(math.floor(math.ldexp(x, depth)))


def _cells(x: np.ndarray, depth: int) -> np.ndarray:
    n = 1 << depth
    return np.minimum(np.floor(np.ldexp(x, depth)).astype(np.int64), n - 1)


def check_box(box: DyadicBox) -> None:
    if len(box.depths) != len(box.indices) or not box.depths:
        raise ArgumentError("box needs one (depth, index) pair per coordinate")
    for d, k in zip(box.depths, box.indices):
        if d < 0 or d > MAX_DEPTH or k < 0 or k >= (1 << d):
            raise ArgumentError(f"invalid dyadic interval (depth={d}, index={k})")


def intersection_volume(a: DyadicBox, b: DyadicBox) -> Fraction:
    """Exact Lebesgue measure of ``a`` intersected with ``b``.

    Per coordinate two dyadic intervals are disjoint or nested, so the result
    is 0 or the volume of the box built from the deeper interval on each axis.
    """
    if a.p != b.p:
        raise ArgumentError("boxes live in different dimensions")
    total = 0
    for d1, k1, d2, k2 in zip(a.depths, a.indices, b.depths, b.indices):
        if d1 <= d2:
            if (k2 >> (d2 - d1)) != k1:
                return Fraction(0)
            total += d2
        else:
            if (k1 >> (d1 - d2)) != k2:
                return Fraction(0)
            total += d1
    return Fraction(1, 1 << total)


@dataclass(frozen=True)
class BinaryPartition:
    """Regions of a binary partition in canonical (sorted) order."""

    regions: tuple[DyadicBox, ...]

    @classmethod
    def unit(cls, p: int) -> BinaryPartition:
        return cls((DyadicBox.unit(p),))

    @classmethod
    def from_regions(cls, regions: Iterable[DyadicBox], check: bool = True) -> BinaryPartition:
        boxes = tuple(sorted(DyadicBox(tuple(b[0]), tuple(b[1])) for b in regions))
        q = cls(boxes)
        if check:
            q.validate()
        return q

    @property
    def size(self) -> int:
        return len(self.regions)

    @property
    def p(self) -> int:
        return self.regions[0].p

    def __len__(self) -> int:
        return len(self.regions)

    def volumes(self) -> np.ndarray:
        return np.array([b.fvolume for b in self.regions])

    def depth_sums(self) -> np.ndarray:
        return np.array([b.depth_sum for b in self.regions], dtype=np.int64)

    def validate(self) -> None:
        """Raise ArgumentError unless the regions form a binary partition.

        Sibling pairs are merged until no pair remains; the regions form a
        binary partition exactly when this ends at the unit cube.
        """
        if not self.regions:
            raise ArgumentError("a partition needs at least one region")
        p = self.regions[0].p
        for b in self.regions:
            check_box(b)
            if b.p != p:
                raise ArgumentError("regions have mixed dimensions")
        if list(self.regions) != sorted(self.regions):
            raise ArgumentError("regions are not in canonical order")
        live = set(self.regions)
        if len(live) != len(self.regions):
            raise ArgumentError("duplicate regions")
        stack = list(live)
        while stack:
            b = stack.pop()
            if b not in live:
                continue
            for axis in range(p):
                s = b.sibling(axis)
                if s is not None and s in live:
                    live.discard(b)
                    live.discard(s)
                    par = b.parent(axis)
                    if par in live:
                        raise ArgumentError("regions overlap")
                    live.add(par)
                    stack.append(par)
                    break
        if live != {DyadicBox.unit(p)}:
            raise ArgumentError("regions do not reduce to the unit cube by sibling merges")

    def sibling_pairs(self) -> list[tuple[int, int, int]]:
        """All (i, j, axis) with regions i < j the two halves of a common box."""
        where = {b: i for i, b in enumerate(self.regions)}
        out = []
        for i, b in enumerate(self.regions):
            for axis in range(b.p):
                if b.depths[axis] and not b.indices[axis] & 1:
                    j = where.get(b.sibling(axis))
                    if j is not None:
                        out.append((min(i, j), max(i, j), axis))
        return sorted(out)

    def refines(self, coarse: BinaryPartition) -> bool:
        """True if every region lies inside a region of ``coarse``."""
        return all(any(c.contains_box(b) for c in coarse.regions) for b in self.regions)


def split(partition: BinaryPartition, region_idx: int, axis: int) -> BinaryPartition:
    """Halve region ``region_idx`` at the midpoint of coordinate ``axis``.

    ``axis`` counts coordinates from 1, as in y^1, ..., y^p.
    """
    I, p = partition.size, partition.p
    if not 0 <= region_idx < I:
        raise ArgumentError(f"region index {region_idx} out of range for size {I}")
    if not 1 <= axis <= p:
        raise ArgumentError(f"axis {axis} out of range 1..{p}")
    box = partition.regions[region_idx]
    lo, hi = box.halves(axis - 1)
    rest = partition.regions[:region_idx] + partition.regions[region_idx + 1:]
    return BinaryPartition(tuple(sorted(rest + (lo, hi))))


def merge_siblings(partition: BinaryPartition, region_idx_a: int, region_idx_b: int) -> BinaryPartition:
    I = partition.size
    for i in (region_idx_a, region_idx_b):
        if not 0 <= i < I:
            raise ArgumentError(f"region index {i} out of range for size {I}")
    a, b = partition.regions[region_idx_a], partition.regions[region_idx_b]
    for axis in range(partition.p):
        if a.sibling(axis) == b:
            parent = a.parent(axis)
            rest = tuple(r for i, r in enumerate(partition.regions) if i not in (region_idx_a, region_idx_b))
            return BinaryPartition(tuple(sorted(rest + (parent,))))
    raise ArgumentError(f"regions {region_idx_a} and {region_idx_b} are not siblings")


def _check_points(points: np.ndarray, p: int) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, p) if p > 1 or x.size != 1 else x.reshape(1, 1)
    if x.ndim != 2 or x.shape[1] != p:
        raise ArgumentError(f"points must have {p} coordinates")
    if not np.all((x >= 0.0) & (x <= 1.0)):
        raise ArgumentError("point coordinates must lie in [0, 1]")
    return x


def locate(partition: BinaryPartition, point: Sequence[float]) -> int:
    """Index of the region containing ``point``."""
    x = np.asarray(point, dtype=float).ravel()
    if x.size != partition.p:
        raise ArgumentError(f"point must have {partition.p} coordinates")
    if not np.all((x >= 0.0) & (x <= 1.0)):
        raise ArgumentError(f"point {tuple(x)} is outside the unit cube")
    for i, b in enumerate(partition.regions):
        if b.contains(x):
            return i
    raise AssertionError("regions do not cover the cube")  # unreachable for valid partitions


def locate_many(partition: BinaryPartition, points: np.ndarray) -> np.ndarray:
    """Vectorized :func:`locate` over the rows of ``points``."""
    x = _check_points(points, partition.p)
    out = np.full(len(x), -1, dtype=np.int64)
    by_depth: dict[tuple[int, ...], list[int]] = {}
    for i, b in enumerate(partition.regions):
        by_depth.setdefault(b.depths, []).append(i)
    for depths, members in by_depth.items():
        cells = np.stack([_cells(x[:, l], d) for l, d in enumerate(depths)], axis=1)
        if sum(depths) <= 62:
            # pack the per-axis cell indices into one integer key
            offsets = np.concatenate([[0], np.cumsum(depths[:-1])]).astype(np.int64)
            keys = (cells << offsets).sum(axis=1)
            reg_keys = np.array(
                [sum(k << int(o) for k, o in zip(partition.regions[i].indices, offsets)) for i in members],
                dtype=np.int64,
            )
            order = np.argsort(reg_keys)
            sorted_keys = reg_keys[order]
            pos = np.minimum(np.searchsorted(sorted_keys, keys), len(members) - 1)
            hit = sorted_keys[pos] == keys
            out[hit] = np.asarray(members, dtype=np.int64)[order[pos[hit]]]
        else:
            for i in members:
                out[np.all(cells == np.asarray(partition.regions[i].indices), axis=1)] = i
    return out


def _box_arrays(boxes: Sequence[DyadicBox], res: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.array([b.depths for b in boxes], dtype=np.int64)
    k = np.array([b.indices for b in boxes], dtype=np.int64)
    shift = res[None, :] - d
    return k << shift, (k + 1) << shift


def intersection_cells(a: BinaryPartition, b: BinaryPartition) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pairs (i, j) of regions with positive-volume intersection.

    Returns index arrays ``ia``, ``ib`` and the depth sum of each cell
    (cell volume is ``2 ** -depth``). Both partitions are mapped to a common
    integer grid and scanned in blocks sorted by the first coordinate.
    """
    if a.p != b.p:
        raise ArgumentError("partitions live in different dimensions")
    da = np.array([r.depths for r in a.regions], dtype=np.int64)
    db = np.array([r.depths for r in b.regions], dtype=np.int64)
    res = np.maximum(da.max(axis=0), db.max(axis=0))
    lo_a, hi_a = _box_arrays(a.regions, res)
    lo_b, hi_b = _box_arrays(b.regions, res)
    order = np.argsort(lo_b[:, 0], kind="stable")
    lo_b0 = lo_b[order, 0]
    ia_parts, ib_parts = [], []
    # b-regions are dyadic along axis 0, so any overlap with a has lo_b0 < hi_a0
    block = max(1, 2_000_000 // max(1, b.size * a.p))
    for start in range(0, a.size, block):
        sl = slice(start, min(a.size, start + block))
        stop = np.searchsorted(lo_b0, hi_a[sl, 0].max(), side="left")
        cand = order[:stop]
        if cand.size == 0:
            continue
        ov = np.all(
            (lo_a[sl, None, :] < hi_b[None, cand, :]) & (lo_b[None, cand, :] < hi_a[sl, None, :]),
            axis=2,
        )
        ii, jj = np.nonzero(ov)
        ia_parts.append(ii + start)
        ib_parts.append(cand[jj])
    ia = np.concatenate(ia_parts) if ia_parts else np.zeros(0, dtype=np.int64)
    ib = np.concatenate(ib_parts) if ib_parts else np.zeros(0, dtype=np.int64)
    depth = np.maximum(da[ia], db[ib]).sum(axis=1)
    return ia, ib, depth


def common_refinement(a: BinaryPartition, b: BinaryPartition) -> tuple[BinaryPartition, np.ndarray, np.ndarray]:
    """The partition into nonempty intersections of a-regions with b-regions.

    Returns the refinement and, per refined region, the indices of the a- and
    b-regions that contain it.
    """
    ia, ib, _ = intersection_cells(a, b)
    cells = []
    for i, j in zip(ia.tolist(), ib.tolist()):
        ra, rb = a.regions[i], b.regions[j]
        depths, idx = [], []
        for d1, k1, d2, k2 in zip(ra.depths, ra.indices, rb.depths, rb.indices):
            if d1 >= d2:
                depths.append(d1)
                idx.append(k1)
            else:
                depths.append(d2)
                idx.append(k2)
        cells.append(DyadicBox(tuple(depths), tuple(idx)))
    order = sorted(range(len(cells)), key=cells.__getitem__)
    q = BinaryPartition(tuple(cells[i] for i in order))
    return q, ia[order], ib[order]


# -- counting -------------------------------------------------------------

class _CountTable:
    """Coefficients of the generating function of T_I for one dimension p.

    A partition of size >= 2 is compatible with the midpoint cut of at least
    one axis. Inclusion-exclusion over the set of compatible axes gives

        N(x) = x + sum_{k=1..p} (-1)^(k+1) C(p, k) N(x)^(2^k),

    since the 2^k sub-boxes cut off by k axes are partitioned independently.
    """

    def __init__(self, p: int):
        self.p = p
        self.coef = [0, 1]
        # powers[k][i] = [x^i] N(x)^(2^(k+1))
        self.powers = [[0, 0] for _ in range(p)]

    def extend(self, I: int) -> None:
        while len(self.coef) <= I:
            n = len(self.coef)
            prev = self.coef
            new_pow = []
            for k in range(self.p):
                base = prev if k == 0 else self.powers[k - 1]
                # base has zero constant term, so [x^n] base^2 uses coefficients below n only
                new_pow.append(sum(base[j] * base[n - j] for j in range(1, n)))
            for k in range(self.p):
                self.powers[k].append(new_pow[k])
            total = sum((-1) ** k * comb(self.p, k + 1) * new_pow[k] for k in range(self.p))
            self.coef.append(total)


@lru_cache(maxsize=None)
def _table(p: int) -> _CountTable:
    return _CountTable(p)


def _count_recurrence(I: int, p: int) -> int:
    t = _table(p)
    t.extend(I)
    return t.coef[I]


def count_partitions(I: int, p: int, method: str = "recurrence", cap: int = ENUMERATION_CAP) -> int:
    """Number T_I of distinct binary partitions of size I in dimension p.

    ``method="enumerate"`` counts the deduplicated enumeration instead and is
    subject to ``cap``.
    """
    if I < 1 or p < 1:
        raise ArgumentError(f"need I >= 1 and p >= 1, got I={I}, p={p}")
    if method == "recurrence":
        return _count_recurrence(I, p)
    if method == "enumerate":
        return len(enumerate_partitions(I, p, cap=cap))
    raise ArgumentError(f"unknown counting method {method!r}")


def log_count_partitions(I: int, p: int) -> float:
    return math.log(_count_recurrence(I, p))


def count_bound_holds(I: int, p: int, c_star: float) -> bool:
    """Check log T_I <= c_star * I * log I."""
    return log_count_partitions(I, p) <= c_star * I * math.log(I) + 1e-12


def enumerate_partitions(I: int, p: int, cap: int = ENUMERATION_CAP) -> list[BinaryPartition]:
    """All distinct binary partitions of size I, in canonical order."""
    if I < 1 or p < 1:
        raise ArgumentError(f"need I >= 1 and p >= 1, got I={I}, p={p}")
    projected = max(_count_recurrence(i, p) for i in range(1, I + 1))
    if projected > cap:
        raise ResourceError(f"enumerating size {I} in dimension {p} needs {projected} partitions (cap {cap})")
    level = {(DyadicBox.unit(p),)}
    for _ in range(I - 1):
        nxt = set()
        for regions in level:
            for i, box in enumerate(regions):
                rest = regions[:i] + regions[i + 1:]
                for axis in range(p):
                    if box.depths[axis] < MAX_DEPTH:
                        nxt.add(tuple(sorted(rest + box.halves(axis))))
        level = nxt
    return [BinaryPartition(r) for r in sorted(level)]


# -- serialization --------------------------------------------------------

def box_to_text(box: DyadicBox) -> str:
    return " ".join(f"{d}:{k}" for d, k in zip(box.depths, box.indices))


def box_from_text(text: str) -> DyadicBox:
    try:
        pairs = [tok.split(":") for tok in text.split()]
        box = DyadicBox(tuple(int(d) for d, _ in pairs), tuple(int(k) for _, k in pairs))
    except ValueError as exc:
        raise ArgumentError(f"malformed box record {text!r}") from exc
    check_box(box)
    return box


def partition_to_text(q: BinaryPartition) -> str:
    lines = [f"partition p={q.p} size={q.size}"]
    lines += [box_to_text(b) for b in q.regions]
    return "\n".join(lines) + "\n"


def partition_from_text(text: str) -> BinaryPartition:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("partition"):
        raise ArgumentError("missing partition header")
    header = dict(tok.split("=") for tok in lines[0].split()[1:])
    regions = [box_from_text(ln) for ln in lines[1:]]
    if len(regions) != int(header["size"]):
        raise ArgumentError("region count does not match header")
    return BinaryPartition.from_regions(regions)
