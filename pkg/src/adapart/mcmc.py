"""Collapsed Metropolis-Hastings sampler over binary partitions.

Region masses are integrated out with the Dirichlet marginal, so the chain
moves on partitions only. Three moves:

* SPLIT halves a uniformly chosen region along a uniformly chosen axis;
* MERGE joins a uniformly chosen sibling pair;
* SWAP merges a sibling pair and then splits a region of the result, keeping
  the size fixed.

Proposal probabilities use the exact move counts of both states (I * p
splits, M sibling pairs). The target carries exp(-lam I log I) / T_I with
T_I from the exact counting recurrence.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .partition import BinaryPartition, DyadicBox, MAX_DEPTH, log_count_partitions

LOG2 = math.log(2.0)
MOVE_PROBS = (1 / 3, 1 / 3, 1 / 3)  # split, merge, swap


class _State:
    """Mutable chain state: regions, sibling pairs, and per-region data members."""

    __slots__ = ("p", "boxes", "pos", "pairs", "pair_pos", "members", "_key")

    def __init__(self, p: int):
        self.p = p
        self.boxes: list[DyadicBox] = []
        self.pos: dict[DyadicBox, int] = {}
        self.pairs: list[tuple[DyadicBox, DyadicBox, int]] = []
        self.pair_pos: dict[tuple[DyadicBox, int], int] = {}
        self.members: dict[DyadicBox, np.ndarray] | None = None
        self._key = None

    @classmethod
    def from_regions(cls, regions, p: int, members=None) -> _State:
        s = cls(p)
        for b in regions:
            s._add_box(b)
        s.members = members
        for b in regions:
            s._add_pairs_of(b)
        return s

    # bookkeeping ------------------------------------------------------------

    def _add_box(self, b: DyadicBox) -> None:
        self.pos[b] = len(self.boxes)
        self.boxes.append(b)

    def _remove_box(self, b: DyadicBox) -> None:
        i = self.pos.pop(b)
        last = self.boxes.pop()
        if i < len(self.boxes):
            self.boxes[i] = last
            self.pos[last] = i

    def _pair_key(self, b: DyadicBox, axis: int):
        lo = b if not b.indices[axis] & 1 else b.sibling(axis)
        return lo, axis

    def _add_pairs_of(self, b: DyadicBox) -> None:
        for axis in range(self.p):
            s = b.sibling(axis)
            if s is not None and s in self.pos:
                key = self._pair_key(b, axis)
                if key not in self.pair_pos:
                    lo = key[0]
                    self.pair_pos[key] = len(self.pairs)
                    self.pairs.append((lo, lo.sibling(axis), axis))

    def _remove_pairs_of(self, b: DyadicBox) -> None:
        for axis in range(self.p):
            if b.depths[axis] == 0:
                continue
            key = self._pair_key(b, axis)
            i = self.pair_pos.pop(key, None)
            if i is None:
                continue
            last = self.pairs.pop()
            if i < len(self.pairs):
                self.pairs[i] = last
                self.pair_pos[(last[0], last[2])] = i

    def apply(self, removed, added, new_members=None) -> None:
        for b in removed:
            self._remove_pairs_of(b)
        for b in removed:
            self._remove_box(b)
            if self.members is not None:
                del self.members[b]
        for b in added:
            self._add_box(b)
        if self.members is not None:
            self.members.update(new_members)
        for b in added:
            self._add_pairs_of(b)
        self._key = None

    # queries ---------------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.boxes)

    def n_pairs(self) -> int:
        return len(self.pairs)

    def n_pairs_after(self, removed, added) -> int:
        """Sibling-pair count of the state with ``removed`` replaced by ``added``."""
        gone = set(removed)
        new = set(added)

        def present(b):
            return b in new or (b in self.pos and b not in gone)

        lost = set()
        for b in removed:
            for axis in range(self.p):
                s = b.sibling(axis)
                if s is not None and s in self.pos:
                    lost.add(self._pair_key(b, axis))
        won = set()
        for b in added:
            for axis in range(self.p):
                s = b.sibling(axis)
                if s is not None and present(s):
                    won.add(self._pair_key(b, axis))
        return len(self.pairs) - len(lost) + len(won)

    def key(self) -> tuple[DyadicBox, ...]:
        if self._key is None:
            self._key = tuple(sorted(self.boxes))
        return self._key

    def partition(self) -> BinaryPartition:
        return BinaryPartition(self.key())

    def copy(self) -> _State:
        s = _State(self.p)
        s.boxes = list(self.boxes)
        s.pos = dict(self.pos)
        s.pairs = list(self.pairs)
        s.pair_pos = dict(self.pair_pos)
        s.members = None if self.members is None else dict(self.members)
        s._key = self._key
        return s

    # data-free swap used by the uniform partition sampler ------------------

    def propose_swap(self, rng: np.random.Generator) -> _State | None:
        """Return the swapped state, or None for a no-op or invalid proposal."""
        if not self.pairs:
            return None
        x, y, axis = self.pairs[int(rng.integers(len(self.pairs)))]
        u = x.parent(axis)
        others = [b for b in self.boxes if b != x and b != y]
        j = int(rng.integers(len(others) + 1))
        r = u if j == len(others) else others[j]
        l = int(rng.integers(self.p))
        if r == u and l == axis:
            return None
        if r.depths[l] >= MAX_DEPTH:
            return None
        c0, c1 = r.halves(l)
        s = self.copy()
        if r == u:
            s.apply([x, y], [c0, c1])
        else:
            s.apply([x, y, r], [u, c0, c1])
        return s


@dataclass
class ChainStats:
    proposed: Counter
    accepted: Counter

    def acceptance_rates(self) -> dict[str, float]:
        return {k: self.accepted[k] / v for k, v in self.proposed.items() if v}


class PartitionChain:
    """Metropolis-Hastings chain targeting the partition posterior.

    ``points`` is an (n, p) array in the unit cube. With ``likelihood=False``
    the marginal likelihood is replaced by 1 and the chain targets the prior.
    ``I_max`` caps the partition size (the prior cap ``params.n_cap`` always
    applies).
    """

    def __init__(self, points: np.ndarray, params, seed=None, I_max: int | None = None,
                 start: BinaryPartition | None = None, likelihood: bool = True,
                 move_probs=MOVE_PROBS):
        x = np.asarray(points, dtype=float)
        if x.ndim != 2 or len(x) == 0:
            raise ArgumentError("points must be a nonempty (n, p) array")
        self.x = x
        self.n, self.p = x.shape
        self.params = params
        self.alpha = params.alpha
        self.I_max = params.n_cap if I_max is None else min(I_max, params.n_cap)
        self.likelihood = likelihood
        self.rng = np.random.default_rng(seed)
        probs = np.asarray(move_probs, dtype=float)
        self.move_cdf = np.cumsum(probs / probs.sum())
        self.p_split, self.p_merge = probs[0] / probs.sum(), probs[1] / probs.sum()
        self._log_T: dict[int, float] = {}
        self._lg_alpha = math.lgamma(self.alpha)
        start = BinaryPartition.unit(self.p) if start is None else start
        if start.p != self.p:
            raise ArgumentError("start partition has the wrong dimension")
        if start.size > self.I_max:
            raise ArgumentError(f"start partition size {start.size} exceeds the cap {self.I_max}")
        from .partition import locate_many
        labels = locate_many(start, x)
        order = np.argsort(labels, kind="stable")
        bounds = np.searchsorted(labels[order], np.arange(start.size + 1))
        members = {b: order[bounds[i]:bounds[i + 1]] for i, b in enumerate(start.regions)}
        self.state = _State.from_regions(start.regions, self.p, members)
        self.log_target = self._log_target_full()
        self.stats = ChainStats(Counter(), Counter())

    # target ----------------------------------------------------------------

    def log_T(self, I: int) -> float:
        v = self._log_T.get(I)
        if v is None:
            v = self._log_T[I] = log_count_partitions(I, self.p)
        return v

    def _size_term(self, I: int) -> float:
        prior = -self.params.lam * I * math.log(I) - self.log_T(I)
        if not self.likelihood:
            return prior
        a = self.alpha
        return prior + math.lgamma(a * I) - math.lgamma(a * I + self.n)

    def _box_term(self, b: DyadicBox, count: int) -> float:
        if not self.likelihood:
            return 0.0
        return math.lgamma(self.alpha + count) - self._lg_alpha + count * b.depth_sum * LOG2

    def _log_target_full(self) -> float:
        s = self.state
        total = self._size_term(s.size)
        for b in s.boxes:
            total += self._box_term(b, len(s.members[b]))
        return total

    def _split_members(self, idx: np.ndarray, box: DyadicBox, axis: int):
        d, k = box.depths[axis], box.indices[axis]
        mid = math.ldexp(2 * k + 1, -(d + 1))
        upper = self.x[idx, axis] >= mid
        return idx[~upper], idx[upper]

    # moves -----------------------------------------------------------------

    def _try(self, kind: str, removed, added, new_members, log_hastings_extra: float) -> bool:
        s = self.state
        I_new = s.size - len(removed) + len(added)
        self.stats.proposed[kind] += 1
        if I_new > self.I_max:
            return False
        delta = self._size_term(I_new) - self._size_term(s.size)
        for b in added:
            delta += self._box_term(b, len(new_members[b]))
        for b in removed:
            delta -= self._box_term(b, len(s.members[b]))
        log_r = delta + log_hastings_extra
        if log_r >= 0 or self.rng.random() < math.exp(log_r):
            s.apply(removed, added, new_members)
            self.log_target += delta
            self.stats.accepted[kind] += 1
            return True
        return False

    def _split(self) -> bool:
        s = self.state
        I = s.size
        r = s.boxes[int(self.rng.integers(I))]
        axis = int(self.rng.integers(self.p))
        if r.depths[axis] >= MAX_DEPTH:
            self.stats.proposed["split"] += 1
            return False
        if I + 1 > self.I_max:
            self.stats.proposed["split"] += 1
            return False
        c0, c1 = r.halves(axis)
        m0, m1 = self._split_members(s.members[r], r, axis)
        m_b = s.n_pairs_after([r], [c0, c1])
        extra = math.log(self.p_merge / m_b) - math.log(self.p_split / (I * self.p))
        return self._try("split", [r], [c0, c1], {c0: m0, c1: m1}, extra)

    def _merge(self) -> bool:
        s = self.state
        m_a = s.n_pairs()
        if m_a == 0:
            self.stats.proposed["merge"] += 1
            return False
        x, y, axis = s.pairs[int(self.rng.integers(m_a))]
        u = x.parent(axis)
        mu = np.concatenate([s.members[x], s.members[y]])
        I = s.size
        extra = math.log(self.p_split / ((I - 1) * self.p)) - math.log(self.p_merge / m_a)
        return self._try("merge", [x, y], [u], {u: mu}, extra)

    def _swap(self) -> bool:
        s = self.state
        m_a = s.n_pairs()
        if m_a == 0:
            self.stats.proposed["swap"] += 1
            return False
        x, y, axis = s.pairs[int(self.rng.integers(m_a))]
        u = x.parent(axis)
        I = s.size
        j = int(self.rng.integers(I - 1))
        # regions of the merged state: all boxes except x, y, plus u (placed last)
        if j < I - 2:
            others = s.boxes
            k = -1
            for b in others:
                if b == x or b == y:
                    continue
                k += 1
                if k == j:
                    r = b
                    break
        else:
            r = u
        l = int(self.rng.integers(self.p))
        if r == u and l == axis:
            self.stats.proposed["swap"] += 1
            self.stats.accepted["swap"] += 1
            return True
        if r.depths[l] >= MAX_DEPTH:
            self.stats.proposed["swap"] += 1
            return False
        c0, c1 = r.halves(l)
        if r == u:
            mu = np.concatenate([s.members[x], s.members[y]])
            m0, m1 = self._split_members(mu, u, l)
            removed, added, new = [x, y], [c0, c1], {c0: m0, c1: m1}
        else:
            m0, m1 = self._split_members(s.members[r], r, l)
            mu = np.concatenate([s.members[x], s.members[y]])
            removed, added, new = [x, y, r], [u, c0, c1], {u: mu, c0: m0, c1: m1}
        m_b = s.n_pairs_after(removed, added)
        return self._try("swap", removed, added, new, math.log(m_a) - math.log(m_b))

    def step(self) -> bool:
        u = self.rng.random()
        if u < self.move_cdf[0]:
            return self._split()
        if u < self.move_cdf[1]:
            return self._merge()
        return self._swap()

    def run(self, iterations: int, burn_in: int = 0, thin: int = 1, callback=None) -> Counter:
        """Advance the chain; return visit counts of canonical region tuples after burn-in."""
        if iterations < 1:
            raise ArgumentError("iterations must be >= 1")
        visits: Counter = Counter()
        self._counts: dict = {}
        for t in range(iterations):
            self.step()
            if callback is not None:
                callback(t, self.state)
            if t >= burn_in and (t - burn_in) % thin == 0:
                key = self.state.key()
                visits[key] += 1
                if key not in self._counts:
                    self._counts[key] = np.array([len(self.state.members[b]) for b in key])
        return visits

    def region_counts_of(self, key) -> np.ndarray:
        return self._counts[key]
