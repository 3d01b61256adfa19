"""Exact, brute-force ground truth for small instances.

* :func:`brute_kmeans` - optimal k-Means by set-partition enumeration.
* :func:`brute_fl` - optimal uniform-cost facility location by subset
  enumeration.
* :func:`simplex_solve` - a dense two-phase tableau simplex with Bland's
  rule, used to certify fractional optima of the cluster LP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from kmeans_pd.errors import InputError
from kmeans_pd.geometry import Instance, as_points, sq_dist_matrix

MAX_BRUTE_N = 12
MAX_BRUTE_FACILITIES = 20
MAX_GROUP_SIZE = 15
LP_EPS = 1e-9


# --------------------------------------------------------------------------
# set partitions


class PartitionIterator:
    """Restricted-growth strings of length ``n`` with at most ``max_parts`` blocks.

    A string ``a`` has ``a[0] = 0`` and ``a[i] <= max(a[:i]) + 1``; element
    ``i`` belongs to block ``a[i]``. Every set partition of ``range(n)`` into
    at most ``max_parts`` nonempty blocks appears exactly once, in
    lexicographic order.
    """

    def __init__(self, n: int, max_parts: int | None = None):
        if n < 1:
            raise InputError("need n >= 1")
        self.n = n
        self.max_parts = n if max_parts is None else max(1, min(max_parts, n))
        self.current: list[int] | None = None

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        n, cap = self.n, self.max_parts
        a = [0] * n
        # prefix_max[i] = max(a[:i+1])
        pmax = [0] * n
        self.current = a
        yield tuple(a)
        while True:
            i = n - 1
            while i > 0 and (a[i] > pmax[i - 1] or a[i] + 1 >= cap):
                i -= 1
            if i == 0:
                return
            a[i] += 1
            pmax[i] = max(pmax[i - 1], a[i])
            for r in range(i + 1, n):
                a[r] = 0
                pmax[r] = pmax[i]
            yield tuple(a)


def rgs_to_blocks(rgs: Sequence[int]) -> list[list[int]]:
    blocks: list[list[int]] = [[] for _ in range(max(rgs) + 1)]
    for i, b in enumerate(rgs):
        blocks[b].append(i)
    return blocks


def subset_costs(points: np.ndarray) -> np.ndarray:
    """Cluster cost of every subset of ``points`` indexed by bitmask (mask 0 -> 0)."""
    # Pairwise form (1/|S|) sum_{i<j in S} d^2(i, j): no cancellation for
    # points far from the origin, unlike sum|x|^2 - |sum x|^2 / |S|.
    pts = as_points(points)
    n = pts.shape[0]
    size = 1 << n
    d2 = sq_dist_matrix(pts, pts)
    masks = np.arange(size)
    bits = ((masks[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
    pair_sum = np.zeros(size)
    for mask in range(1, size):
        low = (mask & -mask).bit_length() - 1
        rest = mask & (mask - 1)
        pair_sum[mask] = pair_sum[rest] + d2[low] @ bits[rest]
    cnt = bits.sum(axis=1)
    costs = np.zeros(size)
    costs[1:] = pair_sum[1:] / cnt[1:]
    return costs


def brute_kmeans(instance: Instance, *, max_n: int = MAX_BRUTE_N) -> tuple[float, list[list[int]]]:
    """Optimal k-Means cost and partition, by exhaustive partition search.

    Partitions are explored in restricted-growth order with the partial
    cost of the open blocks as a bound (adding a point to a cluster never
    lowers its cost), so the search is exact.
    """
    if instance.n > max_n:
        raise InputError(
            f"brute_kmeans refuses n={instance.n} > {max_n} (Bell-number blow-up); "
            "use a smaller instance or the grouped gap verifier"
        )
    n, k = instance.n, instance.k
    costs = subset_costs(instance.demands)
    best = [math.inf, None]
    masks = [0] * k
    assign = [0] * n

    def rec(e: int, used: int, total: float) -> None:
        if total >= best[0]:
            return
        if e == n:
            best[0] = total
            best[1] = assign[:]
            return
        bit = 1 << e
        for b in range(min(used + 1, k)):
            old = masks[b]
            new = old | bit
            masks[b] = new
            assign[e] = b
            rec(e + 1, max(used, b + 1), total - costs[old] + costs[new])
            masks[b] = old

    rec(0, 0, 0.0)
    return float(best[0]), rgs_to_blocks(best[1])


def brute_kmeans_plain(instance: Instance) -> float:
    """Unpruned enumeration over :class:`PartitionIterator` (reference for tests)."""
    costs = subset_costs(instance.demands)
    best = math.inf
    for rgs in PartitionIterator(instance.n, instance.k):
        masks = [0] * (max(rgs) + 1)
        for i, b in enumerate(rgs):
            masks[b] |= 1 << i
        best = min(best, float(sum(costs[m] for m in masks)))
    return best


def exact_block_costs(points, n_blocks: int) -> float:
    """Minimum cost over partitions of ``points`` into exactly ``n_blocks`` blocks."""
    pts = as_points(points)
    costs = subset_costs(pts)
    best = math.inf
    for rgs in PartitionIterator(pts.shape[0], n_blocks):
        if max(rgs) + 1 != n_blocks:
            continue
        masks = [0] * n_blocks
        for i, b in enumerate(rgs):
            masks[b] |= 1 << i
        best = min(best, float(sum(costs[m] for m in masks)))
    return best


# --------------------------------------------------------------------------
# facility location


def _min_table(cost: np.ndarray) -> np.ndarray:
    """Per-client min over every subset of the given facility columns, shape ``(2^m, n)``."""
    n, m = cost.shape
    table = np.full((1 << m, n), math.inf)
    for mask in range(1, 1 << m):
        low = (mask & -mask).bit_length() - 1
        table[mask] = np.minimum(table[mask & (mask - 1)], cost[:, low])
    return table


def brute_fl(demands, candidates, lam: float, *, return_set: bool = False,
             max_facilities: int = MAX_BRUTE_FACILITIES):
    """Optimal integral cost ``min_S sum_j c(j, S) + lam |S|`` over nonempty ``S``."""
    centers = getattr(candidates, "centers", candidates)
    f = as_points(centers)
    m = f.shape[0]
    if m > max_facilities:
        raise InputError(f"brute_fl refuses {m} > {max_facilities} candidate facilities")
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    cost = sq_dist_matrix(as_points(demands), f)
    lo_bits = m // 2
    hi_bits = m - lo_bits
    lo_tab = _min_table(cost[:, :lo_bits])
    hi_tab = _min_table(cost[:, lo_bits:])
    lo_pop = np.array([bin(x).count("1") for x in range(1 << lo_bits)])
    best, best_mask = math.inf, 0
    for h in range(1 << hi_bits):
        merged = np.minimum(lo_tab, hi_tab[h][None, :]).sum(axis=1)
        total = merged + lam * (lo_pop + bin(h).count("1"))
        if h == 0:
            total[0] = math.inf
        i = int(total.argmin())
        if total[i] < best:
            best, best_mask = float(total[i]), (h << lo_bits) | i
    if return_set:
        return best, [i for i in range(m) if best_mask >> i & 1]
    return best


# --------------------------------------------------------------------------
# linear programming


@dataclass
class LinearProgram:
    """``min c.x`` subject to ``A[r] . x (sense[r]) b[r]`` and ``x >= 0``."""

    c: np.ndarray
    A: np.ndarray
    senses: list[str]
    b: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        if self.A.shape != (len(self.b), len(self.c)) or len(self.senses) != len(self.b):
            raise InputError("inconsistent LP dimensions")
        bad = set(self.senses) - {"<=", ">=", "="}
        if bad:
            raise InputError(f"unknown constraint senses {bad}")

    def dump(self) -> str:
        """Readable standard-form listing for debugging."""
        names = self.names or [f"x{i}" for i in range(len(self.c))]

        def expr(coefs) -> str:
            terms = [f"{v:+.12g} {names[i]}" for i, v in enumerate(coefs) if v != 0]
            return " ".join(terms) if terms else "0"

        lines = [f"min: {expr(self.c)}", "subject to:"]
        for r in range(len(self.b)):
            lines.append(f"  r{r}: {expr(self.A[r])} {self.senses[r]} {self.b[r]:.12g}")
        lines.append("bounds: all variables >= 0")
        return "\n".join(lines) + "\n"


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    value: float
    x: np.ndarray | None
    iterations: int = 0


class _Tableau:
    def __init__(self, T: np.ndarray, basis: list[int]):
        self.T = T
        self.basis = basis
        self.iterations = 0

    def pivot(self, r: int, c: int) -> None:
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = c
        self.iterations += 1

    def minimize(self, cost: np.ndarray, allowed: np.ndarray, eps: float = LP_EPS) -> str:
        """Bland's-rule simplex on the current basis; columns outside ``allowed`` never enter."""
        T = self.T
        while True:
            cb = cost[self.basis]
            reduced = cost - cb @ T[:, :-1]
            entering = -1
            for j in np.flatnonzero(allowed):
                if reduced[j] < -eps:
                    entering = int(j)
                    break
            if entering < 0:
                return "optimal"
            col = T[:, entering]
            rows = np.flatnonzero(col > eps)
            if rows.size == 0:
                return "unbounded"
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + eps * max(1.0, abs(best))]
            leave = min(ties, key=lambda r: self.basis[r])
            self.pivot(int(leave), entering)


def simplex_solve(lp: LinearProgram, eps: float = LP_EPS) -> LPResult:
    """Solve ``lp`` with a two-phase dense tableau simplex (Bland's rule)."""
    if hasattr(lp, "to_lp"):
        lp = lp.to_lp()
    A = lp.A.copy()
    b = lp.b.copy()
    senses = list(lp.senses)
    m, n = A.shape
    for r in range(m):
        if b[r] < 0:
            A[r] *= -1
            b[r] *= -1
            senses[r] = {"<=": ">=", ">=": "<=", "=": "="}[senses[r]]

    n_slack = sum(s != "=" for s in senses)
    n_art = sum(s != "<=" for s in senses)
    width = n + n_slack + n_art
    T = np.zeros((m, width + 1))
    T[:, :n] = A
    T[:, -1] = b
    basis = [0] * m
    art_cols = []
    sc, ac = n, n + n_slack
    for r, s in enumerate(senses):
        if s == "<=":
            T[r, sc] = 1.0
            basis[r] = sc
            sc += 1
        else:
            if s == ">=":
                T[r, sc] = -1.0
                sc += 1
            T[r, ac] = 1.0
            basis[r] = ac
            art_cols.append(ac)
            ac += 1

    tab = _Tableau(T, basis)
    is_art = np.zeros(width, dtype=bool)
    is_art[art_cols] = True
    if art_cols:
        phase1 = is_art.astype(float)
        tab.minimize(phase1, np.ones(width, dtype=bool), eps)
        infeas = float(tab.T[:, -1] @ phase1[tab.basis])
        if infeas > 1e-7:
            return LPResult("infeasible", math.nan, None, tab.iterations)
        # drive remaining artificials out of the basis; drop redundant rows
        keep = []
        for r in range(m):
            if is_art[tab.basis[r]]:
                cand = np.flatnonzero((np.abs(tab.T[r, :-1]) > eps) & ~is_art)
                if cand.size:
                    tab.pivot(r, int(cand[0]))
                    keep.append(r)
            else:
                keep.append(r)
        tab.T = tab.T[keep]
        tab.basis = [tab.basis[r] for r in keep]

    cost = np.zeros(width)
    cost[:n] = lp.c
    status = tab.minimize(cost, ~is_art, eps)
    if status == "unbounded":
        return LPResult("unbounded", -math.inf, None, tab.iterations)
    x = np.zeros(width)
    x[tab.basis] = tab.T[:, -1]
    x = x[:n]
    return LPResult("optimal", float(lp.c @ x), x, tab.iterations)


# --------------------------------------------------------------------------
# cluster LP


@dataclass
class ClusterLP:
    """Covering LP over explicit clusters: one row per demand plus a cardinality row."""

    n_demands: int
    k: int
    columns: list[tuple[int, ...]]
    costs: np.ndarray

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=float)
        covered = set()
        for col in self.columns:
            covered.update(col)
        if covered != set(range(self.n_demands)):
            raise InputError("every demand must appear in at least one column")
        if (self.costs < 0).any():
            raise InputError("column costs must be nonnegative")

    def to_lp(self) -> LinearProgram:
        A = np.zeros((self.n_demands + 1, len(self.columns)))
        for c, col in enumerate(self.columns):
            A[list(col), c] = 1.0
        A[-1, :] = 1.0
        senses = [">="] * self.n_demands + ["<="]
        b = np.concatenate([np.ones(self.n_demands), [self.k]])
        names = ["C" + "_".join(map(str, col)) for col in self.columns]
        return LinearProgram(self.costs.copy(), A, senses, b, names)

    def coverage(self, x: np.ndarray) -> np.ndarray:
        cov = np.zeros(self.n_demands)
        for c, col in enumerate(self.columns):
            cov[list(col)] += x[c]
        return cov


def group_demands(demands, cut: float | None) -> list[list[int]]:
    """Connected components of the graph joining demands at Euclidean distance <= ``cut``."""
    pts = as_points(demands)
    n = pts.shape[0]
    if cut is None:
        return [list(range(n))]
    close = sq_dist_matrix(pts, pts) <= cut * cut
    seen = [False] * n
    groups = []
    for s in range(n):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in np.flatnonzero(close[v]):
                if not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
        groups.append(sorted(comp))
    return groups


def enumerate_clusters(demands, group_radius: float | None = None) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """All nonempty within-group subsets and their cluster costs.

    ``group_radius=None`` treats all demands as one group (full mode).
    """
    pts = as_points(demands)
    columns: list[tuple[int, ...]] = []
    costs: list[float] = []
    for group in group_demands(pts, group_radius):
        if len(group) > MAX_GROUP_SIZE:
            raise InputError(f"group of {len(group)} demands exceeds the 2^{MAX_GROUP_SIZE} column cap")
        sub_costs = subset_costs(pts[group])
        for mask in range(1, 1 << len(group)):
            columns.append(tuple(group[i] for i in range(len(group)) if mask >> i & 1))
            costs.append(float(sub_costs[mask]))
    return columns, np.array(costs)


def cluster_lp(demands, k: int, group_radius: float | None = None) -> ClusterLP:
    pts = as_points(demands)
    columns, costs = enumerate_clusters(pts, group_radius)
    return ClusterLP(pts.shape[0], k, columns, costs)
