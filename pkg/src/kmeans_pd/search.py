"""k-Means via a search over the facility opening price, plus baselines.

:func:`solve_kmeans_pd` bisects on ``lam``: a small price opens many
facilities, a large one few. It keeps the bracket ``|IS(lo)| > k >=
|IS(hi)|`` and returns the cheapest probe that opens at most ``k``
centers. Exactly ``k`` is not always reachable because ``|IS|`` can jump
past ``k`` between adjacent prices; fewer centers is still feasible.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from kmeans_pd.constants import delta_star
from kmeans_pd.errors import InputError
from kmeans_pd.geometry import CandidateSet, Instance, as_points, gen_candidates, sq_dist_matrix
from kmeans_pd.oracles import MAX_BRUTE_N, brute_kmeans
from kmeans_pd.primal_dual import jv_delta

LAMBDA_FLOOR = 1e-9
THREADS_ENV = "KMEANS_PD_THREADS"


@dataclass
class SearchConfig:
    lam_lo: float | None = None
    lam_hi: float | None = None
    max_iters: int = 60
    k: int | None = None
    max_expand: int = 40


@dataclass(frozen=True)
class Probe:
    lam: float
    opened: int
    cost: float
    dual: float
    lower_bound: float


@dataclass
class KMeansSolution:
    centers: np.ndarray
    cost: float
    lambda_used: float
    opened: int
    trace: list = field(default_factory=list)
    method: str = "primal-dual"
    infeasible_k: bool = False
    center_indices: list[int] = field(default_factory=list)
    bracket: tuple[float, float] | None = None
    iterations: int = 0

    def lower_bound(self) -> float:
        """Best weak-duality bound ``sum alpha - lam k`` over the search trace."""
        bounds = [p.lower_bound for p in self.trace if isinstance(p, Probe)]
        return max(bounds) if bounds else -math.inf

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "cost": self.cost,
            "opened": self.opened,
            "lambda_used": self.lambda_used if math.isfinite(self.lambda_used) else None,
            "infeasible_k": self.infeasible_k,
            "center_indices": [int(i) for i in self.center_indices],
            "centers": [[float(v) for v in c] for c in self.centers],
            "iterations": self.iterations,
        }
        if self.method == "primal-dual":
            out["bracket"] = list(self.bracket) if self.bracket else None
            out["lower_bound"] = self.lower_bound()
            out["trace"] = [
                {"lambda": p.lam, "opened": p.opened, "cost": p.cost, "dual": p.dual,
                 "lower_bound": p.lower_bound}
                for p in self.trace
            ]
        else:
            out["cost_history"] = [float(c) for c in self.trace]
        return out


def default_lambda_hi(demands) -> float:
    pts = as_points(demands)
    spread = float(sq_dist_matrix(pts, pts.mean(axis=0, keepdims=True)).max())
    return 4.0 * spread if spread > 0 else 1.0


def solve_kmeans_pd(instance: Instance, candidates: CandidateSet | None = None, delta: float | None = None,
                    search_cfg: SearchConfig | None = None) -> KMeansSolution:
    cfg = search_cfg or SearchConfig()
    k = instance.k if cfg.k is None else int(cfg.k)
    if candidates is None:
        candidates = gen_candidates(instance.demands, 2)
    centers_all = getattr(candidates, "centers", candidates)
    centers_all = as_points(centers_all, allow_empty=True)
    if centers_all.shape[0] == 0:
        raise InputError("candidate set is empty")
    delta = delta_star() if delta is None else float(delta)
    demands = instance.demands

    trace: list[Probe] = []
    results: dict[float, object] = {}

    def probe(lam: float):
        r = jv_delta(demands, centers_all, lam, delta)
        alpha_sum = float(r.alpha.sum())
        trace.append(Probe(lam, len(r.open_set), r.primal_cost, r.dual_objective, alpha_sum - lam * k))
        results[lam] = r
        return r

    lo = cfg.lam_lo if cfg.lam_lo is not None else LAMBDA_FLOOR
    hi = cfg.lam_hi if cfg.lam_hi is not None else default_lambda_hi(demands)
    if not 0 < lo < hi:
        raise InputError(f"need 0 < lam_lo < lam_hi, got {lo}, {hi}")

    r_lo = probe(lo)
    if len(r_lo.open_set) > k:
        r_hi = probe(hi)
        expand = 0
        while len(r_hi.open_set) > k and expand < cfg.max_expand:
            lo, hi = hi, hi * 2.0
            r_hi = probe(hi)
            expand += 1
        if len(r_hi.open_set) <= k:
            iters = 0
            while iters < cfg.max_iters and hi - lo >= 1e-9 * hi:
                mid = 0.5 * (lo + hi)
                r = probe(mid)
                iters += 1
                if len(r.open_set) > k:
                    lo = mid
                else:
                    hi = mid
                    if len(r.open_set) == k:
                        break
    else:
        hi = lo

    feasible = [p for p in trace if p.opened <= k]
    if feasible:
        best = min(feasible, key=lambda p: (p.cost, -p.opened, p.lam))
        infeasible = False
    else:
        best = min(trace, key=lambda p: (p.opened, p.cost, p.lam))
        infeasible = True
    r = results[best.lam]
    return KMeansSolution(
        centers=centers_all[r.open_set],
        cost=float(r.primal_cost),
        lambda_used=best.lam,
        opened=len(r.open_set),
        trace=trace,
        method="primal-dual",
        infeasible_k=infeasible,
        center_indices=list(r.open_set),
        bracket=(lo, hi),
        iterations=len(trace),
    )


def d2_seed(instance: Instance, k: int, rng_seed: int = 0) -> np.ndarray:
    """D^2 seeding: indices of ``k`` demands, each drawn proportionally to squared distance.

    When every remaining demand sits on a chosen center the next index is
    drawn uniformly from the unchosen ones.
    """
    pts = instance.demands
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise InputError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(rng_seed)
    chosen = [int(rng.integers(n))]
    d2 = sq_dist_matrix(pts, pts[chosen]).ravel()
    while len(chosen) < k:
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, sq_dist_matrix(pts, pts[[nxt]]).ravel())
        d2[chosen] = 0.0
    return np.array(chosen)


def lloyd(instance: Instance, initial_centers, max_iters: int = 100, tol: float = 1e-9) -> KMeansSolution:
    """Lloyd iterations from ``initial_centers``.

    A center left without demands is moved to the demand farthest from
    its current center. Stops when the relative cost improvement drops
    below ``tol``; the cost history is non-increasing.
    """
    pts = instance.demands
    centers = as_points(initial_centers).copy()
    if not 1 <= centers.shape[0] <= pts.shape[0]:
        raise InputError("need between 1 and n initial centers")
    if centers.shape[1] != pts.shape[1]:
        raise InputError("initial centers have the wrong dimension")
    d = sq_dist_matrix(pts, centers)
    cost = float(d.min(axis=1).sum())
    history = [cost]
    iters = 0
    for _ in range(max_iters):
        labels = d.argmin(axis=1)
        new = centers.copy()
        dist_to_own = d[np.arange(len(pts)), labels]
        for c in range(centers.shape[0]):
            members = labels == c
            if members.any():
                new[c] = pts[members].mean(axis=0)
            else:
                far = int(dist_to_own.argmax())
                new[c] = pts[far]
                dist_to_own[far] = 0.0
        iters += 1
        d = sq_dist_matrix(pts, new)
        new_cost = float(d.min(axis=1).sum())
        centers = new
        history.append(new_cost)
        improved = cost - new_cost
        cost = new_cost
        if improved <= tol * max(history[-2], 1e-300):
            break
    return KMeansSolution(
        centers=centers, cost=cost, lambda_used=math.nan, opened=centers.shape[0],
        trace=history, method="lloyd", iterations=iters,
    )


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def compare(instance: Instance, candidates: CandidateSet | None = None, k: int | None = None,
            delta: float | None = None, seeds=(0,)) -> list[dict]:
    """Cost/time table for primal-dual, best-of-seeds Lloyd with D^2 seeding, and brute force (n <= 12)."""
    k = instance.k if k is None else int(k)
    inst = Instance(instance.demands, k)
    seeds = list(seeds)

    def run_pd():
        t0 = time.perf_counter()
        sol = solve_kmeans_pd(inst, candidates, delta)
        return {"method": "primal-dual", "cost": sol.cost, "opened": sol.opened,
                "time_s": time.perf_counter() - t0}

    def run_lloyd():
        t0 = time.perf_counter()
        best = None
        for s in seeds:
            sol = lloyd(inst, inst.demands[d2_seed(inst, k, s)])
            if best is None or sol.cost < best.cost:
                best = sol
        return {"method": "lloyd+d2", "cost": best.cost, "opened": best.opened,
                "time_s": time.perf_counter() - t0}

    def run_brute():
        t0 = time.perf_counter()
        cost, blocks = brute_kmeans(inst)
        return {"method": "brute-force", "cost": cost, "opened": len(blocks),
                "time_s": time.perf_counter() - t0}

    jobs = [run_pd, run_lloyd]
    if inst.n <= MAX_BRUTE_N:
        jobs.append(run_brute)
    with ThreadPoolExecutor(max_workers=min(thread_cap(), len(jobs))) as pool:
        rows = list(pool.map(lambda f: f(), jobs))
    opt = rows[-1]["cost"] if inst.n <= MAX_BRUTE_N else None
    for row in rows:
        row["ratio_to_opt"] = (row["cost"] / opt if opt > 0 else (1.0 if row["cost"] <= 1e-12 else math.inf)) \
            if opt is not None else None
    return rows
