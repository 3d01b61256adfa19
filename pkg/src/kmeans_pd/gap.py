"""Two-pentagon integrality-gap instance for the k-Means LP.

``2h`` regular unit-side pentagons are laid out on the x-axis far apart
(every cross-pentagon vertex distance is at least ``M``) and ``k = 5h``.
Pairing consecutive vertices at weight 1/2 gives a fractional cover of
cost ``2.5 h``, while every integral 5h-clustering costs at least
``h (16 + sqrt 5) / 6``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from kmeans_pd.errors import InputError, VerificationError
from kmeans_pd.geometry import CandidateSet, Instance, cluster_cost, gen_candidates, sq_dist_matrix
from kmeans_pd.oracles import brute_kmeans, cluster_lp, exact_block_costs, simplex_solve

SQRT5 = math.sqrt(5.0)
CIRCUMRADIUS = math.sqrt(2.0 / (5.0 - SQRT5))
DIAGONAL = (SQRT5 + 1.0) / 2.0
DEFAULT_M = 100.0

W_CLOSED_FORM = {
    1: 10.0 / (5.0 - SQRT5),
    2: (10.0 + SQRT5) / 6.0,
    3: 1.0,
    4: 0.5,
}
INTEGRAL_OPT_H1 = (16.0 + SQRT5) / 6.0
GAP_RATIO = (16.0 + SQRT5) / 15.0


@dataclass(frozen=True)
class PentagonInstance:
    h: int
    M: float
    points: np.ndarray
    k: int

    @property
    def n_pentagons(self) -> int:
        return 2 * self.h

    def pentagon(self, m: int) -> list[int]:
        return list(range(5 * m, 5 * m + 5))

    @property
    def groups(self) -> list[list[int]]:
        return [self.pentagon(m) for m in range(self.n_pentagons)]

    def centers(self) -> np.ndarray:
        return np.array([self.points[g].mean(axis=0) for g in self.groups])

    def consecutive_pairs(self) -> list[tuple[int, int]]:
        out = []
        for g in self.groups:
            for t in range(5):
                a, b = g[t], g[(t + 1) % 5]
                out.append((min(a, b), max(a, b)))
        return out

    def as_instance(self) -> Instance:
        return Instance(self.points, self.k)


@dataclass
class GapReport:
    h: int
    M: float
    fractional_cost: float
    integral_opt: float
    ratio: float
    w_table: dict[int, float]
    w_closed_form: dict[int, float]
    integral_mode: str
    lp_value: float | None = None
    lp_ratio: float | None = None
    fractional_feasible: bool = True
    facility_lp_cost: float | None = None
    facility_lp_feasible: bool | None = None
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "M": self.M,
            "k": 5 * self.h,
            "w_table": {str(x): v for x, v in self.w_table.items()},
            "w_closed_form": {str(x): v for x, v in self.w_closed_form.items()},
            "fractional_cost": self.fractional_cost,
            "fractional_feasible": self.fractional_feasible,
            "integral_opt": self.integral_opt,
            "integral_mode": self.integral_mode,
            "ratio": self.ratio,
            "ratio_bound": GAP_RATIO,
            "lp_value": self.lp_value,
            "lp_ratio": self.lp_ratio,
            "facility_lp_cost": self.facility_lp_cost,
            "facility_lp_feasible": self.facility_lp_feasible,
            "checks": self.checks,
            "ok": self.ok,
        }


def make_pentagons(h: int = 1, M: float = DEFAULT_M) -> PentagonInstance:
    """``2h`` unit-side pentagons; pentagon ``m`` is centered at ``(m (M + 2r), 0)``."""
    if isinstance(h, bool) or not isinstance(h, (int, np.integer)) or h < 1:
        raise InputError(f"h must be a positive integer, got {h!r}")
    if not M >= 10:
        raise InputError(f"separation M must be >= 10, got {M}")
    angles = np.deg2rad(90.0 + 72.0 * np.arange(5))
    unit = CIRCUMRADIUS * np.column_stack([np.cos(angles), np.sin(angles)])
    pts = np.concatenate([unit + [m * (M + 2 * CIRCUMRADIUS), 0.0] for m in range(2 * h)])
    return PentagonInstance(h=int(h), M=float(M), points=pts, k=5 * int(h))


def fractional_solution(inst: PentagonInstance) -> tuple[float, dict]:
    """Cost of x_C = 1/2 on every consecutive-vertex pair, with a feasibility certificate."""
    pairs = inst.consecutive_pairs()
    x = 0.5
    coverage = np.zeros(len(inst.points))
    cost = 0.0
    for a, b in pairs:
        coverage[[a, b]] += x
        cost += x * cluster_cost(inst.points[[a, b]])
    cardinality = x * len(pairs)
    cert = {
        "n_columns": len(pairs),
        "coverage_min": float(coverage.min()),
        "coverage_max": float(coverage.max()),
        "cardinality": cardinality,
        "covering_ok": bool((coverage >= 1.0 - 1e-12).all()),
        "cardinality_ok": cardinality <= inst.k + 1e-12,
    }
    cert["feasible"] = cert["covering_ok"] and cert["cardinality_ok"]
    return cost, cert


def facility_lp_solution(inst: PentagonInstance) -> tuple[float, bool]:
    """Evaluate the center-based LP solution: y = 1/2 on pair midpoints, x = 1/2 to the two nearest.

    Returns ``(cost, feasible)`` by direct constraint evaluation.
    """
    pairs = inst.consecutive_pairs()
    mids = np.array([inst.points[list(p)].mean(axis=0) for p in pairs])
    y = np.full(len(pairs), 0.5)
    c = sq_dist_matrix(inst.points, mids)
    x = np.zeros_like(c)
    for j in range(len(inst.points)):
        nearest = np.argsort(c[j], kind="stable")[:2]
        x[j, nearest] = 0.5
    feasible = bool(
        (x.sum(axis=1) >= 1.0 - 1e-12).all()
        and (x <= y[None, :] + 1e-12).all()
        and y.sum() <= inst.k + 1e-12
        and (x >= 0).all()
    )
    return float((x * c).sum()), feasible


def _pentagon_points() -> np.ndarray:
    return make_pentagons(1).points[:5]


def w_of_x(x: int) -> float:
    """Least cost of splitting one unit pentagon into exactly ``x`` clusters (brute force)."""
    if x not in (1, 2, 3, 4):
        raise InputError(f"x must be in 1..4, got {x!r}")
    return exact_block_costs(_pentagon_points(), x)


def _grouped_integral_opt(w: dict[int, float], n_groups: int, k: int) -> float:
    """Min over splitting ``k`` clusters among ``n_groups`` pentagons (each gets 1..5)."""
    table = {**w, 5: 0.0}
    best = {0: 0.0}
    for _ in range(n_groups):
        nxt: dict[int, float] = {}
        for used, val in best.items():
            for x, wx in table.items():
                if used + x <= k:
                    cand = val + wx
                    if cand < nxt.get(used + x, math.inf):
                        nxt[used + x] = cand
        best = nxt
    return min(v for used, v in best.items() if used <= k)


def verify_gap(h: int = 1, M: float = DEFAULT_M, with_lp: bool = False, *, brute_limit: int = 12) -> GapReport:
    """Reproduce the integrality-gap lower bound for ``2h`` pentagons.

    The integral optimum comes from direct partition enumeration when
    ``10h <= brute_limit`` (h=1 with the default) and otherwise from the
    per-pentagon brute-force ``w`` table combined across pentagons.
    Raises :class:`VerificationError` if the gap falls below
    ``(16 + sqrt 5) / 15``.
    """
    inst = make_pentagons(h, M)
    w = {x: w_of_x(x) for x in (1, 2, 3, 4)}
    checks = {f"w({x})": abs(w[x] - W_CLOSED_FORM[x]) <= 1e-9 for x in w}

    frac, cert = fractional_solution(inst)
    checks["fractional_feasible"] = cert["feasible"]
    checks["fractional_cost"] = abs(frac - 2.5 * h) <= 1e-12

    if len(inst.points) <= brute_limit:
        integral, _ = brute_kmeans(inst.as_instance(), max_n=brute_limit)
        mode = "enumeration"
    else:
        integral = _grouped_integral_opt(w, inst.n_pentagons, inst.k)
        mode = "grouped"
    checks["integral_opt"] = abs(integral - h * INTEGRAL_OPT_H1) <= 1e-9
    ratio = integral / frac
    checks["ratio"] = ratio >= GAP_RATIO - 1e-9

    fl_cost, fl_ok = facility_lp_solution(inst)
    checks["facility_lp_feasible"] = fl_ok
    checks["facility_lp_cost"] = abs(fl_cost - 2.5 * h) <= 1e-9

    report = GapReport(
        h=h, M=float(M), fractional_cost=frac, integral_opt=integral, ratio=ratio,
        w_table=w, w_closed_form=dict(W_CLOSED_FORM), integral_mode=mode,
        fractional_feasible=cert["feasible"], facility_lp_cost=fl_cost,
        facility_lp_feasible=fl_ok, checks=checks,
    )
    if with_lp:
        lp = cluster_lp(inst.points, inst.k, group_radius=M / 2)
        res = simplex_solve(lp)
        report.lp_value = res.value
        report.lp_ratio = integral / res.value if res.value > 0 else math.inf
        checks["lp_value"] = res.status == "optimal" and res.value <= 2.5 * h + 1e-7
        checks["lp_ratio"] = report.lp_ratio >= GAP_RATIO - 1e-9
    if not checks["ratio"]:
        raise VerificationError(f"gap ratio {ratio} below {GAP_RATIO}")
    return report


def gap_candidates(inst: PentagonInstance, *, full: bool = False, t: int = 3) -> CandidateSet:
    """Centroids of multisets of up to ``t`` vertices (within one pentagon unless ``full``)."""
    return gen_candidates(inst.points, t, groups=None if full else inst.groups)
