"""JV(delta): Lagrangian-multiplier-preserving primal-dual facility location.

The algorithm runs in two phases on a uniform-opening-cost facility
location instance (opening cost ``lam``, connection cost = squared
Euclidean distance):

1. Dual growth. All client duals ``alpha_j`` start at 0 and grow at unit
   rate while the client is active. A facility becomes tentatively open
   once ``sum_j max(0, alpha_j - c(j, i))`` reaches ``lam``; any client
   already paying for it freezes. An active client also freezes when its
   dual reaches the connection cost of an open facility. The facility that
   freezes a client is its witness.
2. Pruning. Tentatively open facilities sharing a strictly contributing
   client and lying within squared distance ``delta * min(t_i, t_i')`` of
   each other conflict; a maximal independent set of the conflict graph is
   opened.

Contributions are piecewise linear in the clock, so the growth phase is
simulated event by event with closed-form next-event times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from kmeans_pd.constants import case_b_new, case_c_bound, delta_star, rho_new
from kmeans_pd.errors import InputError
from kmeans_pd.geometry import CandidateSet, as_points, sq_dist_matrix

# client j strictly contributes to facility i iff alpha_j - c(j, i) > CONTRIB_EPS
CONTRIB_EPS = 1e-12
# relative window for treating event times as simultaneous
EVENT_TOL = 1e-12
AUDIT_TOL = 1e-7


@dataclass
class DualState:
    """Mutable state of the dual-growth phase.

    ``witness[j]`` is -1 until client ``j`` freezes. ``open_time[i]`` is the
    clock value at which facility ``i`` became tight (``inf`` if never);
    it is distinct from the opening time ``t_i`` used for pruning, which is
    derived from the final duals by :func:`opening_times`.
    """

    cost: np.ndarray
    facilities: np.ndarray
    lam: float
    alpha: np.ndarray
    frozen: np.ndarray
    witness: np.ndarray
    tight: np.ndarray
    open_time: np.ndarray
    tentatively_open: list[int] = field(default_factory=list)
    clock: float = 0.0
    events: int = 0

    @classmethod
    def initial(cls, demands, facilities, lam: float) -> "DualState":
        d = as_points(demands)
        f = as_points(facilities)
        cost = sq_dist_matrix(d, f)
        n, m = cost.shape
        return cls(
            cost=cost,
            facilities=f,
            lam=float(lam),
            alpha=np.zeros(n),
            frozen=np.zeros(n, dtype=bool),
            witness=np.full(n, -1, dtype=int),
            tight=np.zeros(m, dtype=bool),
            open_time=np.full(m, math.inf),
        )

    @property
    def n_clients(self) -> int:
        return self.cost.shape[0]

    @property
    def n_facilities(self) -> int:
        return self.cost.shape[1]

    def contributions(self) -> np.ndarray:
        """Current left-hand side of the dual constraint for every facility."""
        return np.maximum(0.0, self.alpha[:, None] - self.cost).sum(axis=0)

    def strict_contributors(self) -> np.ndarray:
        """Boolean ``(n, m)`` matrix: ``alpha_j - c(j, i) > CONTRIB_EPS``."""
        return (self.alpha[:, None] - self.cost) > CONTRIB_EPS


@dataclass
class ConflictGraph:
    nodes: list[int]
    edges: set[tuple[int, int]]

    def neighbors(self, i: int) -> set[int]:
        return {b if a == i else a for a, b in self.edges if i in (a, b)}

    def adjacency(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {i: set() for i in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj


@dataclass
class ClientAudit:
    client: int
    s: int
    case: str
    connection_cost: float
    rhs: float
    slack: float
    ok: bool
    case_b_spread_ok: bool | None = None
    case_b_ratio: float | None = None
    case_b_ratio_ok: bool | None = None
    case_c_ok: bool | None = None

    def to_dict(self) -> dict:
        return {
            "client": self.client,
            "s": self.s,
            "case": self.case,
            "connection_cost": self.connection_cost,
            "rhs": self.rhs,
            "slack": self.slack,
            "ok": self.ok,
            "case_b_spread_ok": self.case_b_spread_ok,
            "case_b_ratio": self.case_b_ratio,
            "case_b_ratio_ok": self.case_b_ratio_ok,
            "case_c_ok": self.case_c_ok,
        }


@dataclass
class LMPAudit:
    per_client: list[ClientAudit]
    rho: float
    primal_cost: float
    dual_objective: float
    global_slack: float
    global_inequality_ok: bool

    @property
    def clients_ok(self) -> bool:
        return all(c.ok for c in self.per_client)

    @property
    def global_ok(self) -> bool:
        return self.global_inequality_ok and self.clients_ok

    def violations(self) -> list[ClientAudit]:
        return [c for c in self.per_client if not c.ok]

    def to_dict(self) -> dict:
        return {
            "per_client": [c.to_dict() for c in self.per_client],
            "global_ok": self.global_ok,
            "global_slack": self.global_slack,
            "rho": _json_float(self.rho),
        }


@dataclass
class FLResult:
    open_set: list[int]
    assignment: np.ndarray
    primal_cost: float
    dual_objective: float
    lam: float
    delta: float
    state: DualState
    graph: ConflictGraph
    t_open: dict[int, float]
    audit: LMPAudit

    @property
    def alpha(self) -> np.ndarray:
        return self.state.alpha

    def to_dict(self) -> dict:
        st = self.state
        return {
            "lambda": self.lam,
            "delta": _json_float(self.delta),
            "open": [int(i) for i in self.open_set],
            "assignment": [int(i) for i in self.assignment],
            "alpha": [float(a) for a in st.alpha],
            "witnesses": [int(w) for w in st.witness],
            "tentatively_open": [int(i) for i in st.tentatively_open],
            "t_open": [float(self.t_open[i]) for i in st.tentatively_open],
            "conflict_edges": [list(e) for e in sorted(self.graph.edges)],
            "primal_cost": self.primal_cost,
            "dual_objective": self.dual_objective,
            "audit": self.audit.to_dict(),
        }


def _json_float(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def compute_event_times(state: DualState, lam: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Clock times of the next possible event for every facility and client.

    Returns ``(facility_times, client_times)``. A facility time is the
    earliest clock at which a not-yet-tight facility reaches ``lam`` given
    the current active/frozen split (``inf`` for tight facilities or when
    nothing active can reach it). A client time is the earliest clock at
    which an active client reaches the cost of an open facility (``inf``
    for frozen clients or when nothing is open).
    """
    lam = state.lam if lam is None else float(lam)
    n, m = state.cost.shape
    active = ~state.frozen
    fac_times = np.full(m, math.inf)
    cli_times = np.full(n, math.inf)

    untight = np.flatnonzero(~state.tight)
    if untight.size:
        fz = state.frozen
        fixed = np.maximum(0.0, state.alpha[fz, None] - state.cost[np.ix_(fz, untight)]).sum(axis=0)
        remaining = lam - fixed
        if active.any():
            # g(tau) = fixed + sum_j max(0, tau - c_j) is convex and increasing;
            # every prefix T of the sorted costs gives a lower bound
            # fixed + |T| tau - sum_T c_j, so the root is the minimum over
            # prefixes of the corresponding linear roots.
            cs = np.sort(state.cost[np.ix_(active, untight)], axis=0)
            prefix = np.cumsum(cs, axis=0)
            counts = np.arange(1, cs.shape[0] + 1)[:, None]
            roots = ((remaining[None, :] + prefix) / counts).min(axis=0)
            fac_times[untight] = np.maximum(roots, state.clock)
        already = remaining <= EVENT_TOL * max(1.0, lam)
        fac_times[untight[already]] = state.clock

    if state.tight.any() and active.any():
        nearest_open = state.cost[np.ix_(active, state.tight)].min(axis=1)
        cli_times[active] = np.maximum(nearest_open, state.clock)
    return fac_times, cli_times


def _freeze(state: DualState, clients: np.ndarray, facility: int) -> None:
    state.frozen[clients] = True
    state.witness[clients] = facility


def run_dual_growth(demands, candidates, lam: float) -> DualState:
    """Dual-growth phase; returns the final state with every client frozen.

    Simultaneous events are resolved facility openings first (ascending
    index), then client freezes. A client frozen by several facilities at
    once takes the smallest index as its witness.
    """
    lam = float(lam)
    if not lam > 0 or not math.isfinite(lam):
        raise InputError(f"lambda must be a positive finite number, got {lam}")
    centers = candidates.centers if isinstance(candidates, CandidateSet) else candidates
    centers = as_points(centers, allow_empty=True)
    if centers.shape[0] == 0:
        raise InputError("candidate set is empty")
    state = DualState.initial(demands, centers, lam)

    while not state.frozen.all():
        fac_t, cli_t = compute_event_times(state)
        t_next = min(fac_t.min(), cli_t.min())
        if not math.isfinite(t_next):
            raise RuntimeError("dual growth stalled: no reachable event")
        tol = EVENT_TOL * max(1.0, abs(t_next))
        state.clock = max(state.clock, float(t_next))
        state.alpha[~state.frozen] = state.clock
        state.events += 1

        for i in np.flatnonzero(fac_t <= t_next + tol):
            state.tight[i] = True
            state.open_time[i] = state.clock
            state.tentatively_open.append(int(i))
            active = ~state.frozen
            paying = active & (state.alpha >= state.cost[:, i] - tol)
            _freeze(state, np.flatnonzero(paying), int(i))

        active_idx = np.flatnonzero(~state.frozen)
        if active_idx.size and state.tight.any():
            open_idx = np.flatnonzero(state.tight)
            reached = state.cost[np.ix_(active_idx, open_idx)] <= state.clock + tol
            hit = reached.any(axis=1)
            for row in np.flatnonzero(hit):
                # argmax on a boolean row gives the first (lowest-index) open facility reached
                _freeze(state, np.array([active_idx[row]]), int(open_idx[reached[row].argmax()]))
    return state


def opening_times(state: DualState, facilities=None) -> dict[int, float]:
    """``t_i`` = max dual over strict contributors of ``i`` (0 if there are none)."""
    if facilities is None:
        facilities = state.tentatively_open
    tentatively = set(state.tentatively_open)
    contrib = state.strict_contributors()
    out: dict[int, float] = {}
    for i in facilities:
        if i not in tentatively:
            raise InputError(f"facility {i} is not tentatively open")
        col = contrib[:, i]
        out[int(i)] = float(state.alpha[col].max()) if col.any() else 0.0
    return out


def build_conflict_graph(state: DualState, delta: float, t_open: dict[int, float] | None = None) -> ConflictGraph:
    """Conflict graph on tentatively open facilities.

    ``delta = inf`` drops the distance condition, giving the classical
    JV pruning graph.
    """
    delta = float(delta)
    if math.isnan(delta) or delta < 2.0:
        raise InputError(f"delta must be >= 2, got {delta}")
    if t_open is None:
        t_open = opening_times(state)
    nodes = list(state.tentatively_open)
    edges: set[tuple[int, int]] = set()
    if len(nodes) < 2:
        return ConflictGraph(nodes, edges)
    idx = np.array(nodes)
    contrib = state.strict_contributors()[:, idx].astype(np.int64)
    shared = (contrib.T @ contrib) > 0
    fac_d = sq_dist_matrix(state.facilities[idx], state.facilities[idx])
    t = np.array([t_open[i] for i in nodes])
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            if not shared[a, b]:
                continue
            if math.isinf(delta) or fac_d[a, b] <= delta * min(t[a], t[b]):
                i, j = nodes[a], nodes[b]
                edges.add((min(i, j), max(i, j)))
    return ConflictGraph(nodes, edges)


def maximal_independent_set(graph: ConflictGraph, t_open: dict[int, float]) -> list[int]:
    """Greedy maximal independent set scanning nodes by ascending ``(t_i, i)``."""
    adj = graph.adjacency()
    chosen: list[int] = []
    blocked: set[int] = set()
    for i in sorted(graph.nodes, key=lambda v: (t_open[v], v)):
        if i in blocked:
            continue
        chosen.append(i)
        blocked.add(i)
        blocked |= adj[i]
    return chosen


def is_independent(graph: ConflictGraph, nodes) -> bool:
    s = set(nodes)
    return not any(a in s and b in s for a, b in graph.edges)


def is_maximal_independent(graph: ConflictGraph, nodes) -> bool:
    s = set(nodes)
    if not is_independent(graph, s) or not s <= set(graph.nodes):
        return False
    adj = graph.adjacency()
    return all(adj[v] & s for v in graph.nodes if v not in s)


def default_rho(delta: float) -> float:
    if 2.0 < delta < math.inf:
        return rho_new(delta).rho
    return math.inf


def lmp_audit(result: FLResult, state: DualState | None = None, rho: float | None = None,
              tol: float = AUDIT_TOL) -> LMPAudit:
    """Check the per-client and global LMP inequalities for a finished run.

    For each client ``j`` with ``S = N(j) & IS`` and ``s = |S|``:
    ``c(j, IS) / rho <= alpha_j - sum_{i in IS} max(0, alpha_j - c(j, i))``.
    Clients with ``s > 1`` are also checked against the squared-distance
    spread bound and the refined ratio bound; clients with ``s = 0``
    against ``c(j, IS) <= (1 + sqrt(delta))^2 alpha_j``. Violations are
    reported, never raised.
    """
    state = result.state if state is None else state
    rho = default_rho(result.delta) if rho is None else float(rho)
    return _audit(state, result.open_set, result.lam, result.delta, rho, tol)


def _audit(state: DualState, open_set: list[int], lam: float, delta: float, rho: float, tol: float) -> LMPAudit:
    idx = np.array(open_set, dtype=int)
    cost = state.cost[:, idx]
    alpha = state.alpha
    conn = cost.min(axis=1)
    surplus = alpha[:, None] - cost
    paid = np.maximum(0.0, surplus).sum(axis=1)
    strict = surplus > CONTRIB_EPS
    inv_rho = 0.0 if math.isinf(rho) else 1.0 / rho
    finite_delta = math.isfinite(delta)
    bound_b = case_b_new(delta) if finite_delta and delta > 2.0 else None
    bound_c = case_c_bound(delta) if finite_delta else math.inf

    per_client = []
    for j in range(state.n_clients):
        a = float(alpha[j])
        s = int(strict[j].sum())
        rhs = a - float(paid[j])
        slack = rhs - float(conn[j]) * inv_rho
        rec = ClientAudit(
            client=j,
            s=s,
            case="A" if s == 1 else ("B" if s > 1 else "C"),
            connection_cost=float(conn[j]),
            rhs=rhs,
            slack=slack,
            ok=slack >= -tol,
        )
        if s > 1:
            spread = float(cost[j, strict[j]].sum())
            if finite_delta:
                rec.case_b_spread_ok = spread >= (s - 1) * delta * a / 2.0 - tol
            denom = spread - (s - 1) * a
            if denom > 0:
                rec.case_b_ratio = spread / (s * denom)
                if bound_b is not None:
                    rec.case_b_ratio_ok = rec.case_b_ratio <= bound_b + tol
        elif s == 0:
            rec.case_c_ok = float(conn[j]) <= bound_c * a + tol
        per_client.append(rec)

    primal = float(conn.sum())
    dual = float(alpha.sum() - lam * len(open_set))
    if math.isinf(rho):
        global_slack = math.inf
    else:
        global_slack = rho * dual - primal
    return LMPAudit(
        per_client=per_client,
        rho=rho,
        primal_cost=primal,
        dual_objective=dual,
        global_slack=global_slack,
        global_inequality_ok=global_slack >= -tol,
    )


def jv_delta(demands, candidates, lam: float, delta: float | None = None, *,
             rho: float | None = None) -> FLResult:
    """Run JV(delta) and return the opened facilities with duals and audit.

    ``delta`` defaults to the refined optimum (about 2.1777); the audit
    uses ``rho`` or, by default, the refined ratio for ``delta``.
    """
    delta = delta_star() if delta is None else float(delta)
    if math.isnan(delta) or delta < 2.0:
        raise InputError(f"delta must be >= 2, got {delta}")
    state = run_dual_growth(demands, candidates, lam)
    t_open = opening_times(state)
    graph = build_conflict_graph(state, delta, t_open)
    open_set = sorted(maximal_independent_set(graph, t_open))
    sub = state.cost[:, open_set]
    assignment = np.array(open_set)[sub.argmin(axis=1)]
    rho = default_rho(delta) if rho is None else float(rho)
    audit = _audit(state, open_set, state.lam, delta, rho, AUDIT_TOL)
    return FLResult(
        open_set=open_set,
        assignment=assignment,
        primal_cost=audit.primal_cost,
        dual_objective=audit.dual_objective,
        lam=state.lam,
        delta=delta,
        state=state,
        graph=graph,
        t_open=t_open,
        audit=audit,
    )
