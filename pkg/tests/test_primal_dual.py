import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmeans_pd.constants import delta_old_star, delta_star, rho_new, rho_old
from kmeans_pd.errors import InputError
from kmeans_pd.gap import gap_candidates
from kmeans_pd.geometry import gen_candidates
from kmeans_pd.oracles import brute_fl
from kmeans_pd.primal_dual import (
    ConflictGraph,
    DualState,
    build_conflict_graph,
    compute_event_times,
    is_independent,
    is_maximal_independent,
    jv_delta,
    lmp_audit,
    maximal_independent_set,
    opening_times,
    run_dual_growth,
)

from conftest import sweep_instances

TWO = np.array([[0.0], [2.0]])
MID = np.array([[1.0]])


def bisect_tight_time(state, i, lam):
    """Independent oracle: first clock where facility i's contribution reaches lam."""
    active = ~state.frozen

    def g(tau):
        a = np.where(active, tau, state.alpha)
        return np.maximum(0.0, a - state.cost[:, i]).sum() - lam

    lo, hi = state.clock, state.clock + 1.0
    while g(hi) < 0:
        hi = state.clock + 2 * (hi - state.clock)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if g(mid) < 0 else (lo, mid)
    return hi


# ----------------------------------------------------------------- growth


def test_growth_two_points_one_facility():
    st_ = run_dual_growth(TWO, MID, 2.0)
    np.testing.assert_allclose(st_.alpha, [2.0, 2.0])
    assert st_.tentatively_open == [0]
    assert opening_times(st_) == {0: 2.0}
    assert st_.witness.tolist() == [0, 0]


def test_growth_tiny_lambda():
    rng = np.random.default_rng(5)
    pts = rng.random((8, 2))
    cands = gen_candidates(pts, 2)
    st_ = run_dual_growth(pts, cands, 1e-12)
    nearest = st_.cost.min(axis=1)
    np.testing.assert_allclose(st_.alpha, nearest, atol=1e-9)
    assert st_.contributions().max() <= 1e-12 + 1e-15


def test_growth_single_colocated_client():
    st_ = run_dual_growth([[0.0, 0.0]], [[0.0, 0.0]], 1.0)
    assert st_.alpha.tolist() == [1.0]
    assert opening_times(st_) == {0: 1.0}


def test_growth_single_facility_closed_form():
    # one facility: every client ends at max(tau, c_j), tau solving sum max(0, tau - c_j) = lam
    rng = np.random.default_rng(6)
    for _ in range(50):
        pts = rng.random((int(rng.integers(1, 15)), 2))
        fac = rng.random((1, 2))
        lam = float(10 ** rng.uniform(-2, 1))
        st_ = run_dual_growth(pts, fac, lam)
        c = st_.cost[:, 0]
        lo, hi = 0.0, c.max() + lam
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if np.maximum(0, mid - c).sum() < lam else (lo, mid)
        np.testing.assert_allclose(st_.alpha, np.maximum(hi, c), atol=1e-9)


def test_growth_rejects_bad_input():
    with pytest.raises(InputError):
        run_dual_growth(TWO, MID, 0.0)
    with pytest.raises(InputError):
        run_dual_growth(TWO, np.zeros((0, 1)), 1.0)


# ----------------------------------------------------------------- events


def _state(alpha, frozen, cost, lam, tight=(), clock=0.0):
    cost = np.atleast_2d(np.asarray(cost, dtype=float))
    n, m = cost.shape
    st_ = DualState.initial(np.zeros((n, 1)), np.zeros((m, 1)), lam)
    st_.cost = cost
    st_.alpha = np.asarray(alpha, dtype=float)
    st_.frozen = np.asarray(frozen, dtype=bool)
    st_.clock = clock
    for i in tight:
        st_.tight[i] = True
        st_.tentatively_open.append(i)
    return st_


def test_event_linear_extrapolation():
    # one active client already 0.75 past the facility cost, lam = 1: gap 0.25 at rate 1
    st_ = _state([1.0], [False], [[0.25]], 1.0, clock=1.0)
    fac, cli = compute_event_times(st_)
    assert fac[0] - st_.clock == pytest.approx(0.25)
    assert cli[0] == math.inf


def test_event_frozen_contributors_never_tight():
    st_ = _state([1.0, 0.0], [True, False], [[0.5], [10.0]], 5.0, clock=1.0)
    st_.frozen[1] = True
    fac, _ = compute_event_times(st_)
    assert fac[0] == math.inf


def test_event_two_active_rate_two():
    # both active clients past cost: contribution 2 * 0.5 = 1, gap g = 0.6, rate 2
    st_ = _state([1.0, 1.0], [False, False], [[0.5], [0.5]], 1.6, clock=1.0)
    fac, _ = compute_event_times(st_)
    assert fac[0] - 1.0 == pytest.approx(0.3)


def test_event_times_match_bisection_oracle():
    rng = np.random.default_rng(8)
    for _ in range(30):
        n, m = int(rng.integers(2, 10)), int(rng.integers(1, 6))
        cost = rng.random((n, m)) * 3
        clock = float(rng.uniform(0, 1))
        frozen = rng.random(n) < 0.3
        alpha = np.where(frozen, rng.uniform(0, clock, n), clock)
        contrib = np.maximum(0, alpha[:, None] - cost).sum(axis=0)
        lam = float(contrib.max() + rng.uniform(0.1, 2))
        st_ = _state(alpha, frozen, cost, lam, clock=clock)
        fac, _ = compute_event_times(st_)
        for i in range(m):
            if np.isfinite(fac[i]):
                assert fac[i] == pytest.approx(bisect_tight_time(st_, i, lam), abs=1e-9)


def test_event_client_reaches_open_facility():
    st_ = _state([0.5, 0.5], [False, True], [[2.0], [0.1]], 10.0, tight=[0], clock=0.5)
    _, cli = compute_event_times(st_)
    assert cli[0] == pytest.approx(2.0)
    assert cli[1] == math.inf


# ----------------------------------------------------------------- opening times / graph


def test_opening_times_conventions():
    st_ = _state([1.0], [True], [[1.0]], 1.0, tight=[0], clock=1.0)
    assert opening_times(st_) == {0: 0.0}
    with pytest.raises(InputError):
        opening_times(run_dual_growth(TWO, [[1.0], [50.0]], 2.0), [1])


def test_conflict_graph_no_shared_contributor():
    st_ = run_dual_growth([[0.0], [100.0]], [[0.0], [100.0]], 1.0)
    assert st_.tentatively_open == [0, 1]
    g = build_conflict_graph(st_, delta_star())
    assert g.edges == set()


def test_conflict_graph_colocated():
    st_ = run_dual_growth([[0.0], [2.0]], [[1.0], [1.001]], 2.0)
    # the first facility to tighten freezes both clients; the near-copy never becomes tight
    assert st_.tentatively_open == [0]
    # force both open with a shared contributor to exercise the distance-zero edge
    st2 = _state([1.0, 1.0], [True, True], [[0.5, 0.5], [2.0, 2.0]], 0.5, tight=[0, 1], clock=1.0)
    st2.facilities = np.array([[3.0], [3.0]])
    g = build_conflict_graph(st2, delta_star())
    assert g.edges == {(0, 1)}


def test_conflict_graph_infinite_delta_is_classical():
    st_ = _state([1.0, 1.0], [True, True], [[0.5, 0.5], [2.0, 2.0]], 0.5, tight=[0, 1], clock=1.0)
    st_.facilities = np.array([[0.0], [1e6]])
    assert build_conflict_graph(st_, delta_star()).edges == set()
    assert build_conflict_graph(st_, math.inf).edges == {(0, 1)}
    with pytest.raises(InputError):
        build_conflict_graph(st_, 1.9)


def test_mis_shapes():
    t = {0: 1.0, 1: 2.0, 2: 3.0, 3: 0.5}
    assert maximal_independent_set(ConflictGraph([0, 1, 2], set()), t) == [0, 1, 2]
    complete = ConflictGraph([0, 1, 2, 3], {(a, b) for a in range(4) for b in range(a + 1, 4)})
    assert maximal_independent_set(complete, t) == [3]
    path = ConflictGraph([0, 1, 2], {(0, 1), (1, 2)})
    assert sorted(maximal_independent_set(path, t)) == [0, 2]
    tie = ConflictGraph([5, 2], {(2, 5)})
    assert maximal_independent_set(tie, {5: 1.0, 2: 1.0}) == [2]


# ----------------------------------------------------------------- full algorithm


def test_jv_delta_two_points():
    r = jv_delta(TWO, MID, 2.0, delta_star())
    assert r.open_set == [0]
    assert r.primal_cost == 2.0
    assert r.dual_objective == 2.0
    assert r.audit.global_ok


def test_jv_delta_single_client():
    r = jv_delta([[4.0, 4.0]], [[4.0, 4.0]], 3.0)
    assert r.primal_cost == 0.0
    assert r.dual_objective == 0.0


def test_jv_delta_pentagons_lmp(pentagons):
    cands = gap_candidates(pentagons)
    for lam in (0.3, 0.5, 0.75, 1.5, 3.0, 10.0):
        r = jv_delta(pentagons.points, cands, lam)
        assert r.audit.global_ok
        assert all(c.slack >= -1e-7 for c in r.audit.per_client)


def test_jv_delta_rejects_small_delta():
    with pytest.raises(InputError):
        jv_delta(TWO, MID, 1.0, 1.5)


def test_audit_case_a_slack():
    r = jv_delta(TWO, MID, 0.5)
    rho = rho_new(delta_star()).rho
    for c in r.audit.per_client:
        assert c.case == "A"
        assert c.slack == pytest.approx((1 - 1 / rho) * c.connection_cost, abs=1e-12)


def test_audit_case_c_checked():
    rng = np.random.default_rng(9)
    seen_c = 0
    for inst, t, lam in sweep_instances(91, 60, 25):
        r = jv_delta(inst.demands, gen_candidates(inst.demands, t), lam)
        for c in r.audit.per_client:
            if c.case == "C":
                seen_c += 1
                assert c.case_c_ok
    assert seen_c > 0


def test_audit_old_constants_pass():
    d, rho = delta_old_star(), rho_old(delta_old_star()).rho
    for inst, t, lam in sweep_instances(17, 60, 25):
        r = jv_delta(inst.demands, gen_candidates(inst.demands, t), lam, d)
        assert lmp_audit(r, r.state, rho).global_ok


def test_audit_reports_instead_of_raising():
    r = jv_delta(TWO, MID, 2.0)
    audit = lmp_audit(r, r.state, 0.1)  # far too small a ratio for case A clients
    assert not audit.global_ok
    assert audit.violations()


# ----------------------------------------------------------------- invariants


def _check_invariants(r, lam, delta):
    st_ = r.state
    contrib = st_.contributions()
    assert contrib.max() <= lam + 1e-7
    np.testing.assert_allclose(contrib[st_.tentatively_open], lam, atol=1e-7)
    assert st_.frozen.all()
    t = r.t_open
    for j, w in enumerate(st_.witness):
        assert w in t
        assert st_.alpha[j] >= t[w] - 1e-9
        assert st_.alpha[j] >= st_.cost[j, w] - 1e-9
    assert set(r.open_set) <= set(st_.tentatively_open)
    assert is_maximal_independent(r.graph, r.open_set)
    strict = st_.strict_contributors()
    for a in r.open_set:
        for b in r.open_set:
            if a < b and (strict[:, a] & strict[:, b]).any():
                dab = float(((st_.facilities[a] - st_.facilities[b]) ** 2).sum())
                assert dab > delta * min(t[a], t[b]) - 1e-9


def test_invariants_random_sweep():
    d = delta_star()
    for inst, t, lam in sweep_instances(2024, 150, 30):
        r = jv_delta(inst.demands, gen_candidates(inst.demands, t), lam, d)
        _check_invariants(r, lam, d)
        assert r.audit.global_ok


@settings(max_examples=40, deadline=None)
@given(
    pts=st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=1, max_size=10),
    lam=st.floats(1e-3, 1e3),
)
def test_invariants_hypothesis_grid(pts, lam):
    demands = np.array(pts, dtype=float)
    r = jv_delta(demands, gen_candidates(demands, 2), lam)
    _check_invariants(r, lam, r.delta)
    assert r.audit.global_ok


def test_weak_duality_against_brute_fl():
    for inst, t, lam in sweep_instances(33, 80, 6):
        cands = gen_candidates(inst.demands, t)
        if len(cands) > 20:
            continue
        r = jv_delta(inst.demands, cands, lam)
        opt = brute_fl(inst.demands, cands, lam)
        assert float(r.alpha.sum()) <= opt + 1e-7
        assert r.dual_objective <= opt + 1e-7


def test_lambda_trend_reported(capsys):
    rng = np.random.default_rng(10)
    pts = rng.random((20, 2))
    cands = gen_candidates(pts, 2)
    sizes = [len(jv_delta(pts, cands, lam).open_set) for lam in np.geomspace(1e-3, 10, 25)]
    rises = sum(b > a for a, b in zip(sizes, sizes[1:]))
    print(f"|IS| over lambda grid: {sizes} (increases: {rises})")
    assert sizes[0] >= sizes[-1]


def test_determinism_json():
    rng = np.random.default_rng(12)
    pts = rng.random((15, 2))
    cands = gen_candidates(pts, 2)
    a = json.dumps(jv_delta(pts, cands, 0.2).to_dict())
    b = json.dumps(jv_delta(pts, cands, 0.2).to_dict())
    assert a == b
    keys = set(json.loads(a))
    assert {"lambda", "delta", "open", "alpha", "witnesses", "t_open", "primal_cost",
            "dual_objective", "audit"} <= keys
    assert {"per_client", "global_ok", "rho"} <= set(json.loads(a)["audit"])
