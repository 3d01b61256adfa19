"""Acceptance criteria 1-6, each printed as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` or ``python3 tests/test_acceptance.py``.
"""

import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import sweep_instances  # noqa: E402
from kmeans_pd.cli import main  # noqa: E402
from kmeans_pd.constants import delta_star, rho_new  # noqa: E402
from kmeans_pd.gap import INTEGRAL_OPT_H1, make_pentagons, verify_gap  # noqa: E402
from kmeans_pd.geometry import Instance, gen_candidates, random_instance  # noqa: E402
from kmeans_pd.oracles import brute_fl, brute_kmeans, cluster_lp, simplex_solve  # noqa: E402
from kmeans_pd.primal_dual import jv_delta  # noqa: E402
from kmeans_pd.search import solve_kmeans_pd  # noqa: E402

SQRT5 = math.sqrt(5)
TOL = 1e-7
SWEEP_SEED, SWEEP_COUNT, SWEEP_MAX_N = 20240601, 500, 40


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    with _capture_disabled():
        print("\n" + line)
    return line


_capsys_manager = None


def _capture_disabled():
    import contextlib
    if _capsys_manager is None:
        return contextlib.nullcontext()
    return _capsys_manager.global_and_fixture_disabled()


@pytest.fixture(autouse=True)
def _show_output(request):
    global _capsys_manager
    _capsys_manager = request.config.pluginmanager.getplugin("capturemanager")
    yield
    _capsys_manager = None


def sweep():
    return sweep_instances(SWEEP_SEED, SWEEP_COUNT, SWEEP_MAX_N, max_dim=3, max_t=2, lam_range=(-3, 3))


def criterion_1():
    t0 = time.perf_counter()
    import contextlib
    import io
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(["constants", "--json", "--no-meta"])
    elapsed = time.perf_counter() - t0
    rows = {r["name"]: r for r in json.loads(buf.getvalue())["constants"]}
    dn, rn = rows["delta_new"]["value"], rows["rho_new"]["value"]
    do, ro = rows["delta_old"]["value"], rows["rho_old"]["value"]
    residuals = [rows["delta_new"]["residual"], rows["delta_old"]["residual"]]
    ok = (code == 0 and 2.1776 <= dn <= 2.1778 and 6.128 < rn < 6.12903
          and 2.3145 <= do <= 2.3147 and 6.357 <= ro <= 6.358
          and max(residuals) <= 1e-10 and elapsed < 1.0)
    return ok, (f"delta_new={dn:.12f} rho_new={rn:.12f} delta_old={do:.12f} rho_old={ro:.12f} "
                f"max residual={max(residuals):.1e} time={elapsed:.3f}s")


def criterion_2():
    t0 = time.perf_counter()
    r = verify_gap(1)
    elapsed = time.perf_counter() - t0
    closed = {1: (5 + SQRT5) / 2, 2: (10 + SQRT5) / 6, 3: 1.0, 4: 0.5}
    w_ok = all(abs(r.w_table[x] - closed[x]) <= 1e-9 for x in closed)
    bound = (16 + SQRT5) / 15
    ok = (w_ok and abs(r.fractional_cost - 2.5) <= 1e-12 and abs(r.integral_opt - (16 + SQRT5) / 6) <= 1e-9
          and r.ratio >= bound - 1e-9 and r.ratio > 1.2157 and r.integral_mode == "enumeration"
          and elapsed < 10.0)
    return ok, (f"w ok={w_ok} fractional={r.fractional_cost:.15f} integral={r.integral_opt:.12f} "
                f"ratio={r.ratio:.10f} time={elapsed:.2f}s")


def criterion_3():
    t0 = time.perf_counter()
    rho = rho_new(delta_star()).rho
    violations = clients = 0
    for inst, t, lam in sweep():
        r = jv_delta(inst.demands, gen_candidates(inst.demands, t), lam, delta_star(), rho=rho)
        c, alpha, IS = r.state.cost, r.alpha, list(r.open_set)
        conn = c[:, IS].min(axis=1)
        for j in range(inst.n):
            rhs = alpha[j] - np.maximum(0.0, alpha[j] - c[j, IS]).sum()
            clients += 1
            if conn[j] / rho > rhs + TOL:
                violations += 1
        if conn.sum() > rho * (alpha.sum() - lam * len(IS)) + TOL:
            violations += 1
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60.0
    return ok, f"{SWEEP_COUNT} instances, {clients} clients, violations={violations} time={elapsed:.2f}s"


def criterion_4():
    t0 = time.perf_counter()
    violations = oracle_checks = 0
    for inst, t, lam in sweep():
        cands = gen_candidates(inst.demands, t)
        r = jv_delta(inst.demands, cands, lam, delta_star())
        st, alpha = r.state, r.alpha
        contrib = np.maximum(0.0, alpha[:, None] - st.cost).sum(axis=0)
        violations += int((contrib > lam + TOL).sum())
        for j, w in enumerate(st.witness):
            if alpha[j] < r.t_open[w] - TOL or alpha[j] < st.cost[j, w] - TOL:
                violations += 1
        if len(cands) <= 20:
            oracle_checks += 1
            if r.dual_objective > brute_fl(inst.demands, cands, lam) + TOL:
                violations += 1
    elapsed = time.perf_counter() - t0
    return violations == 0, (f"violations={violations}, brute_fl comparisons={oracle_checks} "
                             f"time={elapsed:.2f}s")


def criterion_5():
    t0 = time.perf_counter()
    rho = rho_new(delta_star()).rho
    rng = np.random.default_rng(515)
    worst, failures = 0.0, 0
    for i in range(100):
        n = int(rng.integers(1, 11))
        k = int(rng.integers(1, min(n, 4) + 1))
        inst = random_instance(rng, n, int(rng.integers(1, 4)), k, style=("uniform", "blobs", "grid")[i % 3])
        sol = solve_kmeans_pd(inst, gen_candidates(inst.demands, 2))
        opt, _ = brute_kmeans(inst)
        if len(sol.centers) > k or sol.cost > rho * opt + TOL:
            failures += 1
        if opt > 0:
            worst = max(worst, sol.cost / opt)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 120.0
    return ok, f"failures={failures}, max observed ratio={worst:.4f} (rho={rho:.6f}) time={elapsed:.2f}s"


def criterion_6():
    p = make_pentagons(1)
    res = simplex_solve(cluster_lp(p.points, p.k, group_radius=p.M / 2))
    cost, _ = brute_kmeans(Instance([[0.0], [1.0], [2.0], [3.0]], 2))
    ok = res.status == "optimal" and res.value <= 2.5 + TOL and abs(cost - 1.0) <= 1e-12
    return ok, (f"pentagon LP={res.value:.12f} (integral {INTEGRAL_OPT_H1:.6f}), "
                f"brute {{0,1,2,3}} k=2 -> {cost!r}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6]


@pytest.mark.parametrize("number", range(1, 7))
def test_acceptance_criterion(number):
    ok, detail = CRITERIA[number - 1]()
    report(number, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    results = [CRITERIA[i]() for i in range(6)]
    for i, (ok, detail) in enumerate(results, start=1):
        report(i, ok, detail)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
