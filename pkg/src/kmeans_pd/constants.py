"""Approximation-ratio constants for the JV(delta) analysis.

Two analyses are exposed. Both share the far-client bound
``(1 + sqrt(delta))**2``; they differ in how clients that contribute to
several surviving facilities are charged:

* old: ``1 / (delta/2 - 1)``
* new: ``(delta/4) / (delta/2 - 1)``

The ratio for a given ``delta`` is the larger of the two bounds, and the
best ``delta`` sits at their crossing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from kmeans_pd.errors import InputError, VerificationError

BISECT_TOL = 1e-14


@dataclass(frozen=True)
class RatioProfile:
    delta: float
    case_b_bound: float
    case_c_bound: float
    rho: float
    analysis: str


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not delta > 2.0 or math.isnan(delta):
        raise InputError(f"delta must exceed 2 (the multi-contributor bound diverges at 2), got {delta}")
    return delta


def case_c_bound(delta: float) -> float:
    return (1.0 + math.sqrt(delta)) ** 2


def case_b_old(delta: float) -> float:
    return 1.0 / (delta / 2.0 - 1.0)


def case_b_new(delta: float) -> float:
    return (delta / 4.0) / (delta / 2.0 - 1.0)


def rho_old(delta: float) -> RatioProfile:
    delta = _check_delta(delta)
    if math.isinf(delta):
        return RatioProfile(delta, 0.0, math.inf, math.inf, "old")
    b, c = case_b_old(delta), case_c_bound(delta)
    return RatioProfile(delta, b, c, max(b, c), "old")


def rho_new(delta: float) -> RatioProfile:
    delta = _check_delta(delta)
    if math.isinf(delta):
        return RatioProfile(delta, 0.5, math.inf, math.inf, "new")
    b, c = case_b_new(delta), case_c_bound(delta)
    return RatioProfile(delta, b, c, max(b, c), "new")


def bisect_root(f: Callable[[float], float], lo: float, hi: float, tol: float = BISECT_TOL) -> float:
    """Root of ``f`` on ``[lo, hi]`` by bisection; ``f(lo)`` and ``f(hi)`` must differ in sign."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise InputError(f"no sign change on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def delta_star_closed_form() -> float:
    # np.cbrt is the real (sign-aware) cube root
    s2 = math.sqrt(2.0)
    return 0.5 * (2.0 + float(np.cbrt(3.0 - 2.0 * s2)) + float(np.cbrt(3.0 + 2.0 * s2)))


def delta_star_bisect() -> float:
    return bisect_root(lambda d: case_b_new(d) - case_c_bound(d), 2.0 + 1e-12, 4.0)


@lru_cache(maxsize=None)
def delta_star() -> float:
    """Optimal delta for the refined analysis (closed form, cross-checked by bisection)."""
    closed = delta_star_closed_form()
    root = delta_star_bisect()
    if abs(closed - root) > 1e-12:
        raise VerificationError(f"closed form {closed!r} and bisection root {root!r} disagree")
    return closed


@lru_cache(maxsize=None)
def delta_old_star() -> float:
    """Optimal delta for the original analysis; no closed form is used."""
    return bisect_root(lambda d: case_b_old(d) - case_c_bound(d), 2.0 + 1e-12, 4.0)


def fixed_point_residual(delta: float, analysis: str = "new") -> float:
    b = case_b_new(delta) if analysis == "new" else case_b_old(delta)
    return abs(b - case_c_bound(delta))


DELTA_STAR_FORMULA = "(2 + cbrt(3 - 2*sqrt(2)) + cbrt(3 + 2*sqrt(2))) / 2"
RHO_NEW_FORMULA = "(1 + sqrt(" + DELTA_STAR_FORMULA + "))^2"
DELTA_OLD_FORMULA = "root of 1/(d/2 - 1) = (1 + sqrt(d))^2 on (2, 4)"
RHO_OLD_FORMULA = "(1 + sqrt(delta_old))^2"


def constants_table() -> list[dict]:
    """Rows for the ``constants`` report."""
    d_new = delta_star()
    d_old = delta_old_star()
    return [
        {"name": "delta_old", "value": d_old, "closed_form": DELTA_OLD_FORMULA,
         "residual": fixed_point_residual(d_old, "old")},
        {"name": "rho_old", "value": rho_old(d_old).rho, "closed_form": RHO_OLD_FORMULA,
         "residual": None},
        {"name": "delta_new", "value": d_new, "closed_form": DELTA_STAR_FORMULA,
         "residual": fixed_point_residual(d_new, "new")},
        {"name": "rho_new", "value": rho_new(d_new).rho, "closed_form": RHO_NEW_FORMULA,
         "residual": None},
        {"name": "delta_new_bisect_gap", "value": abs(d_new - delta_star_bisect()),
         "closed_form": "|closed form - bisection root|", "residual": None},
    ]
