"""Primal-dual approximation for Euclidean k-Means and facility location.

The package implements the JV(delta) Lagrangian-multiplier-preserving
primal-dual algorithm, a Lagrangian search wrapper that turns it into a
k-Means solver, brute-force oracles, and the two-pentagon integrality-gap
construction for the standard k-Means LP.
"""

from kmeans_pd.errors import InputError, VerificationError
from kmeans_pd.geometry import (
    CandidateSet,
    Cluster,
    Instance,
    centroid,
    cluster_cost,
    gen_candidates,
    solution_cost,
    sq_dist,
)
from kmeans_pd.constants import delta_old_star, delta_star, rho_new, rho_old
from kmeans_pd.primal_dual import jv_delta, lmp_audit, run_dual_growth
from kmeans_pd.search import solve_kmeans_pd, lloyd, d2_seed, compare
from kmeans_pd.oracles import brute_fl, brute_kmeans, simplex_solve
from kmeans_pd.gap import make_pentagons, verify_gap

__version__ = "0.1.0"

__all__ = [
    "InputError",
    "VerificationError",
    "CandidateSet",
    "Cluster",
    "Instance",
    "centroid",
    "cluster_cost",
    "gen_candidates",
    "solution_cost",
    "sq_dist",
    "delta_old_star",
    "delta_star",
    "rho_new",
    "rho_old",
    "jv_delta",
    "lmp_audit",
    "run_dual_growth",
    "solve_kmeans_pd",
    "lloyd",
    "d2_seed",
    "compare",
    "brute_fl",
    "brute_kmeans",
    "simplex_solve",
    "make_pentagons",
    "verify_gap",
]
