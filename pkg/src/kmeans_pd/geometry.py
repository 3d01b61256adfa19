"""Points, squared-distance costs, cluster costs and candidate centers.

Points are handled as numpy arrays throughout: a single point is a 1-d
array of length ``dim`` and a point set is a ``(n, dim)`` array. Public
functions accept any array-like and validate shapes on entry.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from kmeans_pd.errors import InputError

DEDUPE_TOL = 1e-9
MAX_MULTISET_BOUND = 4
DEFAULT_MULTISET_BOUND = 3


def as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size == 0:
        raise InputError(f"a point must be a nonempty 1-d coordinate sequence, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("point coordinates must be finite")
    return arr


def as_points(points, *, allow_empty: bool = False) -> np.ndarray:
    """Coerce ``points`` to a finite ``(n, dim)`` float array.

    A flat sequence of scalars is read as ``n`` one-dimensional points.
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InputError(f"expected a sequence of points, got array of shape {arr.shape}")
    if arr.shape[0] == 0 and not allow_empty:
        raise InputError("point sequence must be nonempty")
    if arr.shape[0] and arr.shape[1] == 0:
        raise InputError("points must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise InputError("point coordinates must be finite")
    return arr


@dataclass(frozen=True)
class Instance:
    """A k-Means instance: demand points in R^dim and the number of centers."""

    demands: np.ndarray
    k: int

    def __post_init__(self):
        pts = as_points(self.demands)
        object.__setattr__(self, "demands", pts)
        if not isinstance(self.k, (int, np.integer)) or isinstance(self.k, bool):
            raise InputError(f"k must be an integer, got {self.k!r}")
        if not 1 <= self.k <= pts.shape[0]:
            raise InputError(f"need 1 <= k <= n, got k={self.k}, n={pts.shape[0]}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def n(self) -> int:
        return self.demands.shape[0]

    @property
    def dim(self) -> int:
        return self.demands.shape[1]


@dataclass(frozen=True)
class CandidateSet:
    """Discretized candidate centers.

    ``multisets[c]`` is the (sorted) tuple of demand indices whose centroid
    produced ``centers[c]``; the first generating multiset is kept when
    several coincide.
    """

    centers: np.ndarray
    t: int
    multisets: tuple[tuple[int, ...], ...] = field(default=())

    def __len__(self) -> int:
        return self.centers.shape[0]


@dataclass(frozen=True)
class Cluster:
    members: tuple[int, ...]
    centroid: np.ndarray
    cost: float


def sq_dist(p, q) -> float:
    """Squared Euclidean distance between two points."""
    a, b = as_point(p), as_point(q)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.size} vs {b.size}")
    diff = a - b
    return float(diff @ diff)


def sq_dist_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All pairwise squared distances, shape ``(len(a), len(b))``.

    Computed from coordinate differences rather than the expanded
    ``|a|^2 - 2ab + |b|^2`` form so coincident points give exactly 0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[1] != b.shape[1]:
        raise InputError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def centroid(points) -> np.ndarray:
    pts = as_points(points)
    return pts.mean(axis=0)


def cluster_cost(points) -> float:
    """Sum of squared distances of ``points`` to their centroid."""
    pts = as_points(points)
    diff = pts - pts.mean(axis=0)
    return float(np.einsum("ij,ij->", diff, diff))


def pairwise_cluster_cost(points) -> float:
    """The same cost via (1 / 2|C|) * sum over ordered pairs of squared distances."""
    pts = as_points(points)
    return float(sq_dist_matrix(pts, pts).sum() / (2 * pts.shape[0]))


def make_cluster(demands, members: Iterable[int]) -> Cluster:
    pts = as_points(demands)
    idx = tuple(sorted(int(m) for m in members))
    if not idx:
        raise InputError("cluster must have at least one member")
    sub = pts[list(idx)]
    return Cluster(members=idx, centroid=sub.mean(axis=0), cost=cluster_cost(sub))


def solution_cost(demands, centers) -> float:
    """Sum over demands of the squared distance to the nearest center."""
    pts = as_points(demands)
    ctr = as_points(centers, allow_empty=True)
    if ctr.shape[0] == 0:
        raise InputError("need at least one center")
    return float(sq_dist_matrix(pts, ctr).min(axis=1).sum())


def assign(demands, centers) -> np.ndarray:
    """Index of the nearest center for each demand (lowest index on ties)."""
    return sq_dist_matrix(as_points(demands), as_points(centers)).argmin(axis=1)


def dedupe_points(points: np.ndarray, tol: float = DEDUPE_TOL) -> np.ndarray:
    """Indices of points kept after dropping any point within ``tol`` of an earlier kept one."""
    if points.shape[0] == 0:
        return np.zeros(0, dtype=int)
    tree = cKDTree(points)
    kept = np.zeros(points.shape[0], dtype=bool)
    for i, nbrs in enumerate(tree.query_ball_point(points, r=tol)):
        if not any(kept[j] for j in nbrs if j < i):
            kept[i] = True
    return np.flatnonzero(kept)


def gen_candidates(
    demands,
    t: int = DEFAULT_MULTISET_BOUND,
    dedupe_tol: float = DEDUPE_TOL,
    *,
    max_t: int = MAX_MULTISET_BOUND,
    groups: Sequence[Sequence[int]] | None = None,
) -> CandidateSet:
    """Centroids of every multiset of at most ``t`` demands, deduplicated.

    Multisets are generated size by size, each size in lexicographic order
    of sorted index tuples, and the first occurrence of a location wins.
    If ``groups`` is given, only multisets drawn from within one group are
    used (groups are visited in the order given).
    """
    if isinstance(t, bool) or not isinstance(t, (int, np.integer)) or t < 1:
        raise InputError(f"multiset bound t must be a positive integer, got {t!r}")
    if t > max_t:
        raise InputError(f"multiset bound t={t} exceeds the configured cap {max_t}")
    pts = as_points(demands)
    if groups is None:
        groups = [range(pts.shape[0])]

    multisets: list[tuple[int, ...]] = []
    for size in range(1, t + 1):
        for group in groups:
            multisets.extend(itertools.combinations_with_replacement(sorted(group), size))
    centers = np.array([pts[list(ms)].mean(axis=0) for ms in multisets])
    keep = dedupe_points(centers, dedupe_tol)
    return CandidateSet(
        centers=centers[keep],
        t=int(t),
        multisets=tuple(multisets[i] for i in keep),
    )


def candidate_set_from_points(points) -> CandidateSet:
    """Wrap an explicit list of centers (e.g. read from a file) as a CandidateSet."""
    pts = as_points(points)
    return CandidateSet(centers=pts, t=0, multisets=())


def read_points(path) -> tuple[np.ndarray, int | None]:
    """Read the plain-text instance format; returns the points and header ``k``.

    First non-comment line is ``dim k`` (``k`` may be omitted for candidate
    files), then one point per line. ``#`` starts a comment.
    """
    text = Path(path).read_text()
    rows: list[list[str]] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows:
        raise InputError(f"{path}: empty instance file")
    header, body = rows[0], rows[1:]
    try:
        dim = int(header[0])
        k = int(header[1]) if len(header) > 1 else None
    except ValueError as exc:
        raise InputError(f"{path}: bad header {' '.join(header)!r}") from exc
    if len(header) > 2 or dim < 1:
        raise InputError(f"{path}: header must be 'dim k'")
    pts = []
    for lineno, row in enumerate(body, start=1):
        if len(row) != dim:
            raise InputError(f"{path}: point {lineno} has {len(row)} coordinates, expected {dim}")
        try:
            pts.append([float(v) for v in row])
        except ValueError as exc:
            raise InputError(f"{path}: non-numeric coordinate in {' '.join(row)!r}") from exc
    return as_points(np.array(pts, dtype=float).reshape(-1, dim)), k


def read_instance(path) -> Instance:
    pts, k = read_points(path)
    if k is None:
        raise InputError(f"{path}: header is missing k")
    return Instance(pts, k)


def format_instance(demands, k: int, comment: str | None = None) -> str:
    pts = as_points(demands)
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"{pts.shape[1]} {k}")
    lines.extend(" ".join(repr(float(v)) for v in row) for row in pts)
    return "\n".join(lines) + "\n"


def write_instance(path, demands, k: int, comment: str | None = None) -> None:
    Path(path).write_text(format_instance(demands, k, comment))


def random_instance(rng: np.random.Generator, n: int, dim: int, k: int = 1, *, style: str = "uniform") -> Instance:
    """Random test instance.

    ``style`` is one of ``uniform`` (unit cube), ``blobs`` (a few Gaussian
    clusters) or ``grid`` (small integer coordinates, many exact ties).
    """
    if style == "uniform":
        pts = rng.random((n, dim))
    elif style == "blobs":
        nb = max(1, min(n, int(rng.integers(1, 5))))
        means = rng.normal(scale=5.0, size=(nb, dim))
        pts = means[rng.integers(0, nb, size=n)] + rng.normal(scale=0.5, size=(n, dim))
    elif style == "grid":
        pts = rng.integers(0, 4, size=(n, dim)).astype(float)
    else:
        raise InputError(f"unknown instance style {style!r}")
    return Instance(pts, min(k, n))


def multiset_count(n: int, t: int) -> int:
    """Number of multisets of size 1..t drawn from n items (before dedupe)."""
    return sum(math.comb(n + s - 1, s) for s in range(1, t + 1))
