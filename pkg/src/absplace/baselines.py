"""Reference placements: backhaul lower bound, exhaustive oracle, K-means."""

import itertools
from dataclasses import dataclass

import numpy as np

from . import lp
from .solver import InfeasibleError, PlacementSolution, lower_bound

__all__ = [
    "OracleResult", "OracleBudgetError", "lower_bound", "brute_force_min_abs",
    "kmeans_placement", "lloyd_kmeans",
]

MAX_ORACLE_POINTS = 20


class OracleBudgetError(ValueError):
    """Too many grid points for exhaustive subset enumeration."""


@dataclass
class OracleResult:
    min_count: int
    witness_columns: np.ndarray
    explored: int
    rates: np.ndarray = None


def brute_force_min_abs(problem, max_points=MAX_ORACLE_POINTS):
    """Smallest set of grid points admitting a feasible rate allocation.

    Subsets are tried by increasing size, starting at the backhaul lower
    bound, in lexicographic order within each size.
    """
    C, cbh, rmin = problem.capacity, problem.backhaul, problem.min_rate
    M, G = C.shape
    if G > max_points:
        raise OracleBudgetError(f"{G} grid points exceed the oracle budget of {max_points}")
    if rmin == 0:
        return OracleResult(0, np.array([], dtype=int), 0, np.zeros((M, 0)))
    start = lower_bound(M, rmin, cbh)
    explored = 0
    if start <= G:
        for k in range(max(start, 1), G + 1):
            for cols in itertools.combinations(range(G), k):
                explored += 1
                cols = np.array(cols)
                R = lp.feasible_allocation(C[:, cols], cbh[cols], rmin)
                if R is not None:
                    return OracleResult(k, cols, explored, R)
    raise InfeasibleError(f"no subset of the {G} grid points serves all GTs")


def _kmeans_pp(X, k, rng):
    centers = [X[rng.integers(len(X))]]
    for _ in range(1, k):
        d2 = np.min(((X[:, None, :] - np.asarray(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        idx = rng.choice(len(X), p=d2 / total) if total > 0 else rng.integers(len(X))
        centers.append(X[idx])
    return np.array(centers, dtype=float)


def lloyd_kmeans(X, k, rng, max_iters=100, n_init=3):
    """Lloyd iterations from k-means++ seeds; best of ``n_init`` by inertia.

    Returns ``(centers, labels)``. An emptied cluster is reseeded with the
    point farthest from its center among clusters holding two or more.
    Requires ``k <= len(X)``.
    """
    X = np.asarray(X, dtype=float)
    best = None
    for _ in range(n_init):
        centers = _kmeans_pp(X, k, rng)
        labels = None
        for _ in range(max_iters):
            d2 = ((X[:, None, :] - centers[None]) ** 2).sum(-1)
            new = d2.argmin(axis=1)
            dist = d2[np.arange(len(X)), new]
            for j in range(k):
                if not np.any(new == j):
                    # take the farthest point from a cluster that can spare one
                    donors = np.bincount(new, minlength=k)[new] > 1
                    far = int(np.argmax(np.where(donors, dist, -1.0)))
                    new[far] = j
                    dist[far] = -1.0
            if labels is not None and np.array_equal(new, labels):
                break
            labels = new
            centers = np.array([X[labels == j].mean(axis=0) for j in range(k)])
        inertia = ((X - centers[labels]) ** 2).sum()
        if best is None or inertia < best[0]:
            best = (inertia, centers, labels)
    return best[1], best[2]


def _project_distinct(centers, flight_grid):
    """Nearest grid point per center; a taken point yields the next nearest."""
    taken = set()
    out = []
    for c in centers:
        order = np.argsort(((flight_grid - c) ** 2).sum(axis=1), kind="stable")
        g = next(int(i) for i in order if int(i) not in taken)
        taken.add(g)
        out.append(g)
    return np.array(out)


def kmeans_placement(gts, flight_grid, capacity_fn, backhaul, min_rate, max_k=None, seed=0):
    """K-means baseline with single-ABS-per-GT assignment at ``min_rate``.

    ``capacity_fn`` is either an ``M x G`` capacity matrix over the flight
    grid or a callable ``(gts, flight_grid) -> matrix``.
    """
    gts = np.atleast_2d(np.asarray(gts, dtype=float))
    flight_grid = np.atleast_2d(np.asarray(flight_grid, dtype=float))
    C = capacity_fn(gts, flight_grid) if callable(capacity_fn) else np.asarray(capacity_fn, float)
    M, G = C.shape
    cbh = np.broadcast_to(np.asarray(backhaul, dtype=float), (G,))
    limit = min(M, G) if max_k is None else min(int(max_k), M, G)
    if max_k is not None and max_k < 1:
        raise ValueError("max_k must be at least 1")
    rng = np.random.default_rng(seed)
    first = max(1, lower_bound(M, min_rate, cbh)) if np.any(cbh > 0) or min_rate == 0 else np.inf
    k = first
    while k <= limit:
        centers, labels = lloyd_kmeans(gts, k, rng)
        cols = _project_distinct(centers, flight_grid)
        load = np.bincount(labels, minlength=k) * min_rate
        link_ok = np.all(C[np.arange(M), cols[labels]] >= min_rate)
        if link_ok and np.all(load <= cbh[cols]):
            order = np.argsort(cols)
            rates = np.zeros((M, k))
            rates[np.arange(M), np.argsort(order)[labels]] = min_rate
            return PlacementSolution(
                active_columns=cols[order], rates=rates, iterations=0,
                primal_residual=0.0, dual_residual=0.0, converged=True,
                feasible=True, positions=flight_grid[cols[order]])
        k += 1
    raise InfeasibleError(f"K-means found no feasible placement with k <= {limit}")
