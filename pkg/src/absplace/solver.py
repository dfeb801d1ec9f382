"""Group-sparse ABS placement via ADMM (GSPA).

The relaxed placement problem

    minimize   sum_g w_g ||r_g||_inf
    subject to R^T 1 <= c_bh,  R 1 = r_min 1,  0 <= R <= C

is split into a column-separable X-step (rates and per-column slacks under
the backhaul limit) and a row-separable Z-step (projection of every GT row
onto the capped simplex ``{1^T z = r_min, 0 <= z <= c}``). Every scalar
equation along the way is monotone and is solved by bisection on a bracket
known to contain the root. All G columns (resp. M rows) are bisected
simultaneously, so no step mixes information across columns (resp. rows).
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)


class InfeasibleError(ValueError):
    """No placement can serve every GT at the minimum rate."""

    def __init__(self, message, gt=None):
        self.gt = gt
        super().__init__(message)


class BracketError(ArithmeticError):
    def __init__(self, f_lo, f_hi, target):
        self.f_lo, self.f_hi, self.target = f_lo, f_hi, target
        super().__init__(
            f"target {target!r} not bracketed: f(lo)={f_lo!r}, f(hi)={f_hi!r}")


@dataclass
class PlacementProblem:
    capacity: np.ndarray
    backhaul: np.ndarray
    min_rate: float
    weights: np.ndarray = None

    def __post_init__(self):
        self.capacity = np.atleast_2d(np.asarray(self.capacity, dtype=float))
        M, G = self.capacity.shape
        self.backhaul = np.broadcast_to(
            np.asarray(self.backhaul, dtype=float), (G,)).copy()
        self.weights = (np.ones(G) if self.weights is None else np.broadcast_to(
            np.asarray(self.weights, dtype=float), (G,)).copy())
        self.min_rate = float(self.min_rate)
        for name in ("capacity", "backhaul", "weights"):
            a = getattr(self, name)
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError(f"{name} entries must be finite and non-negative")
        if not (math.isfinite(self.min_rate) and self.min_rate >= 0):
            raise ValueError("min_rate must be finite and non-negative")

    @property
    def shape(self):
        return self.capacity.shape

    def with_weights(self, weights):
        return replace(self, weights=np.asarray(weights, dtype=float))


# rho * min_rate when no explicit rho is given; 1e-7 at 20 Mbps
RHO_RATE_PRODUCT = 2.0


@dataclass
class AdmmConfig:
    rho: float = None  # None -> RHO_RATE_PRODUCT / min_rate
    eps_abs: float = 1e-4
    eps_rel: float = 1e-4
    max_iters: int = 5000
    bisection_tol: float = 1e-12
    reweight_rounds: int = 3
    reweight_epsilon: float = None  # None -> 1e-3 * min_rate
    activation_threshold: float = 1e-3
    prune: bool = True
    init: str = "capacity"

    def step_size(self, min_rate):
        """The ADMM step size; scale-free default tied to ``min_rate``."""
        if self.rho is not None:
            return self.rho
        return RHO_RATE_PRODUCT / min_rate if min_rate > 0 else 1.0

    def __post_init__(self):
        for name in ("eps_abs", "eps_rel", "bisection_tol", "activation_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.max_iters < 1 or self.reweight_rounds < 1:
            raise ValueError("max_iters and reweight_rounds must be at least 1")


@dataclass
class AdmmState:
    R: np.ndarray
    Z: np.ndarray
    U: np.ndarray
    s: np.ndarray
    iter: int = 0

    def copy(self):
        return AdmmState(self.R.copy(), self.Z.copy(), self.U.copy(), self.s.copy(), self.iter)


@dataclass
class Residuals:
    primal: float
    dual: float
    eps_pri: float
    eps_dual: float


@dataclass
class PlacementSolution:
    active_columns: np.ndarray
    rates: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    feasible: bool = False
    positions: np.ndarray = None
    relaxed_rates: np.ndarray = field(default=None, repr=False)

    @property
    def num_abs(self):
        return len(self.active_columns)


# ---------------------------------------------------------------- bisection

def bisect_root(f, lo, hi, target=0.0, tol=1e-12, slack=1e-9):
    """Root of ``f(s) = target`` for ``f`` non-increasing on ``[lo, hi]``.

    Works elementwise when ``lo``, ``hi`` and ``target`` are arrays and ``f``
    is vectorized. The bracket shrinks until it is no wider than
    ``tol * max(1, hi - lo)`` and its midpoint is returned. Each round halves
    the bracket and also probes a tolerance-wide window around the secant
    point, which closes the bracket at once when ``f`` is linear inside it
    (the common case for the piecewise-linear functions used here). ``slack``
    is the relative amount by which the endpoint values may miss the target
    (for round-off only); anything beyond raises :class:`BracketError`.
    """
    scalar = np.ndim(lo) == 0 and np.ndim(hi) == 0 and np.ndim(target) == 0
    lo, hi, target = np.broadcast_arrays(
        np.asarray(lo, dtype=float), np.asarray(hi, dtype=float),
        np.asarray(target, dtype=float))
    shape = lo.shape
    lo, hi, target = lo.astype(float).ravel(), hi.astype(float).ravel(), target.ravel()
    if np.any(hi < lo):
        raise ValueError("bracket has hi < lo")
    f_lo, f_hi = np.asarray(f(lo), float), np.asarray(f(hi), float)
    room = slack * np.maximum(1.0, np.abs(target))
    bad = (f_lo < target - room) | (f_hi > target + room)
    if np.any(bad):
        i = np.flatnonzero(bad)[0]
        raise BracketError(f_lo[i], f_hi[i], target[i])
    goal = tol * np.maximum(1.0, hi - lo)
    while True:
        mid = 0.5 * (lo + hi)
        # stop once the bracket is narrow enough or no float lies strictly inside
        open_ = (hi - lo > goal) & (mid > lo) & (mid < hi)
        if not np.any(open_):
            break
        drop = f_lo - f_hi
        frac = np.divide(f_lo - target, drop, out=np.full_like(drop, 0.5), where=drop > 0)
        x = lo + np.clip(frac, 0.0, 1.0) * (hi - lo)
        a = np.maximum(x - 0.25 * goal, lo)
        b = np.minimum(x + 0.25 * goal, hi)
        probes = np.sort(np.stack([a, mid, b]), axis=0)
        for p in probes:
            fp = np.asarray(f(p), float)
            up = open_ & (fp >= target) & (p > lo)
            down = open_ & (fp < target) & (p < hi)
            lo, f_lo = np.where(up, p, lo), np.where(up, fp, f_lo)
            hi, f_hi = np.where(down, p, hi), np.where(down, fp, f_hi)
    root = 0.5 * (lo + hi)
    return float(root[0]) if scalar else root.reshape(shape)


# ---------------------------------------------------------------- subproblems

def solve_x(Z, U, weights, backhaul, rho, tol=1e-12):
    """X-step for all columns at once; returns ``(R, s)``.

    Each column minimizes ``w s + rho/2 ||r - (z - u)||^2`` subject to
    ``r <= s 1`` and ``1^T r <= c_bh``.
    """
    A = np.asarray(Z, float) - np.asarray(U, float)
    M, G = A.shape
    w = np.broadcast_to(np.asarray(weights, float), (G,))
    cbh = np.broadcast_to(np.asarray(backhaul, float), (G,))

    def excess(shift):
        def f(s):
            return np.maximum(A - shift - s, 0.0).sum(axis=0)
        return f

    off = w / (M * rho)
    s = bisect_root(excess(0.0), A.min(axis=0) - off, A.max(axis=0) - off,
                    target=w / rho, tol=tol)
    R = np.minimum(A, s)

    total = R.sum(axis=0)
    hit = total > cbh + 1e-12 * np.maximum(np.abs(cbh), np.abs(total))
    if np.any(hit):
        Ah = A[:, hit]
        wh, ch = w[hit], cbh[hit]
        mu = (-rho * ch + rho * Ah.sum(axis=0) - wh) / M

        def f_eq(s_):
            return np.maximum(mu, rho * (Ah - s_)).sum(axis=0)

        shift = mu / rho
        lo = Ah.min(axis=0) - wh / (M * rho) - shift
        hi = Ah.max(axis=0) - wh / (M * rho) - shift
        s_h = bisect_root(f_eq, lo, hi, target=wh + mu * M, tol=tol)
        s = s.copy()
        s[hit] = s_h
        R[:, hit] = np.minimum(Ah - shift, s_h)
    return R, s


def solve_x_column(z_col, u_col, w_g, cbh_g, rho, tol=1e-12):
    """Single-column X-step; returns ``(r_col, s_g)``."""
    z = np.asarray(z_col, float).reshape(-1, 1)
    u = np.asarray(u_col, float).reshape(-1, 1)
    R, s = solve_x(z, u, [w_g], [cbh_g], rho, tol)
    return R[:, 0], float(s[0])


def solve_z(R, U, capacity, min_rate, tol=1e-12):
    """Z-step: project each row of ``R + U`` onto the capped simplex."""
    B = np.asarray(R, float) + np.asarray(U, float)
    C = np.asarray(capacity, float)
    M, G = B.shape
    short = np.flatnonzero(C.sum(axis=1) < min_rate)
    if len(short):
        m = int(short[0])
        raise InfeasibleError(
            f"GT {m} cannot reach rate {min_rate:g}: total capacity {C[m].sum():g}", gt=m)

    lo = (B - C).min(axis=1)
    big = C > min_rate / G
    hi = np.where(big, B, -np.inf).max(axis=1) - min_rate / G
    # without any entry above r_min/G, the capacities sum to exactly r_min
    hi = np.where(big.any(axis=1), np.maximum(hi, lo), lo)

    def f(lam):
        return np.maximum(0.0, np.minimum(C, B - lam[:, None])).sum(axis=1)

    lam = bisect_root(f, lo, hi, target=np.full(M, min_rate), tol=tol)
    return np.maximum(0.0, np.minimum(C, B - lam[:, None]))


def solve_z_row(rbar_row, ubar_row, cbar_row, min_rate, tol=1e-12):
    return solve_z(np.atleast_2d(rbar_row), np.atleast_2d(ubar_row),
                   np.atleast_2d(cbar_row), min_rate, tol)[0]


def update_dual(U, R_new, Z_new):
    return U + R_new - Z_new


def check_convergence(state, prev_Z, rho, eps_abs, eps_rel):
    """Primal/dual residuals and the squared-norm stopping test.

    Returns ``(Residuals, converged)``.
    """
    R, Z, U = state.R, state.Z, state.U
    scale = math.sqrt(R.size)
    primal = float(np.linalg.norm(R - Z))
    dual = float(rho * np.linalg.norm(Z - prev_Z))
    eps_pri = scale * eps_abs + eps_rel * max(np.linalg.norm(R), np.linalg.norm(Z))
    eps_dual = scale * eps_abs + eps_rel * rho * np.linalg.norm(U)
    res = Residuals(primal, dual, float(eps_pri), float(eps_dual))
    return res, bool(primal ** 2 <= eps_pri and dual ** 2 <= eps_dual)


# ---------------------------------------------------------------- iteration

def initial_state(problem, tol=1e-12, init="capacity"):
    """Starting point with ``U = 0`` and a row-feasible ``Z``.

    ``init="capacity"`` splits each GT's rate in proportion to its link
    capacities; ``"uniform"`` splits it evenly. Either split is then
    projected onto the capped simplex of its row.
    """
    M, G = problem.shape
    C = problem.capacity
    if init == "capacity":
        total = C.sum(axis=1, keepdims=True)
        split = np.divide(C, total, out=np.full((M, G), 1.0 / G), where=total > 0)
    elif init == "uniform":
        split = np.full((M, G), 1.0 / G)
    else:
        raise ValueError(f"unknown init {init!r}")
    Z = solve_z(problem.min_rate * split, np.zeros((M, G)), C, problem.min_rate, tol)
    return AdmmState(R=Z.copy(), Z=Z, U=np.zeros((M, G)), s=Z.max(axis=0), iter=0)


def gspa_iterate(problem, state, config):
    """One ADMM sweep: X-step, Z-step, dual update."""
    tol = config.bisection_tol
    R, s = solve_x(state.Z, state.U, problem.weights, problem.backhaul,
                  config.step_size(problem.min_rate), tol)
    Z = solve_z(R, state.U, problem.capacity, problem.min_rate, tol)
    U = update_dual(state.U, R, Z)
    return AdmmState(R, Z, U, s, state.iter + 1)


def run_admm(problem, config, state=None):
    """Iterate until the stopping test holds or ``max_iters`` is reached.

    Returns ``(state, residuals, converged)``.
    """
    if state is None:
        state = initial_state(problem, config.bisection_tol, config.init)
    res = None
    rho = config.step_size(problem.min_rate)
    for _ in range(config.max_iters):
        prev_Z = state.Z
        state = gspa_iterate(problem, state, config)
        res, done = check_convergence(state, prev_Z, rho, config.eps_abs, config.eps_rel)
        if done:
            return state, res, True
    return state, res, False


def reweight(R, epsilon):
    """Column weights ``1 / (||r_g||_inf + epsilon)``, scaled to max 1."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    w = 1.0 / (np.abs(np.asarray(R, float)).max(axis=0) + epsilon)
    return w / w.max()


def group_objective(R, weights):
    return float(np.dot(weights, np.asarray(R).max(axis=0)))


# ---------------------------------------------------------------- driver

def lower_bound(num_gts, min_rate, backhaul):
    """ceil(M r_min / max_g c_bh): the backhaul-driven floor on the ABS count."""
    top = float(np.max(backhaul)) if np.size(backhaul) else 0.0
    demand = num_gts * min_rate
    if demand == 0:
        return 0
    if top <= 0:
        return math.inf
    # guard against 14.000000000000002-style round-up
    q = demand / top
    n = math.ceil(q)
    return n - 1 if n - 1 >= 1 and math.isclose(q, n - 1, rel_tol=1e-12) else n


def check_problem(problem):
    M, G = problem.shape
    short = np.flatnonzero(problem.capacity.sum(axis=1) < problem.min_rate)
    if len(short):
        m = int(short[0])
        raise InfeasibleError(
            f"GT {m} cannot reach rate {problem.min_rate:g} even using every grid point", gt=m)
    bound = lower_bound(M, problem.min_rate, problem.backhaul)
    if bound > G:
        raise InfeasibleError(f"backhaul lower bound {bound} exceeds the {G} grid points")


def gspa_solve(problem, flight_grid=None, config=None):
    """Place ABSs with reweighted group-sparse ADMM.

    Runs ``config.reweight_rounds`` ADMM rounds (warm-started, weights
    refreshed between rounds), keeps columns whose peak rate exceeds
    ``activation_threshold * min_rate``, computes an exact allocation on
    that support with an LP (growing the support if needed) and, when
    ``config.prune`` is set, drops columns weakest first while an exact
    allocation still exists.

    Raises :class:`InfeasibleError` when some GT cannot be served even with
    every grid point, or when the backhaul bound exceeds the grid size.
    """
    config = config or AdmmConfig()
    check_problem(problem)
    M, G = problem.shape
    if problem.min_rate == 0:
        empty = np.array([], dtype=int)
        return PlacementSolution(empty, np.zeros((M, 0)), 0, 0.0, 0.0, True, True,
                                 None if flight_grid is None else np.zeros((0, 3)))
    eps = config.reweight_epsilon or 1e-3 * problem.min_rate

    current = problem
    state = None
    iterations = 0
    res, converged = None, True
    for k in range(config.reweight_rounds):
        state, res, ok = run_admm(current, config, state)
        converged &= ok
        iterations += state.iter
        state.iter = 0
        log.debug("round %d: %d iterations, converged=%s, objective %.6g",
                  k, iterations, ok, group_objective(state.R, current.weights))
        if k + 1 < config.reweight_rounds:
            current = problem.with_weights(reweight(state.R, eps))

    R = np.clip(state.R, 0.0, None)
    peak = R.max(axis=0)
    threshold = config.activation_threshold * problem.min_rate
    active = np.flatnonzero(peak > threshold)
    active, rates = _repair(problem, peak, active)
    if rates is not None and config.prune:
        active, rates = _prune(problem, peak, active, rates)
    if rates is None:
        rates = R[:, active]
    positions = None
    if flight_grid is not None:
        positions = np.asarray(flight_grid, dtype=float)[active]
    sol = PlacementSolution(
        active_columns=active,
        rates=rates,
        iterations=iterations,
        primal_residual=res.primal if res else float("nan"),
        dual_residual=res.dual if res else float("nan"),
        converged=converged,
        positions=positions,
        relaxed_rates=R,
    )
    sol.feasible = verify_feasibility(problem, sol).ok
    return sol


def _allocate(problem, cols):
    from .lp import feasible_allocation
    cols = np.asarray(cols, dtype=int)
    return feasible_allocation(problem.capacity[:, cols], problem.backhaul[cols],
                               problem.min_rate)


def _repair(problem, peak, active):
    """Exact allocation on the active support, growing it if needed.

    Columns are added in decreasing order of their relaxed peak rate until
    an allocation exists. Returns ``(columns, rates)``; ``rates`` is None
    when even the full grid fails.
    """
    order = np.argsort(-peak, kind="stable")
    support = set(int(g) for g in active)
    remaining = [int(g) for g in order if int(g) not in support]
    while True:
        cols = np.array(sorted(support), dtype=int)
        rates = _allocate(problem, cols) if len(cols) else None
        if rates is not None or not remaining:
            return cols, rates
        support.add(remaining.pop(0))


def _prune(problem, peak, cols, rates):
    """Drop columns, weakest relaxed peak first, while an allocation remains."""
    floor = lower_bound(problem.shape[0], problem.min_rate, problem.backhaul)
    for g in sorted(cols, key=lambda g: (peak[g], g)):
        if len(cols) <= max(floor, 1):
            break
        trial = cols[cols != g]
        trial_rates = _allocate(problem, trial)
        if trial_rates is not None:
            cols, rates = trial, trial_rates
    return cols, rates


@dataclass
class FeasibilityReport:
    ok: bool
    violations: list


def verify_feasibility(problem, solution, rel_tol=1e-6):
    """Check the rate allocation of ``solution`` against every constraint."""
    cols = np.asarray(solution.active_columns, dtype=int)
    R = np.asarray(solution.rates, dtype=float).reshape(problem.shape[0], len(cols))
    C = problem.capacity[:, cols]
    cbh = problem.backhaul[cols]
    rmin = problem.min_rate
    out = []
    for m in np.flatnonzero(R.sum(axis=1) < rmin * (1 - rel_tol)):
        out.append(("min_rate", int(m), float(R[m].sum())))
    for j in np.flatnonzero(R.sum(axis=0) > cbh * (1 + rel_tol) + 1e-12):
        out.append(("backhaul", int(cols[j]), float(R[:, j].sum())))
    cell_tol = rel_tol * np.maximum(C, rmin)
    for m, j in np.argwhere((R < -cell_tol) | (R > C + cell_tol)):
        out.append(("capacity", (int(m), int(cols[j])), float(R[m, j])))
    return FeasibilityReport(not out, out)
