"""Dense two-phase simplex and the placement-related linear programs.

The solver is a plain tableau method meant for desk-scale instances (a few
hundred rows). Pricing is Dantzig's rule until a run of degenerate pivots
is seen, after which Bland's rule takes over for the rest of the phase, so
the method cannot cycle.
"""

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LpNumericalError(RuntimeError):
    pass


class LpInfeasibleError(ValueError):
    pass


@dataclass
class LinearProgram:
    """minimize c @ x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lb <= x <= ub."""

    c: np.ndarray
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    A_ub: np.ndarray = None
    b_ub: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = len(self.c)
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "equality")
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "inequality")
        self.lb = np.zeros(n) if self.lb is None else np.broadcast_to(
            np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.broadcast_to(
            np.asarray(self.ub, dtype=float), (n,)).copy()
        if np.any(self.lb > self.ub) or np.any(self.lb == np.inf) or np.any(self.ub == -np.inf):
            raise ValueError("variable bounds must satisfy lb <= ub with lb < inf and ub > -inf")
        for arr in (self.c, self.A_eq, self.b_eq, self.A_ub, self.b_ub):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")

    @property
    def num_vars(self):
        return len(self.c)


def _rows(A, b, n, what):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape != (len(b), n):
        raise ValueError(f"{what} constraints have shape {A.shape}, expected ({len(b)}, {n})")
    return A, b


@dataclass
class LpSolution:
    status: str
    x: np.ndarray = None
    objective: float = None
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == OPTIMAL


def solve_lp(lp, tol=1e-9, max_iters=50_000):
    """Solve ``lp`` to a vertex optimum or classify it infeasible/unbounded."""
    n = lp.num_vars
    lb, ub = lp.lb, lp.ub

    # x = lb + y for finite lb; x = y_plus - y_minus for free variables
    finite_lb = np.isfinite(lb)
    free = ~finite_lb & ~np.isfinite(ub)
    upper_only = ~finite_lb & np.isfinite(ub)  # x = ub - y
    cols = []  # (original index, sign)
    for j in range(n):
        if finite_lb[j]:
            cols.append((j, 1.0))
        elif upper_only[j]:
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
    for j in np.flatnonzero(free):
        cols.append((j, -1.0))
    idx = np.array([j for j, _ in cols], dtype=int)
    sign = np.array([s for _, s in cols])
    shift = np.where(finite_lb, lb, np.where(upper_only, ub, 0.0))

    def transform(A):
        return A[:, idx] * sign

    c = lp.c[idx] * sign
    const = float(lp.c @ shift)
    A_eq = transform(lp.A_eq)
    b_eq = lp.b_eq - lp.A_eq @ shift
    A_ub = transform(lp.A_ub)
    b_ub = lp.b_ub - lp.A_ub @ shift
    both = finite_lb & np.isfinite(ub)
    ub_rows = np.flatnonzero(both)
    if len(ub_rows):
        B = np.zeros((len(ub_rows), len(idx)))
        B[np.arange(len(ub_rows)), ub_rows] = 1.0  # first n columns map 1:1
        A_ub = np.vstack([A_ub, B])
        b_ub = np.concatenate([b_ub, (ub - lb)[ub_rows]])

    y, status, its = _simplex_standard(c, A_eq, b_eq, A_ub, b_ub, tol, max_iters)
    if status != OPTIMAL:
        return LpSolution(status, iterations=its)
    x = shift.copy()
    np.add.at(x, idx, sign * y)
    x = np.clip(x, lb, ub)
    return LpSolution(OPTIMAL, x, float(lp.c @ x), its)


def _simplex_standard(c, A_eq, b_eq, A_ub, b_ub, tol, max_iters):
    """min c@y s.t. A_eq y = b_eq, A_ub y <= b_ub, y >= 0."""
    n = len(c)
    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq
    # columns: y (n), slacks (m_ub), artificials (as needed), rhs
    A = np.zeros((m, n + m_ub))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b = np.where(neg, -b, b)

    basis = np.full(m, -1)
    slack_ok = np.flatnonzero(~neg[:m_ub])
    basis[slack_ok] = n + slack_ok
    need_art = np.flatnonzero(basis < 0)
    n_struct = n + m_ub
    n_art = len(need_art)
    T = np.zeros((m + 1, n_struct + n_art + 1))
    T[:m, :n_struct] = A
    T[need_art, n_struct + np.arange(n_art)] = 1.0
    T[:m, -1] = b
    basis[need_art] = n_struct + np.arange(n_art)
    scale = max(1.0, float(np.abs(T).max()))
    eps = tol * scale
    its = 0

    if n_art:
        T[-1, :] = 0.0
        T[-1, n_struct:n_struct + n_art] = 1.0
        for r in need_art:
            T[-1] -= T[r]
        status, k = _run(T, basis, n_struct + n_art, eps, max_iters)
        its += k
        if T[-1, -1] < -eps * max(1.0, m):
            return None, INFEASIBLE, its
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= n_struct:
                row = T[r, :n_struct]
                cand = np.flatnonzero(np.abs(row) > eps)
                if len(cand):
                    _pivot(T, basis, r, cand[0])
                else:
                    keep[r] = False
        T = np.vstack([T[:m][keep], T[-1:]])
        basis = basis[keep]
        T = np.delete(T, np.s_[n_struct:n_struct + n_art], axis=1)
        m = len(basis)

    T[-1, :] = 0.0
    T[-1, :n] = c
    for r in range(m):
        j = basis[r]
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[r]
    status, k = _run(T, basis, n_struct, eps, max_iters - its)
    its += k
    if status != OPTIMAL:
        return None, status, its
    y = np.zeros(n_struct)
    y[basis] = T[:m, -1]
    return np.maximum(y[:n], 0.0), OPTIMAL, its


def _run(T, basis, n_cols, eps, max_iters, degenerate_switch=50):
    m = len(basis)
    bland = False
    streak = 0
    for k in range(max_iters):
        red = T[-1, :n_cols]
        if bland:
            cand = np.flatnonzero(red < -eps)
            if not len(cand):
                return OPTIMAL, k
            e = cand[0]
        else:
            e = int(np.argmin(red))
            if red[e] >= -eps:
                return OPTIMAL, k
        col = T[:m, e]
        pos = col > eps
        if not pos.any():
            return UNBOUNDED, k
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + eps)
        r = ties[np.argmin(basis[ties])]
        if best <= eps:
            streak += 1
            if streak >= degenerate_switch:
                bland = True
        else:
            streak = 0
        _pivot(T, basis, r, e)
    raise LpNumericalError(f"simplex did not terminate within {max_iters} pivots")


def _pivot(T, basis, r, e):
    T[r] /= T[r, e]
    col = T[:, e].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    basis[r] = e


# ---------------------------------------------------------------- builders

def _rate_scale(min_rate, *arrays):
    if min_rate > 0:
        return float(min_rate)
    peak = max((float(np.max(a)) for a in arrays if np.size(a)), default=0.0)
    return peak if peak > 0 else 1.0


def build_relaxed_lp(problem, columns=None):
    """LP form of the weighted group-sparse relaxation with equality rows.

    Variables are ``vec(R)`` (row-major, ``M x N``) followed by one slack per
    column; rates are divided by ``meta["scale"]`` to keep the tableau well
    conditioned. ``columns`` restricts the problem to a subset of grid points.
    """
    C = np.asarray(problem.capacity, dtype=float)
    cbh = np.asarray(problem.backhaul, dtype=float)
    w = np.asarray(problem.weights, dtype=float)
    if columns is not None:
        columns = np.asarray(columns, dtype=int)
        C, cbh, w = C[:, columns], cbh[columns], w[columns]
    M, N = C.shape
    scale = _rate_scale(problem.min_rate, C, cbh)
    nr = M * N
    c = np.concatenate([np.zeros(nr), w])
    A_eq = np.zeros((M, nr + N))
    for m in range(M):
        A_eq[m, m * N:(m + 1) * N] = 1.0
    b_eq = np.full(M, problem.min_rate / scale)
    A_bh = np.zeros((N, nr + N))
    for g in range(N):
        A_bh[g, g:nr:N] = 1.0
    A_s = np.zeros((nr, nr + N))
    A_s[np.arange(nr), np.arange(nr)] = 1.0
    A_s[np.arange(nr), nr + np.tile(np.arange(N), M)] = -1.0
    A_ub = np.vstack([A_bh, A_s])
    b_ub = np.concatenate([cbh / scale, np.zeros(nr)])
    lb = np.zeros(nr + N)
    ub = np.concatenate([C.ravel() / scale, np.full(N, np.inf)])
    return LinearProgram(c, A_eq, b_eq, A_ub, b_ub, lb, ub,
                         meta={"shape": (M, N), "scale": scale, "columns": columns})


def solve_relaxed(problem, columns=None):
    """Solve the relaxed placement LP; returns ``(R, s, objective)``.

    ``R`` has the shape of the (possibly restricted) capacity matrix.
    Raises :class:`LpInfeasibleError` when no allocation exists.
    """
    lp = build_relaxed_lp(problem, columns)
    sol = solve_lp(lp)
    if sol.status == INFEASIBLE:
        raise LpInfeasibleError("relaxed placement LP is infeasible")
    if not sol.optimal:
        raise LpNumericalError(f"relaxed placement LP returned {sol.status}")
    M, N = lp.meta["shape"]
    scale = lp.meta["scale"]
    R = sol.x[:M * N].reshape(M, N) * scale
    s = sol.x[M * N:] * scale
    return R, s, sol.objective * scale


def _allocation_lp(C, cbh, min_rate, weights, scale):
    M, N = C.shape
    nr = M * N
    A_row = np.zeros((M, nr))
    for m in range(M):
        A_row[m, m * N:(m + 1) * N] = -1.0
    A_bh = np.zeros((N, nr))
    for n in range(N):
        A_bh[n, n:nr:N] = 1.0
    return LinearProgram(
        np.asarray(weights, dtype=float).ravel(),
        A_ub=np.vstack([A_row, A_bh]),
        b_ub=np.concatenate([np.full(M, -min_rate / scale), cbh / scale]),
        lb=0.0,
        ub=C.ravel() / scale,
    )


def feasible_allocation(capacities, backhaul, min_rate):
    """A rate matrix meeting every constraint on these columns, else ``None``.

    Rows of the result sum to exactly ``min_rate``.
    """
    C = np.atleast_2d(np.asarray(capacities, dtype=float))
    cbh = np.broadcast_to(np.asarray(backhaul, dtype=float), (C.shape[1],))
    if np.any(C.sum(axis=1) < min_rate) or cbh.sum() < C.shape[0] * min_rate:
        return None
    if min_rate == 0:
        return np.zeros(C.shape)
    scale = _rate_scale(min_rate, C, cbh)
    # a link able to carry the full rate alone needs no cap: clipping an
    # overshoot back to C keeps its row sum >= min_rate
    caps = np.where(C >= min_rate, np.inf, C)
    lp = _allocation_lp(caps, cbh, min_rate, np.zeros(C.shape), scale)
    sol = solve_lp(lp)
    if sol.status == INFEASIBLE:
        return None
    if not sol.optimal:
        raise LpNumericalError(f"feasibility LP returned {sol.status}")
    R = np.clip(sol.x.reshape(C.shape) * scale, 0.0, C)
    return R * (min_rate / R.sum(axis=1))[:, None]


def count_connections(R, min_rate, rel_tol=1e-9):
    threshold = rel_tol * (min_rate if min_rate > 0 else 1.0)
    return int(np.count_nonzero(np.asarray(R) > threshold))


def _consolidate(R, C, cbh, min_rate):
    """Move each split GT onto one link when capacity and backhaul allow.

    When no link has room, one GT already on a single link may be moved
    elsewhere first to make room.
    """
    R = R.copy()
    thr = 1e-9 * min_rate
    cap = cbh * (1 + 1e-12)

    def single(m, n):
        R[m] = 0.0
        R[m, n] = min_rate

    for _ in range(2 * R.shape[0]):
        moved = False
        for m in np.argsort(-(R > thr).sum(axis=1), kind="stable"):
            if np.count_nonzero(R[m] > thr) <= 1:
                continue
            load = R.sum(axis=0) - R[m]
            links = [n for n in np.argsort(-C[m], kind="stable") if C[m, n] >= min_rate]
            n = next((n for n in links if load[n] + min_rate <= cap[n]), None)
            if n is not None:
                single(m, n)
                moved = True
                continue
            for n in links:
                # a GT alone on n whose departure frees enough backhaul for m
                movers = [k for k in np.flatnonzero(R[:, n] > thr)
                          if k != m and np.count_nonzero(R[k] > thr) == 1
                          and load[n] - R[k, n] + min_rate <= cap[n]]
                for k in movers:
                    dest = [j for j in np.argsort(-C[k], kind="stable") if j != n
                            and C[k, j] >= min_rate and load[j] + min_rate <= cap[j]]
                    if dest:
                        single(k, dest[0])
                        single(m, n)
                        moved = True
                        break
                if moved:
                    break
        if not moved:
            break
    return R


def min_connections(capacities, backhaul, min_rate, reweight_rounds=2, epsilon=None,
                    box_weights=True, consolidate=True):
    """Rate allocation with few GT-ABS links for a fixed set of ABSs.

    Parameters
    ----------
    capacities : (M, N) array
    backhaul : (N,) array or scalar
    min_rate : float
    reweight_rounds : int
        Reweighted LPs after the first, with entrywise weights
        ``1 / (r + epsilon)``.
    epsilon : float, optional
        Defaults to ``1e-3 * min_rate``.
    box_weights : bool
        Weight the first LP by ``1 / min(C, backhaul, min_rate)``, the
        tightest linear bound on a link's indicator. With ``False`` the
        first LP minimizes the plain total rate, which every feasible
        allocation ties on.
    consolidate : bool
        Afterwards move split GTs onto a single link where possible.

    Returns
    -------
    R : (M, N) array
    connections : int
    """
    C = np.atleast_2d(np.asarray(capacities, dtype=float))
    cbh = np.broadcast_to(np.asarray(backhaul, dtype=float), (C.shape[1],))
    M, N = C.shape
    bad = np.flatnonzero(C.sum(axis=1) < min_rate)
    if len(bad):
        raise LpInfeasibleError(f"GT {bad[0]} cannot reach the minimum rate")
    if min_rate == 0:
        return np.zeros((M, N)), 0
    scale = _rate_scale(min_rate, C, cbh)
    eps = (1e-3 * min_rate if epsilon is None else epsilon) / scale
    weights = np.ones((M, N))
    if box_weights:
        u = np.minimum(np.minimum(C, cbh[None, :]), min_rate)
        weights = np.where(u > 0, min_rate / np.where(u > 0, u, 1.0), 1.0)
    R = None
    for _ in range(reweight_rounds + 1):
        sol = solve_lp(_allocation_lp(C, cbh, min_rate, weights, scale))
        if sol.status == INFEASIBLE:
            raise LpInfeasibleError("no allocation meets the minimum rate under the backhaul")
        if not sol.optimal:
            raise LpNumericalError(f"connection LP returned {sol.status}")
        R = sol.x.reshape(M, N)
        weights = 1.0 / (R + max(eps, 1e-12))
    R = R * scale
    if consolidate:
        R = _consolidate(R, C, cbh, min_rate)
    return R, count_connections(R, min_rate)


def _served_lp(C, cbh, min_rate, scale, must_serve):
    M, N = C.shape
    nr = M * N
    # variables: vec(R), y
    A_short = np.zeros((M, nr + M))
    for m in range(M):
        A_short[m, m * N:(m + 1) * N] = -1.0
        A_short[m, nr + m] = -1.0
    A_bh = np.zeros((N, nr + M))
    for n in range(N):
        A_bh[n, n:nr:N] = 1.0
    y_ub = np.where(must_serve, 0.0, np.inf)
    return LinearProgram(
        np.concatenate([np.zeros(nr), np.ones(M)]),
        A_ub=np.vstack([A_short, A_bh]),
        b_ub=np.concatenate([np.full(M, -min_rate / scale), cbh / scale]),
        lb=0.0,
        ub=np.concatenate([C.ravel() / scale, y_ub]),
    )


def max_served_users(capacities, backhaul, min_rate, greedy=True):
    """Allocation minimizing the total rate shortfall below ``min_rate``.

    With ``greedy`` the GTs left short by the LP are then tried one at a
    time, smallest shortfall first, and kept as served whenever the grown
    set still admits a full allocation; the LP is re-solved with those GTs
    pinned at zero shortfall.

    Returns ``(R, y, objective, served)`` where ``y`` holds per-GT shortfalls
    and ``served`` counts GTs whose total rate reaches ``min_rate``.
    """
    C = np.atleast_2d(np.asarray(capacities, dtype=float))
    cbh = np.broadcast_to(np.asarray(backhaul, dtype=float), (C.shape[1],))
    M, N = C.shape
    nr = M * N
    scale = _rate_scale(min_rate, C, cbh)

    def solve(must_serve):
        sol = solve_lp(_served_lp(C, cbh, min_rate, scale, must_serve))
        if not sol.optimal:
            raise LpNumericalError(f"served-users LP returned {sol.status}")
        return sol.x[:nr].reshape(M, N) * scale, sol.x[nr:] * scale

    R, y = solve(np.zeros(M, dtype=bool))
    served = R.sum(axis=1) >= min_rate * (1 - 1e-9)
    if greedy and not served.all():
        pinned = served.copy()
        for m in np.argsort(y, kind="stable"):
            if pinned[m]:
                continue
            trial = pinned.copy()
            trial[m] = True
            if feasible_allocation(C[trial], cbh, min_rate) is not None:
                pinned = trial
        if pinned.sum() > served.sum():
            try:
                R2, y2 = solve(pinned)
            except LpNumericalError:
                pass  # tolerance mismatch with the feasibility check; keep the plain LP
            else:
                R, y = R2, y2
                served = R.sum(axis=1) >= min_rate * (1 - 1e-9)
    return R, y, float(y.sum()), int(np.count_nonzero(served))
