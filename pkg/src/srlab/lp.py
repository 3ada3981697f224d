"""Dense two-phase primal simplex (Bland's rule) for small linear programs.

Problems are ``min c.x  s.t.  A x = b,  lower <= x <= upper``. Finite lower
bounds are shifted to zero, free variables are split, finite upper bounds
become extra equality rows with slacks; the core solver only ever sees
``A x = b, x >= 0``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import as_vector

PIVOT_TOL = 1e-11


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


class IterationLimitError(RuntimeError):
    """The simplex iteration cap was exceeded."""


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = as_vector(self.c, "c")
        self.A = np.asarray(self.A, dtype=float)
        if self.A.ndim != 2:
            raise ValueError("A must be 2-d")
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        m, n = self.A.shape
        if n != self.c.size:
            raise ValueError(f"A has {n} columns but c has {self.c.size} entries")
        if m != self.b.size:
            raise ValueError(f"A has {m} rows but b has {self.b.size} entries")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("A and b must be finite")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(-1)
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bound vectors must have one entry per variable")
        if np.any(self.lower > self.upper) or np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("bounds must satisfy lower <= upper")


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray | None = None
    objective_value: float = float("nan")
    iterations: int = 0
    basis: list = field(default_factory=list)


def _pivot(T, r, j):
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    nz = np.nonzero(col)[0]
    if nz.size:
        T[nz] -= np.outer(col[nz], T[r])


def _run(T, basis, ncols, opt_tol, counter, cap):
    """Bland's-rule iterations on a tableau whose last row holds reduced costs.

    Only the first ``ncols`` columns may enter. Returns False on an unbounded ray.
    """
    m = T.shape[0] - 1
    zero_rhs = 1e-11 * max(1.0, float(np.max(np.abs(T[:m, -1]), initial=0.0)))
    while True:
        d = T[m, :ncols]
        neg = np.nonzero(d < -opt_tol)[0]
        if neg.size == 0:
            return True
        j = int(neg[0])
        col = T[:m, j]
        rows = np.nonzero(col > PIVOT_TOL)[0]
        if rows.size == 0:
            return False
        ratios = np.maximum(T[rows, -1], 0.0) / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        counter[0] += 1
        if counter[0] > cap:
            raise IterationLimitError(f"simplex exceeded the iteration cap of {cap}")
        _pivot(T, r, j)
        basis[r] = j
        # keep degenerate rows exactly degenerate so Bland's tie-break is exact
        rhs = T[:m, -1]
        rhs[np.abs(rhs) < zero_rhs] = 0.0


def _solve_standard(c, A, b, feas_tol, opt_tol, cap):
    """min c.x s.t. Ax = b, x >= 0. Returns (status, x, iterations, basis)."""
    m, n = A.shape
    A = A.copy()
    b = b.copy()
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # phase 1 tableau: [A | I | b] plus the artificial-cost row
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = list(range(n, n + m))
    counter = [0]
    _run(T, basis, n, opt_tol, counter, cap)
    if -T[m, -1] > feas_tol * max(1.0, float(np.max(b, initial=0.0))):
        return Status.INFEASIBLE, None, counter[0], []

    # drive degenerate artificials out of the basis, dropping redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n:
            cand = np.nonzero(np.abs(T[r, :n]) > 1e-9)[0]
            if cand.size == 0:
                continue
            T[r, -1] = 0.0
            _pivot(T, r, int(cand[0]))
            basis[r] = int(cand[0])
        keep.append(r)
    T = np.vstack([T[keep][:, list(range(n)) + [T.shape[1] - 1]], np.zeros((1, n + 1))])
    basis = [basis[r] for r in keep]
    k = len(keep)

    cb = c[basis]
    T[k, :n] = c - cb @ T[:k, :n]
    T[k, -1] = -cb @ T[:k, -1]
    if not _run(T, basis, n, opt_tol, counter, cap):
        return Status.UNBOUNDED, None, counter[0], basis

    x = np.zeros(n)
    x[basis] = T[:k, -1]
    if k:
        # refine the basic values against the original rows
        B = A[keep][:, basis]
        try:
            xb = np.linalg.solve(B, b[keep])
            if np.all(xb > -feas_tol):
                x[basis] = xb
        except np.linalg.LinAlgError:
            pass
    x[(x < 0) & (x > -feas_tol)] = 0.0
    return Status.OPTIMAL, x, counter[0], basis


def simplex_solve(p, feas_tol=1e-9, opt_tol=1e-9):
    """Solve an LpProblem; Infeasible/Unbounded are reported via ``status``.

    Raises IterationLimitError past 50*(rows+cols) pivots.
    """
    if feas_tol <= 0 or opt_tol <= 0:
        raise ValueError("tolerances must be positive")
    A, b, c = p.A, p.b, p.c
    m, n = A.shape
    lo, up = p.lower, p.upper

    # column map from original variables to standard-form columns
    cols, coef, shift = [], [], np.zeros(n)
    extra_rows = []
    std_cols = 0
    for j in range(n):
        if np.isfinite(lo[j]):
            shift[j] = lo[j]
            cols.append([std_cols])
            coef.append([1.0])
            if np.isfinite(up[j]):
                extra_rows.append((std_cols, up[j] - lo[j]))
            std_cols += 1
        elif np.isfinite(up[j]):
            shift[j] = up[j]
            cols.append([std_cols])
            coef.append([-1.0])
            std_cols += 1
        else:
            cols.append([std_cols, std_cols + 1])
            coef.append([1.0, -1.0])
            std_cols += 2
    n_slack = len(extra_rows)
    ns = std_cols + n_slack
    S = np.zeros((m + n_slack, ns))
    cs = np.zeros(ns)
    for j in range(n):
        for k, s in zip(cols[j], coef[j]):
            S[:m, k] = s * A[:, j]
            cs[k] = s * c[j]
    for r, (k, width) in enumerate(extra_rows):
        S[m + r, k] = 1.0
        S[m + r, std_cols + r] = 1.0
    bs = np.concatenate([b - A @ shift, [w for _, w in extra_rows]])

    cap = 50 * (S.shape[0] + ns)
    status, xs, its, basis = _solve_standard(cs, S, bs, feas_tol, opt_tol, cap)
    if status is not Status.OPTIMAL:
        return LpSolution(status, iterations=its)
    x = shift.copy()
    for j in range(n):
        for k, s in zip(cols[j], coef[j]):
            x[j] += s * xs[k]
    return LpSolution(Status.OPTIMAL, x, float(c @ x), its, basis)


def min_l1_solution(A, b, feas_tol=1e-9, opt_tol=1e-9):
    """min ||w||_1 s.t. Aw = b via the split w = w+ - w-; returns (LpSolution, w)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    n = A.shape[1]
    sol = simplex_solve(LpProblem(np.ones(2 * n), np.hstack([A, -A]), b), feas_tol, opt_tol)
    if sol.status is not Status.OPTIMAL:
        return sol, None
    return sol, sol.x[:n] - sol.x[n:]


def lp_feasible(A, b, l1_budget, feas_tol=1e-9):
    """Is there w with Aw = b and ||w||_1 <= l1_budget? Returns (feasible, witness)."""
    if l1_budget < 0:
        raise ValueError("l1_budget must be nonnegative")
    sol, w = min_l1_solution(A, b, feas_tol)
    if sol.status is not Status.OPTIMAL or sol.objective_value > l1_budget + feas_tol:
        return False, None
    return True, w
