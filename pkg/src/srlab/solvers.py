"""Recovery procedures: Basis Pursuit, the competitor test, l0 search, LASSO."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import GuardError, as_matrix, as_vector, least_squares_residual, singular_extremes
from .lp import Status, min_l1_solution

REC_TOL = 1e-6
FEAS_TOL = 1e-9


class NoSparseSolution(ValueError):
    """No solution with support size within the search limit."""


class ConvergenceError(RuntimeError):
    pass


@dataclass
class RecoveryResult:
    xhat: np.ndarray | None
    objective: float
    status: Status = Status.OPTIMAL
    recovered: bool | None = None
    l2_error: float = float("nan")
    linf_error: float = float("nan")
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)

    def compare(self, x0, rec_tol=REC_TOL):
        if self.xhat is None:
            self.recovered = False
            return self
        d = self.xhat - np.asarray(x0, dtype=float)
        self.l2_error = float(np.linalg.norm(d))
        self.linf_error = float(np.max(np.abs(d)))
        self.recovered = self.linf_error <= rec_tol
        return self


def basis_pursuit(Gamma, y, x0_ref=None, rec_tol=REC_TOL, feas_tol=FEAS_TOL):
    """min ||t||_1 subject to Gamma t = y, solved as a split LP."""
    Gamma = as_matrix(Gamma, "Gamma")
    y = as_vector(y, "y")
    if Gamma.shape[0] != y.size:
        raise ValueError(f"rows(Gamma)={Gamma.shape[0]} does not match len(y)={y.size}")
    sol, t = min_l1_solution(Gamma, y, feas_tol)
    if sol.status is not Status.OPTIMAL:
        res = RecoveryResult(None, float("inf"), sol.status, iterations=sol.iterations)
    else:
        res = RecoveryResult(t, sol.objective_value, sol.status, iterations=sol.iterations)
    if x0_ref is not None:
        res.compare(x0_ref, rec_tol)
    return res


def competitor_norm(Gamma, v, J, feas_tol=FEAS_TOL, return_witness=False):
    """min ||w||_1 over w vanishing on J with Gamma w = Gamma v (v normalized to ||v||_1 = 1).

    A value <= 1 + feas_tol means v is not the unique l1 minimizer of its
    own measurements, so exact reconstruction of order |J| fails. Returns
    inf when no such w exists.
    """
    Gamma = as_matrix(Gamma, "Gamma")
    v = as_vector(v, "v")
    n = Gamma.shape[1]
    J = sorted({int(j) for j in J})
    mask = np.zeros(n, dtype=bool)
    mask[J] = True
    if np.any(np.abs(v[~mask]) > 0):
        raise ValueError("v must be supported in J")
    l1 = np.sum(np.abs(v))
    if l1 == 0:
        raise ValueError("v must be nonzero")
    v = v / l1
    rest = np.nonzero(~mask)[0]
    if rest.size == 0:
        value, w = float("inf"), None
    else:
        sol, wr = min_l1_solution(Gamma[:, rest], Gamma @ v, feas_tol)
        if sol.status is Status.OPTIMAL:
            value = sol.objective_value
            w = np.zeros(n)
            w[rest] = wr
        else:
            value, w = float("inf"), None
    return (value, w) if return_witness else value


@dataclass
class L0Result:
    solutions: list
    sparsity: int
    unique: bool
    supports: list


def l0_min(Gamma, y, max_support, feas_tol=FEAS_TOL, max_supports=10**6):
    """Sparsest solutions of Gamma t = y by support enumeration.

    A support S is accepted when the least-squares residual on Gamma_S is at
    most ``feas_tol * (1 + ||y||_2)``. All minimal-cardinality solutions are
    returned.
    """
    Gamma = as_matrix(Gamma, "Gamma")
    y = as_vector(y, "y")
    N, n = Gamma.shape
    if max_support > min(N, 12):
        raise GuardError(f"max_support={max_support} exceeds min(rows, 12)={min(N, 12)}")
    tol = feas_tol * (1.0 + np.linalg.norm(y))
    if np.linalg.norm(y) <= tol:
        return L0Result([np.zeros(n)], 0, True, [()])
    total = sum(math.comb(n, k) for k in range(1, max_support + 1))
    if total > max_supports:
        raise GuardError(f"{total} supports exceed the enumeration guard of {max_supports}")
    for k in range(1, max_support + 1):
        found, supports = [], []
        for S in itertools.combinations(range(n), k):
            coef, resid = least_squares_residual(Gamma[:, S], y)
            if resid <= tol:
                t = np.zeros(n)
                t[list(S)] = coef
                found.append(t)
                supports.append(S)
        if found:
            return L0Result(found, k, len(found) == 1, supports)
    raise NoSparseSolution(f"no solution with support size <= {max_support}")


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(X, z, lam, x):
    r = z - X @ x
    return float(r @ r) / X.shape[0] + lam * float(np.sum(np.abs(x)))


def kkt_violation(X, z, lam, x, zero_tol=0.0):
    """Largest violation of the l1-subgradient optimality conditions."""
    g = -2.0 / X.shape[0] * (X.T @ (z - X @ x))
    on = np.abs(x) > zero_tol
    viol_on = np.abs(g[on] + lam * np.sign(x[on]))
    viol_off = np.maximum(np.abs(g[~on]) - lam, 0.0)
    return float(max(viol_on.max(initial=0.0), viol_off.max(initial=0.0)))


def lasso(X, z, lam, max_iter=200000, kkt_tol=1e-8, x_init=None, keep_history=False):
    """argmin (1/N) ||z - X x||^2 + lam ||x||_1 by proximal gradient with step 1/L.

    X holds the unnormalized measurement vectors as rows. L = 2 sigma_max(X)^2 / N.
    """
    X = as_matrix(X, "X")
    z = as_vector(z, "z")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    N, n = X.shape
    if N != z.size:
        raise ValueError(f"rows(X)={N} does not match len(z)={z.size}")
    L = 2.0 * singular_extremes(X)[1] ** 2 / N
    x = np.zeros(n) if x_init is None else as_vector(x_init).copy()
    if L == 0:
        return RecoveryResult(x, lasso_objective(X, z, lam, x))
    step = 1.0 / L
    Xtz = X.T @ z
    G = X.T @ X
    obj = lasso_objective(X, z, lam, x)
    history = [obj] if keep_history else []
    for it in range(1, max_iter + 1):
        grad = -2.0 / N * (Xtz - G @ x)
        x = soft_threshold(x - step * grad, step * lam)
        new = lasso_objective(X, z, lam, x)
        if new > obj + 1e-12 * (1.0 + abs(obj)):
            raise ConvergenceError(f"objective increased at iteration {it}: {obj} -> {new}")
        obj = new
        if keep_history:
            history.append(obj)
        if kkt_violation(X, z, lam, x) <= kkt_tol:
            return RecoveryResult(x, obj, iterations=it, history=history)
    raise ConvergenceError(f"lasso did not reach kkt_tol={kkt_tol} within {max_iter} iterations")
