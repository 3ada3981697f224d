import numpy as np
import pytest
from hypothesis import given, strategies as st

from srlab.lp import (IterationLimitError, LpProblem, Status, lp_feasible, min_l1_solution,
                      simplex_solve)

from lp_oracle import bfs_enumeration, l1_sign_oracle


def random_lp(rng, m, n, kind):
    A = rng.integers(-3, 4, size=(m, n)).astype(float)
    if kind == "feasible":
        b = A @ rng.uniform(0, 2, n)
    else:
        b = rng.integers(-3, 4, size=m).astype(float)
    c = rng.integers(-3, 4, size=n).astype(float)
    if kind == "bounded":
        c = np.abs(c) + 1.0
    return c, A, b


def test_tiny_examples():
    sol = simplex_solve(LpProblem([1.0, 0.0], [[1.0, 1.0]], [1.0]))
    assert sol.status is Status.OPTIMAL
    assert sol.objective_value == pytest.approx(0.0)
    assert np.allclose(sol.x, [0.0, 1.0])
    assert simplex_solve(LpProblem([0.0], [[1.0]], [-1.0])).status is Status.INFEASIBLE
    assert simplex_solve(LpProblem([-1.0, 0.0], [[1.0, -1.0]], [0.0])).status is Status.UNBOUNDED


def test_dimension_and_tolerance_errors():
    with pytest.raises(ValueError):
        LpProblem([1.0, 2.0], [[1.0]], [1.0])
    with pytest.raises(ValueError):
        LpProblem([1.0], [[1.0]], [1.0, 2.0])
    with pytest.raises(ValueError):
        LpProblem([1.0], [[1.0]], [1.0], lower=[2.0], upper=[1.0])
    with pytest.raises(ValueError):
        simplex_solve(LpProblem([1.0], [[1.0]], [1.0]), feas_tol=0)


def test_bounds_free_and_upper():
    # min x1 - x2, x1 + x2 = 1, x1 free, x2 <= 3  ->  x2 = 3, x1 = -2, objective -5
    p = LpProblem([1.0, -1.0], [[1.0, 1.0]], [1.0], lower=[-np.inf, 0.0], upper=[np.inf, 3.0])
    sol = simplex_solve(p)
    assert sol.status is Status.OPTIMAL
    assert sol.objective_value == pytest.approx(-5.0)
    assert np.allclose(sol.x, [-2.0, 3.0])
    # upper-only bound: max x s.t. x = x, x <= 2 encoded with no rows
    p = LpProblem([-1.0, 0.0], [[0.0, 1.0]], [0.0], lower=[-np.inf, 0.0], upper=[2.0, np.inf])
    assert simplex_solve(p).objective_value == pytest.approx(-2.0)


def test_iteration_cap_is_reported():
    from srlab import lp
    c, A, b = random_lp(np.random.default_rng(0), 3, 6, "feasible")
    old = lp._run

    def capped(T, basis, ncols, opt_tol, counter, cap):
        return old(T, basis, ncols, opt_tol, counter, 0)
    lp._run = capped
    try:
        with pytest.raises(IterationLimitError):
            simplex_solve(LpProblem(c, A, b))
    finally:
        lp._run = old


@pytest.mark.parametrize("kind", ["feasible", "bounded", "any"])
def test_matches_bfs_oracle(kind):
    rng = np.random.default_rng({"feasible": 1, "bounded": 2, "any": 3}[kind])
    for _ in range(40):
        m, n = int(rng.integers(1, 4)), int(rng.integers(3, 7))
        c, A, b = random_lp(rng, m, n, kind)
        sol = simplex_solve(LpProblem(c, A, b))
        status, value = bfs_enumeration(c, A, b)
        assert sol.status.value.lower() == status
        if status == "optimal":
            assert sol.objective_value == pytest.approx(value, abs=1e-8)
            assert np.abs(A @ sol.x - b).max() <= 1e-9 * (1 + np.abs(b).max())
            assert sol.x.min() >= -1e-9
            # basic: at most rank(A) nonzeros
            assert np.count_nonzero(np.abs(sol.x) > 1e-9) <= np.linalg.matrix_rank(A)


@given(st.integers(0, 2**32))
def test_column_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    c, A, b = random_lp(rng, 3, 6, "bounded")
    perm = rng.permutation(6)
    s1 = simplex_solve(LpProblem(c, A, b))
    s2 = simplex_solve(LpProblem(c[perm], A[:, perm], b))
    assert s1.status is s2.status
    if s1.status is Status.OPTIMAL:
        assert s1.objective_value == pytest.approx(s2.objective_value, abs=1e-9)


def test_degenerate_problem_terminates():
    # many redundant and degenerate rows: a cycling-prone setup
    rng = np.random.default_rng(5)
    A = rng.standard_normal((6, 12))
    A = np.vstack([A, A[:2] * 2.0])
    x = np.zeros(12)
    x[:2] = [0.3, -0.7]
    sol, w = min_l1_solution(A, A @ x)
    assert sol.status is Status.OPTIMAL
    assert np.abs(A @ w - A @ x).max() < 1e-9


def test_lp_feasible_examples():
    ok, w = lp_feasible(np.eye(3), [1.0, 0, 0], 1.0)
    assert ok and np.allclose(w, [1, 0, 0])
    ok, w = lp_feasible(np.eye(3), [2.0, 0, 0], 1.0)
    assert not ok and w is None
    with pytest.raises(ValueError):
        lp_feasible(np.eye(2), [1.0, 0.0], -1.0)


@given(st.integers(0, 2**32), st.floats(0.1, 3.0))
def test_lp_feasible_vs_enumeration(seed, budget):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((2, 4))
    b = rng.standard_normal(2)
    best = l1_sign_oracle(A, b)
    ok, w = lp_feasible(A, b, budget)
    if abs(best - budget) > 1e-7:
        assert ok == (best <= budget)
    if ok:
        assert np.abs(w).sum() <= budget + 1e-8 and np.allclose(A @ w, b, atol=1e-9)
