import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize
from scipy.stats import norm as normal_law

from srlab.conditions import (InconsistentRoutes, ball_in_polytope_support, compatibility_phi,
                              condition_report, kernel_cone_intersect, maurey_rhs,
                              neighbourly_check, nsp_order_s, rec_kappa_upper,
                              restricted_sigma_extremes, rip_delta, small_ball_beta,
                              certified_sparsity, sparsity_certificate, vertex_census)
from srlab.core import GuardError, derive_stream
from srlab.ensembles import derive_spiky_params, gaussian, generate_matrix, spiky


def dup_matrix(rng, N=3, n=5):
    G = rng.standard_normal((N, n))
    G[:, 1] = G[:, 0]
    return G


# --- restricted singular values -------------------------------------------

def test_restricted_sigma_examples(nprng):
    assert restricted_sigma_extremes(np.eye(6), 3) == pytest.approx((1, 1))
    G = nprng.standard_normal((5, 8))
    cn = np.linalg.norm(G, axis=0)
    assert restricted_sigma_extremes(G, 1) == pytest.approx((cn.min(), cn.max()))
    with pytest.raises(GuardError):
        restricted_sigma_extremes(np.ones((2, 20)), 15)
    with pytest.raises(GuardError):
        restricted_sigma_extremes(np.ones((2, 60)), 10, guard=1000)


def test_restricted_sigma_vs_sampling(nprng):
    G = nprng.standard_normal((40, 10)) / math.sqrt(40)
    lo, hi = restricted_sigma_extremes(G, 2)
    T = np.zeros((10**5, 10))
    sup = np.array([nprng.choice(10, 2, replace=False) for _ in range(10**5)])
    c = nprng.standard_normal((10**5, 2))
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    np.put_along_axis(T, sup, c, axis=1)
    vals = np.linalg.norm(T @ G.T, axis=1)
    assert vals.min() >= lo - 1e-9 and vals.max() <= hi + 1e-9
    assert vals.min() - lo < 0.05


def test_restricted_sigma_monotone(nprng):
    G = nprng.standard_normal((6, 9))
    prev = restricted_sigma_extremes(G, 1)
    for s in range(2, 6):
        cur = restricted_sigma_extremes(G, s)
        assert cur[0] <= prev[0] + 1e-12 and cur[1] >= prev[1] - 1e-12
        prev = cur
    assert rip_delta(0.8, 1.1) == pytest.approx(0.2)


# --- null space property ---------------------------------------------------

def test_nsp_examples(nprng):
    r = nsp_order_s(nprng.standard_normal((4, 4)), 2)
    assert r.holds and r.worst_ratio == 0
    r = nsp_order_s(np.array([[1.0, 1.0]]), 1)
    assert r.worst_ratio == pytest.approx(0.5) and not r.holds


def brute_nsp_ratio(G, s, grid=400001):
    """Worst kernel mass ratio on s coordinates for a 1-d or 2-d kernel by sweeping it."""
    _, sv, vt = np.linalg.svd(G)
    K = vt[np.count_nonzero(sv > 1e-10):]
    if K.shape[0] == 1:
        V = K
    else:
        th = np.linspace(0, np.pi, grid)
        V = np.cos(th)[:, None] * K[0] + np.sin(th)[:, None] * K[1]
    A = np.abs(V)
    A /= A.sum(axis=1, keepdims=True)
    return np.sort(A, axis=1)[:, -s:].sum(axis=1).max()


def test_nsp_vs_kernel_sweep(nprng):
    for _ in range(5):
        G = nprng.standard_normal((5, 7))
        r = nsp_order_s(G, 2)
        assert r.worst_ratio == pytest.approx(brute_nsp_ratio(G, 2), abs=1e-5)
        assert r.worst_ratio >= brute_nsp_ratio(G, 2) - 1e-9


# --- small ball -------------------------------------------------------------

def test_small_ball_u0():
    b = small_ball_beta(gaussian(), 10, 2, 0.0, 100, 500, derive_stream(0, 0))
    assert b.value == 1.0 and not b.exact


def test_small_ball_gaussian_tail():
    b = small_ball_beta(gaussian(), 20, 3, 0.5, 100, 20000, derive_stream(1, 0))
    exact = 2 * (1 - normal_law.cdf(0.5))
    assert exact == pytest.approx(0.6171, abs=1e-4)
    assert abs(b.value - exact) <= 3 * b.details["stderr"]
    assert abs(b.details["mean_fraction"] - exact) <= 3 * b.details["stderr"] / 10 + 1e-3


def test_small_ball_spiky():
    prm, _ = derive_spiky_params(10000, 4)
    b = small_ball_beta(spiky(prm), 10000, 1, 0.25, 100, 1000, derive_stream(2, 0))
    assert b.value >= 0.4


def test_small_ball_guard():
    with pytest.raises(ValueError):
        small_ball_beta(gaussian(), 10, 2, 0.5, 10, 500, derive_stream(0, 0))


# --- compatibility constant ----------------------------------------------

def test_phi_identity_and_duplicate(nprng):
    r = compatibility_phi(np.eye(5), 2.0, [0])
    assert r.phi_upper == pytest.approx(1.0, abs=1e-9)
    r = compatibility_phi(dup_matrix(nprng), 1.0, [0])
    assert r.phi_upper <= 1e-9
    assert np.allclose(r.zeta[[0, 1]], [1, 1], atol=1e-6)


def phi_oracle(G, L, S, grid=201):
    """Outer grid over zeta_S on the l1 sphere, exact inner l1-ball projection problem by SLSQP."""
    N, n = G.shape
    rest = [j for j in range(n) if j not in S]
    GR = G[:, rest]
    r = len(rest)
    best = np.inf
    t = np.linspace(0, 1, grid)
    for s1, s2 in itertools.product((1, -1), repeat=2):
        for a in t:
            target = G[:, S] @ np.array([s1 * a, s2 * (1 - a)])
            # split w = p - q, sum(p + q) <= L
            fun = lambda v: float(np.sum((target - GR @ (v[:r] - v[r:])) ** 2))
            jac = lambda v: np.concatenate([-2 * GR.T @ (target - GR @ (v[:r] - v[r:])),
                                            2 * GR.T @ (target - GR @ (v[:r] - v[r:]))])
            res = minimize(fun, np.zeros(2 * r), jac=jac, method="SLSQP",
                           bounds=[(0, None)] * (2 * r),
                           constraints=[{"type": "ineq", "fun": lambda v: L - v.sum(),
                                         "jac": lambda v: -np.ones(2 * r)}],
                           options={"ftol": 1e-14, "maxiter": 500})
            best = min(best, res.fun)
    return math.sqrt(len(S)) * math.sqrt(max(best, 0.0))


def test_phi_vs_grid_oracle(nprng):
    G = nprng.standard_normal((6, 8))
    r = compatibility_phi(G, 3.0, [0, 1])
    oracle = phi_oracle(G, 3.0, [0, 1])
    assert abs(r.phi_upper - oracle) <= 1e-3
    assert oracle >= r.phi_lower - 1e-6


def test_phi_guards():
    with pytest.raises(GuardError):
        compatibility_phi(np.ones((2, 12)), 1.0, list(range(11)))
    with pytest.raises(ValueError):
        compatibility_phi(np.eye(3), 0.0, [0])


# --- kernel cone and restricted eigenvalue ---------------------------------

def test_cone_examples(nprng):
    assert not kernel_cone_intersect(nprng.standard_normal((4, 4)), [0], 1.0).intersects
    G = dup_matrix(nprng)
    r = kernel_cone_intersect(G, [0], 1.0)
    assert r.intersects
    w = r.witness / np.abs(r.witness).sum()
    assert np.allclose(np.abs(w), [0.5, 0.5, 0, 0, 0], atol=1e-9) and w[0] * w[1] < 0


def test_cone_matches_nsp(nprng):
    # max mass on S is the same LP family as nsp; c0 = 1 boundary is mass 1/2
    for _ in range(5):
        G = nprng.standard_normal((3, 6))
        nsp = nsp_order_s(G, 1)
        hits = [kernel_cone_intersect(G, [j], 1.0).intersects for j in range(6)]
        assert any(hits) == (nsp.worst_ratio >= 0.5 - 1e-9)


def test_kappa_identity():
    k = rec_kappa_upper(np.eye(6), 1, 1, 3.0, 20, derive_stream(0, 0))
    assert k.value == pytest.approx(1.0, abs=1e-6) and not k.exact


def test_kappa_zero_with_cone_witness(nprng):
    G = dup_matrix(nprng)
    assert rec_kappa_upper(G, 1, 1, 1.0, 5, derive_stream(0, 0)).value == 0.0


def test_kappa_vs_sampling_oracle(nprng):
    G = nprng.standard_normal((20, 10)) / math.sqrt(20)
    k = rec_kappa_upper(G, 1, 1, 3.0, 60, derive_stream(3, 0))
    # dense sampling of cone points: x_{S0} = +-1, off-support l1 mass uniform in [0, c0]
    M = 10**6
    best = np.inf
    for S0 in range(10):
        m = M // 10
        X = np.zeros((m, 10))
        X[:, S0] = 1.0
        off = [j for j in range(10) if j != S0]
        D = nprng.standard_normal((m, 9))
        D /= np.abs(D).sum(axis=1, keepdims=True)
        X[:, off] = D * (3.0 * nprng.random((m, 1)))
        top = np.abs(X[:, off]).max(axis=1)
        ratio = np.linalg.norm(X @ G.T, axis=1) / np.sqrt(1 + top ** 2)
        best = min(best, ratio.min())
    assert k.value <= best + 1e-6


def test_kappa_guard():
    with pytest.raises(GuardError):
        rec_kappa_upper(np.eye(3), 2, 2, 1.0, 5, derive_stream(0, 0))


# --- certificates -----------------------------------------------------------

def test_sparsity_certificate_formula():
    assert certified_sparsity(1.0, 1.0, 101) == 24
    assert certified_sparsity(0.0, 1.0, 50) == 0
    c = sparsity_certificate(np.eye(12), 12)
    assert (c.c0, c.c1, c.s1) == (pytest.approx(1), pytest.approx(1), 1)


def test_sparsity_certificate_implies_nsp():
    for seed in range(3):
        G, _ = generate_matrix(gaussian(), 60, 20, derive_stream(31, seed))
        c = sparsity_certificate(G, 4)
        if c.s1 >= 1:
            assert nsp_order_s(G, c.s1).holds


def test_maurey_examples(nprng):
    y = nprng.standard_normal(5)
    assert maurey_rhs(np.eye(5), y, 3, 1.0) == pytest.approx(y @ y)
    G = nprng.standard_normal((4, 5))
    e1 = np.eye(5)[0]
    lam = 0.3
    c1 = np.linalg.norm(G[:, 0]) ** 2
    assert maurey_rhs(G, e1, 3, lam) == pytest.approx(lam ** 2 - (c1 - lam ** 2) / 2)
    assert maurey_rhs(G, e1, 3, lam) <= c1
    with pytest.raises(ValueError):
        maurey_rhs(G, e1, 1, lam)


@given(st.integers(0, 2**32), st.integers(2, 4))
def test_maurey_inequality(seed, s):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((5, 7)) / math.sqrt(5)
    y = rng.standard_normal(7) * (rng.random(7) < 0.7)
    if not np.any(y):
        y[0] = 1.0
    lam, _ = restricted_sigma_extremes(G, s)
    assert np.sum((G @ y) ** 2) >= maurey_rhs(G, y, s, lam) - 1e-9


# --- polytope geometry ------------------------------------------------------

def test_vertex_census_examples(nprng):
    assert vertex_census(np.eye(4)).num_vertices == 8
    c = vertex_census(dup_matrix(nprng))
    assert set(c.non_vertex_columns) >= {0, 1}
    assert vertex_census(dup_matrix(nprng), columns=[0]).checked == [0]


def test_neighbourly_examples(nprng):
    for s in range(1, 4):
        assert neighbourly_check(np.eye(4), s).neighbourly
    r = neighbourly_check(dup_matrix(nprng), 1)
    assert not r.neighbourly and r.violating[0] in ((0,), (1,))


def test_neighbourly_cross_check_routes(nprng):
    r = neighbourly_check(np.eye(4), 1, cross_check=True)
    assert r.neighbourly and r.phi_min_upper > 0.5
    r = neighbourly_check(dup_matrix(nprng), 1, cross_check=True)
    assert not r.neighbourly and r.phi_min_upper <= 1e-6


def test_inconsistent_routes_raise(monkeypatch, nprng):
    from srlab import conditions
    monkeypatch.setattr(conditions, "_face_lp_feasible", lambda *a, **k: False)
    with pytest.raises(InconsistentRoutes):
        neighbourly_check(dup_matrix(nprng), 1, cross_check=True)


def test_donoho_characterization():
    """2n vertices and s-neighbourly together agree with the null space property."""
    holds = 0
    for seed in range(25):
        G, _ = generate_matrix(gaussian(), 10, 14, derive_stream(77, seed))
        nb = neighbourly_check(G, 2)
        vc = vertex_census(G)
        ns = nsp_order_s(G, 2)
        assert (nb.neighbourly and vc.num_vertices == 28) == ns.holds
        holds += ns.holds
    assert 0 < holds < 25  # both outcomes exercised


def test_ball_support_axis_columns():
    N, R = 4, 3.0
    est = ball_in_polytope_support(list(R * np.eye(N)), 20000, derive_stream(0, 0))
    assert est.value >= R / math.sqrt(N) - 1e-12
    assert est.value <= R / math.sqrt(N) * 1.15


def test_ball_support_scaled_basis(nprng):
    B = nprng.standard_normal((3, 3))
    c = 2.0
    cols = list((c * B).T) + list((-c * B).T)
    est = ball_in_polytope_support(cols, 5000, derive_stream(1, 0))
    smin = np.linalg.svd(c * B, compute_uv=False).min()
    assert est.value >= smin / math.sqrt(3) - 1e-12


def test_ball_support_perturbed_spikes(nprng):
    N = 5
    R = 4.0 * N
    cols = [R * np.eye(N)[i] + nprng.uniform(-1, 1, N) for i in range(N)]
    est = ball_in_polytope_support(cols, 20000, derive_stream(2, 0))
    assert est.value >= R / math.sqrt(N) - math.sqrt(N) - 1e-9


def test_condition_report_flags():
    G, _ = generate_matrix(gaussian(), 8, 10, derive_stream(5, 0))
    rep = condition_report(G, 2, rng=derive_stream(5, 1), spec=gaussian(), u=0.5,
                           restarts=10, directions=100, samples=500)
    d = rep.as_dict()
    assert d["exact"] == {"restricted_sigma": True, "nsp": True, "sparsity_certificate": True,
                          "phi": False, "kappa": False, "beta": False}
    assert d["rip_delta"] == pytest.approx(max(1 - d["restricted_sigma_min"],
                                               d["restricted_sigma_max"] - 1))
    assert d["beta_hat"]["implied_c1"] > 0
