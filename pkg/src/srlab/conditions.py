"""Matrix conditions for sparse recovery.

Exact evaluators enumerate supports and sign patterns under hard guards.
Randomized surrogates return an ``Estimate`` with ``exact=False`` and record
how many directions or restarts were used.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import GuardError, as_matrix, as_vector
from .ensembles import _coordinates, _uniforms_per_row
from .lp import LpProblem, Status, simplex_solve
from .solvers import FEAS_TOL, competitor_norm

SUPPORT_GUARD = 10**6
LP_GUARD = 20000
NSP_MARGIN = 1e-8


class InconsistentRoutes(RuntimeError):
    """Two independent evaluations of the same property disagree."""


@dataclass
class Estimate:
    value: float
    exact: bool = False
    details: dict = field(default_factory=dict)


def _check_guard(count, guard, what):
    if count > guard:
        raise GuardError(f"{what}: {count} subproblems exceed the guard of {guard}")


def numerical_rank(A, rel_tol=1e-10):
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.count_nonzero(sv > rel_tol * sv[0]))


def _sign_patterns(k):
    """Sign vectors with first entry +1; the global flip is covered by symmetry."""
    for tail in itertools.product((1.0, -1.0), repeat=k - 1):
        yield np.array((1.0,) + tail)


# --- restricted singular values -------------------------------------------

def restricted_sigma_extremes(Gamma, s, guard=SUPPORT_GUARD, chunk=20000):
    """Exact min/max singular value of Gamma_S over all supports |S| = s."""
    Gamma = as_matrix(Gamma, "Gamma")
    N, n = Gamma.shape
    if not 1 <= s <= min(n, 14):
        raise GuardError(f"s={s} must lie in [1, min(n, 14)={min(n, 14)}]")
    _check_guard(math.comb(n, s), guard, "restricted_sigma_extremes")
    lo, hi = np.inf, 0.0
    combos = itertools.combinations(range(n), s)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=int)
        if block.size == 0:
            break
        sub = np.transpose(Gamma[:, block], (1, 0, 2))  # (K, N, s)
        sv = np.linalg.svd(sub, compute_uv=False)
        hi = max(hi, float(sv[:, 0].max()))
        lo = min(lo, 0.0 if N < s else float(sv[:, -1].min()))
    return lo, hi


def column_norms(Gamma):
    return np.linalg.norm(as_matrix(Gamma, "Gamma"), axis=0)


def rip_delta(sigma_min_s, sigma_max_s):
    return max(1.0 - sigma_min_s, sigma_max_s - 1.0)


# --- kernel LPs ------------------------------------------------------------

def _kernel_mass_lp(Gamma, S, sigma, feas_tol=FEAS_TOL):
    """max sigma . v_S over Gamma v = 0, ||v||_1 <= 1. Returns (value, v)."""
    N, n = Gamma.shape
    A = np.zeros((N + 1, 2 * n + 1))
    A[:N, :n] = Gamma
    A[:N, n:2 * n] = -Gamma
    A[N, :] = 1.0
    b = np.zeros(N + 1)
    b[N] = 1.0
    c = np.zeros(2 * n + 1)
    S = list(S)
    c[S] = -sigma
    c[[n + j for j in S]] = sigma
    sol = simplex_solve(LpProblem(c, A, b), feas_tol)
    if sol.status is not Status.OPTIMAL:
        raise RuntimeError(f"kernel LP returned {sol.status.value}")
    v = sol.x[:n] - sol.x[n:2 * n]
    return -sol.objective_value, v


def _kernel_trivial(Gamma):
    return Gamma.shape[1] <= Gamma.shape[0] and numerical_rank(Gamma) == Gamma.shape[1]


@dataclass
class NspResult:
    holds: bool
    worst_ratio: float
    worst_support: tuple
    worst_vector: np.ndarray | None = None


def nsp_order_s(Gamma, s, margin=NSP_MARGIN, guard=LP_GUARD, feas_tol=FEAS_TOL):
    """Null space property of order s: every kernel vector keeps < 1/2 of its l1 mass off any s coordinates.

    worst_ratio is max ||v_S||_1 over kernel vectors with ||v||_1 <= 1 and
    |S| = s (smaller supports are dominated).
    """
    Gamma = as_matrix(Gamma, "Gamma")
    n = Gamma.shape[1]
    if not 1 <= s <= n:
        raise GuardError(f"s={s} must lie in [1, n={n}]")
    if _kernel_trivial(Gamma):
        return NspResult(True, 0.0, tuple(range(s)), None)
    _check_guard(math.comb(n, s) * 2 ** (s - 1), guard, "nsp_order_s")
    worst, arg, vec = -1.0, None, None
    for S in itertools.combinations(range(n), s):
        for sigma in _sign_patterns(s):
            val, v = _kernel_mass_lp(Gamma, S, sigma, feas_tol)
            if val > worst:
                worst, arg, vec = val, S, v
    worst = max(worst, 0.0)
    return NspResult(worst < 0.5 - margin, worst, arg, vec)


@dataclass
class ConeIntersection:
    intersects: bool
    witness: np.ndarray | None
    mass: float


def kernel_cone_intersect(Gamma, S, c0, feas_tol=FEAS_TOL):
    """Is there a nonzero kernel vector with ||v_{S^c}||_1 <= c0 ||v_S||_1?

    Decided by maximizing ||v_S||_1 over the kernel within the l1 ball; the
    cone is hit exactly when that maximum reaches 1/(1 + c0).
    """
    Gamma = as_matrix(Gamma, "Gamma")
    S = sorted({int(j) for j in S})
    if not S:
        raise ValueError("S must be nonempty")
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    if _kernel_trivial(Gamma):
        return ConeIntersection(False, None, 0.0)
    best, vec = -1.0, None
    for sigma in _sign_patterns(len(S)):
        val, v = _kernel_mass_lp(Gamma, S, sigma, feas_tol)
        if val > best:
            best, vec = val, v
    hit = best >= 1.0 / (1.0 + c0) - feas_tol
    return ConeIntersection(bool(hit), vec if hit else None, best)


# --- small ball ------------------------------------------------------------

def small_ball_beta(spec, n, s, u, directions, samples, rng):
    """Monte Carlo surrogate for min over s-sparse unit t of P(|<X, t>| > u).

    Coordinates are independent for every ensemble here, so each direction
    only needs fresh draws of its own s coordinates.
    """
    if directions < 100 or samples < 100:
        raise ValueError("need at least 100 directions and 100 samples")
    if not 1 <= s <= n:
        raise ValueError("need 1 <= s <= n")
    k = _uniforms_per_row(spec.kind, s)
    fracs = np.empty(directions)
    for d in range(directions):
        rng.sample_indices(n, s)  # support choice; its position is immaterial for iid coordinates
        t = rng.normal(s)
        t /= np.linalg.norm(t)
        X = _coordinates(spec, rng.uniform(samples * k).reshape(samples, k), s)
        fracs[d] = np.mean(np.abs(X @ t) > u)
    i = int(np.argmin(fracs))
    b = float(fracs[i])
    return Estimate(b, False, {"directions": directions, "samples": samples,
                               "stderr": math.sqrt(max(b * (1 - b), 0.0) / samples),
                               "mean_fraction": float(fracs.mean())})


# --- compatibility constant -----------------------------------------------

@dataclass
class PhiResult:
    phi_upper: float
    phi_lower: float
    gap: float
    value_sq: float
    converged: bool
    zeta: np.ndarray | None = None


def _fw_simplex(M, iters, gap_tol, stop_positive=None):
    """Away-step Frank-Wolfe for min ||M w||^2 over the probability simplex.

    Returns (w, f, gap). ``stop_positive`` ends early once f - gap exceeds it.
    """
    K = M.shape[1]
    norms = np.einsum("ij,ij->j", M, M)
    w = np.zeros(K)
    w[int(np.argmin(norms))] = 1.0
    q = M @ w
    gap = np.inf
    for _ in range(iters):
        grad = 2.0 * (M.T @ q)
        f = float(q @ q)
        gw = float(grad @ w)
        s = int(np.argmin(grad))
        gap = gw - float(grad[s])
        if gap <= gap_tol or (stop_positive is not None and f - gap > stop_positive):
            break
        active = np.nonzero(w > 0)[0]
        a = int(active[np.argmax(grad[active])])
        if gap >= float(grad[a]) - gw or w[a] >= 1.0:
            d = M[:, s] - q
            gmax = 1.0
            fw = True
        else:
            d = q - M[:, a]
            gmax = w[a] / (1.0 - w[a])
            fw = False
        dd = float(d @ d)
        if dd == 0.0:
            break
        g = min(max(-float(q @ d) / dd, 0.0), gmax)
        if fw:
            w *= 1.0 - g
            w[s] += g
        else:
            w *= 1.0 + g
            w[a] -= g
            if g == gmax:
                w[a] = 0.0
        q = q + g * d
    grad = 2.0 * (M.T @ q)
    f = float(q @ q)
    gap = float(grad @ w - grad.min())
    return w, f, max(gap, 0.0)


def compatibility_phi(Gamma, L, S, fw_iters=5000, gap_tol=1e-12, stop_positive=None):
    """phi(L, S) = sqrt(|S|) min ||Gamma zeta_S - Gamma zeta_{S^c}||_2 over
    ||zeta_S||_1 = 1 and ||zeta_{S^c}||_1 <= L.

    Each sign pattern of zeta_S gives a convex problem over a product of a
    simplex and an l1 ball, solved by away-step Frank-Wolfe over the product
    vertices. Returns an upper bound and the Frank-Wolfe gap of the best pattern.
    """
    Gamma = as_matrix(Gamma, "Gamma")
    N, n = Gamma.shape
    S = sorted({int(j) for j in S})
    if not 1 <= len(S) <= 10:
        raise GuardError(f"|S|={len(S)} must lie in [1, 10]")
    if L <= 0:
        raise ValueError("L must be positive")
    rest = [j for j in range(n) if j not in S]
    GS = Gamma[:, S]
    GR = Gamma[:, rest]
    best = None
    for sigma in _sign_patterns(len(S)):
        head = GS * sigma  # columns sigma_i Gamma e_i
        if rest:
            tail = np.concatenate([L * GR, -L * GR], axis=1)
            # atom (i, k) maps to head_i - tail_k
            M = (head[:, :, None] - tail[:, None, :]).reshape(N, -1)
        else:
            M = head
        w, f, gap = _fw_simplex(M, fw_iters, gap_tol, stop_positive)
        if best is None or f < best[1]:
            best = (sigma, f, gap, w)
    sigma, f, gap, w = best
    zeta = np.zeros(n)
    if rest:
        W = w.reshape(len(S), 2 * len(rest))
        zeta[S] = sigma * W.sum(axis=1)
        pos, neg = W.sum(axis=0)[:len(rest)], W.sum(axis=0)[len(rest):]
        zeta[rest] = L * (pos - neg)  # zeta_{S^c} enters with a minus sign
    else:
        zeta[S] = sigma * w
    scale = math.sqrt(len(S))
    return PhiResult(scale * math.sqrt(f), scale * math.sqrt(max(f - gap, 0.0)), gap, f,
                     gap <= gap_tol, zeta)


# --- restricted eigenvalue -------------------------------------------------

def _re_ratio(Gamma, x, S0, m):
    out = np.ones(x.size, dtype=bool)
    out[S0] = False
    idx = np.nonzero(out)[0]
    top = idx[np.argsort(-np.abs(x[idx]), kind="stable")[:m]]
    S01 = np.concatenate([np.asarray(S0, dtype=int), top])
    den = float(np.linalg.norm(x[S01]))
    return float(np.linalg.norm(Gamma @ x)) / den, S01


def _retract(x, S0, c0):
    mask = np.zeros(x.size, dtype=bool)
    mask[S0] = True
    inner = np.sum(np.abs(x[mask]))
    outer = np.sum(np.abs(x[~mask]))
    if outer > c0 * inner:
        x = x.copy()
        x[~mask] *= c0 * inner / outer
    return x


def rec_kappa_upper(Gamma, s, m, c0, restarts, rng, steps=400, check_kernel=True,
                    supports=None, lp_guard=2000):
    """Upper bound on the restricted eigenvalue constant kappa(s, m, c0).

    Multi-start descent of ||Gamma x|| / ||x_{S01}|| over the cone
    ||x_{S0^c}||_1 <= c0 ||x_{S0}||_1, with S1 recomputed as the m largest
    off-S0 coordinates at each step. Returns 0 (exactly) when a kernel
    vector lies in the cone for one of the checked supports.
    """
    Gamma = as_matrix(Gamma, "Gamma")
    N, n = Gamma.shape
    if s + m > n:
        raise GuardError(f"need s + m <= n, got s={s}, m={m}, n={n}")
    details = {"restarts": restarts, "steps": steps}
    if check_kernel and not _kernel_trivial(Gamma):
        if supports is None and math.comb(n, s) * 2 ** (s - 1) <= lp_guard:
            supports = list(itertools.combinations(range(n), s))
        for S in supports or []:
            hit = kernel_cone_intersect(Gamma, S, c0)
            if hit.intersects:
                details.update(kernel_witness=hit.witness, support=tuple(S))
                return Estimate(0.0, False, details)
    all_supports = list(itertools.combinations(range(n), s)) if math.comb(n, s) <= restarts else None
    G2 = Gamma.T @ Gamma
    lip = max(float(np.linalg.eigvalsh(G2)[-1]), 1e-300)
    best = np.inf
    for r in range(restarts):
        if all_supports is not None:
            S0 = np.array(all_supports[r % len(all_supports)])
        else:
            S0 = rng.sample_indices(n, s)
        x = np.zeros(n)
        x[S0] = rng.normal(s)
        off = np.setdiff1d(np.arange(n), S0)
        radius = c0 * np.sum(np.abs(x[S0])) * rng.uniform(1)[0]
        dirn = rng.normal(off.size)
        x[off] = radius * dirn / max(np.sum(np.abs(dirn)), 1e-300)
        x /= np.linalg.norm(x)
        val, S01 = _re_ratio(Gamma, x, S0, m)
        eta = 1.0 / lip
        for _ in range(steps):
            D = float(x[S01] @ x[S01])
            f = val * val
            g = 2.0 * (G2 @ x) / D
            g[S01] -= 2.0 * f * x[S01] / D
            cand = _retract(x - eta * g, S0, c0)
            nc = np.linalg.norm(cand)
            if nc == 0:
                eta *= 0.5
                continue
            cand /= nc
            cval, cS01 = _re_ratio(Gamma, cand, S0, m)
            if cval < val:
                x, val, S01 = cand, cval, cS01
                eta *= 1.5
            else:
                eta *= 0.5
                if eta < 1e-14 / lip:
                    break
        best = min(best, val)
    return Estimate(float(best), False, details)


# --- certificates and bounds ----------------------------------------------

def certified_sparsity(c0, c1, s):
    """floor(c0^2 (s-1) / (4 c1^2)) - 1, floored at 0."""
    if c1 <= 0:
        return 0
    return max(int(math.floor(c0 * c0 * (s - 1) / (4.0 * c1 * c1) + 1e-12)) - 1, 0)


@dataclass
class SparsityCertificate:
    c0: float
    c1: float
    s1: int


def sparsity_certificate(Gamma, s, guard=SUPPORT_GUARD):
    """Sparsity level s1 certified from the order-s lower bound and max column norm."""
    c0, _ = restricted_sigma_extremes(Gamma, s, guard)
    c1 = float(column_norms(Gamma).max())
    return SparsityCertificate(c0, c1, certified_sparsity(c0, c1, s))


def maurey_rhs(Gamma, y, s, lam):
    """lam^2 ||y||_2^2 - ||y||_1^2/(s-1) * (sum_j ||Gamma e_j||^2 mu_j - lam^2), mu_j = |y_j|/||y||_1."""
    Gamma = as_matrix(Gamma, "Gamma")
    y = as_vector(y, "y")
    if s < 2:
        raise ValueError("s must be >= 2")
    l1 = float(np.sum(np.abs(y)))
    if l1 == 0:
        raise ValueError("y must be nonzero")
    mu = np.abs(y) / l1
    W = float(np.sum(column_norms(Gamma) ** 2 * mu))
    return lam * lam * float(y @ y) - l1 * l1 / (s - 1) * (W - lam * lam)


# --- polytope geometry -----------------------------------------------------

@dataclass
class VertexCensus:
    num_vertices: int
    non_vertex_columns: list
    checked: list
    competitor_norms: dict


def vertex_census(Gamma, columns=None, feas_tol=FEAS_TOL):
    """Count the vertices of Gamma B_1^n: column j gives two vertices iff its
    competitor norm exceeds 1 + feas_tol. ``columns`` restricts the census.
    """
    Gamma = as_matrix(Gamma, "Gamma")
    n = Gamma.shape[1]
    if n > 10**4:
        raise GuardError(f"n={n} exceeds the census guard of 10^4 columns")
    cols = range(n) if columns is None else [int(j) for j in columns]
    non_vertex, norms = [], {}
    for j in cols:
        e = np.zeros(n)
        e[j] = 1.0
        val = competitor_norm(Gamma, e, [j], feas_tol)
        norms[j] = val
        if val <= 1.0 + feas_tol:
            non_vertex.append(j)
    checked = list(cols)
    return VertexCensus(2 * (len(checked) - len(non_vertex)), non_vertex, checked, norms)


def _face_lp_feasible(Gamma, S, eps, feas_tol=FEAS_TOL):
    """Does conv{eps_i C_i : i in S} meet absconv{C_j : j not in S}?"""
    N, n = Gamma.shape
    rest = [j for j in range(n) if j not in S]
    k, r = len(S), len(rest)
    A = np.zeros((N + 2, k + 2 * r + 1))
    A[:N, :k] = Gamma[:, S] * eps
    A[:N, k:k + r] = -Gamma[:, rest]
    A[:N, k + r:k + 2 * r] = Gamma[:, rest]
    A[N, :k] = 1.0
    A[N + 1, k:] = 1.0
    b = np.zeros(N + 2)
    b[N] = b[N + 1] = 1.0
    sol = simplex_solve(LpProblem(np.zeros(A.shape[1]), A, b), feas_tol)
    return sol.status is Status.OPTIMAL


@dataclass
class NeighbourlyResult:
    neighbourly: bool
    violating: tuple | None
    phi_min_upper: float | None = None


def neighbourly_check(Gamma, s, cross_check=False, guard=LP_GUARD, feas_tol=FEAS_TOL,
                      phi_zero_tol=1e-6, fw_iters=20000):
    """Does Gamma B_1^n have 2n vertices and is it s-neighbourly?

    Checks every |S| <= s and sign pattern for an intersection of the signed
    face with the absolute convex hull of the remaining columns. With
    ``cross_check`` the compatibility route phi(1, S) is evaluated as well
    and contradictions raise InconsistentRoutes.
    """
    Gamma = as_matrix(Gamma, "Gamma")
    n = Gamma.shape[1]
    if not 1 <= s <= n - 1:
        raise GuardError(f"s={s} must lie in [1, n-1]")
    total = sum(math.comb(n, k) * 2 ** (k - 1) for k in range(1, s + 1))
    _check_guard(total, guard, "neighbourly_check")
    violating = None
    phi_min = np.inf
    for k in range(1, s + 1):
        for S in itertools.combinations(range(n), k):
            S = list(S)
            hit = None
            for eps in _sign_patterns(k):
                if _face_lp_feasible(Gamma, S, eps, feas_tol):
                    hit = eps
                    break
            if hit is not None and violating is None:
                violating = (tuple(S), tuple(int(e) for e in hit))
            if cross_check:
                # a positive certificate is enough when the LP found no intersection
                ph = compatibility_phi(Gamma, 1.0, S, fw_iters=fw_iters,
                                       stop_positive=None if hit is not None else 1e-12)
                phi_min = min(phi_min, ph.phi_upper)
                if hit is not None and ph.phi_lower > phi_zero_tol:
                    raise InconsistentRoutes(f"LP finds an intersection at S={S} but phi(1,S) >= "
                                             f"{ph.phi_lower:.3g}")
                if hit is None and ph.phi_upper <= 1e-10:
                    raise InconsistentRoutes(f"LP finds no intersection at S={S} but phi(1,S) <= 1e-10")
            elif violating is not None:
                return NeighbourlyResult(False, violating)
    return NeighbourlyResult(violating is None, violating, phi_min if cross_check else None)


def ball_in_polytope_support(columns, directions, rng):
    """min over sampled unit w of max_j |<v_j, w>|: a sampled upper bound on
    the inradius of absconv(columns)."""
    if directions < 1000:
        raise ValueError("need at least 1000 directions")
    V = np.column_stack([as_vector(c) for c in columns])
    Nd = V.shape[0]
    best = np.inf
    done = 0
    while done < directions:
        b = min(20000, directions - done)
        W = rng.normal(b * Nd).reshape(b, Nd)
        W /= np.linalg.norm(W, axis=1, keepdims=True)
        best = min(best, float(np.abs(W @ V).max(axis=1).min()))
        done += b
    return Estimate(best, False, {"directions": directions})


# --- aggregate report ------------------------------------------------------

@dataclass
class ConditionReport:
    s: int
    restricted_sigma_min: float
    restricted_sigma_max: float
    rip_delta: float
    nsp_margin: float
    nsp_holds: bool
    sparsity_certificate: SparsityCertificate
    phi: dict = field(default_factory=dict)
    kappa_upper: dict = field(default_factory=dict)
    beta_hat: dict = field(default_factory=dict)
    exact: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "s": self.s,
            "restricted_sigma_min": self.restricted_sigma_min,
            "restricted_sigma_max": self.restricted_sigma_max,
            "rip_delta": self.rip_delta,
            "nsp_margin": self.nsp_margin,
            "nsp_holds": self.nsp_holds,
            "sparsity_certificate": {"c0": self.sparsity_certificate.c0, "c1": self.sparsity_certificate.c1, "s1": self.sparsity_certificate.s1},
            "phi": self.phi,
            "kappa_upper": self.kappa_upper,
            "beta_hat": self.beta_hat,
            "exact": self.exact,
        }


def condition_report(Gamma, s, L=3.0, c0=3.0, m=None, restarts=50, rng=None,
                     spec=None, u=None, directions=200, samples=2000):
    """Evaluate the exact conditions at order s, plus the randomized ones when an rng is given."""
    Gamma = as_matrix(Gamma, "Gamma")
    n = Gamma.shape[1]
    lo, hi = restricted_sigma_extremes(Gamma, s)
    nsp = nsp_order_s(Gamma, s)
    rep = ConditionReport(s, lo, hi, rip_delta(lo, hi), 0.5 - nsp.worst_ratio, nsp.holds,
                          sparsity_certificate(Gamma, s))
    rep.exact.update(restricted_sigma=True, nsp=True, sparsity_certificate=True)
    S = list(range(min(s, 10)))
    ph = compatibility_phi(Gamma, L, S)
    rep.phi = {"L": L, "S": S, "phi_upper": ph.phi_upper, "gap": ph.gap}
    rep.exact["phi"] = False
    if rng is not None:
        m = s if m is None else m
        if s + m <= n:
            kap = rec_kappa_upper(Gamma, s, m, c0, restarts, rng)
            rep.kappa_upper = {"s": s, "m": m, "c0": c0, "value": kap.value, "restarts": restarts}
            rep.exact["kappa"] = False
        if spec is not None and u is not None:
            b = small_ball_beta(spec, n, s, u, directions, samples, rng)
            # implied constant u^2 beta / (16 e (1 + L)^2), reported but never asserted
            rep.beta_hat = {"u": u, "s": s, "value": b.value, "directions": directions,
                            "samples": samples,
                            "implied_c1": u * u * b.value / (16 * math.e * (1 + L) ** 2)}
            rep.exact["beta"] = False
    return rep
