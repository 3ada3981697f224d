"""Measurement-vector distributions and the spiky counterexample ensemble.

Every coordinate law has unit variance. Rows of a generated matrix are
``X_i / sqrt(N)``, so ``||Gamma t||_2^2 = N^{-1} sum_i <X_i, t>^2``.

The spiky law is ``x = eps * (1 + R * eta) / ||z||_{L2}`` with ``eps`` a
symmetric sign and ``eta`` a selector of mean ``delta``. Its parameters are
pinned to ``delta = ln N / n``, ``p = ln n / ln N``,
``R = sqrt(p) * delta**(-1/p)`` unless overridden.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import GuardError, RngStream


class Kind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    SYMEXP = "symexp"
    SPIKY = "spiky"
    CONSTANT = "constant"  # degenerate x = 1, a test hook


def l2_norm_z(delta, R):
    return math.sqrt(1.0 + ((1.0 + R) ** 2 - 1.0) * delta)


@dataclass(frozen=True)
class SpikyParams:
    n: int
    N: int
    delta: float
    p: float
    R: float
    l2_norm_z: float = float("nan")

    def __post_init__(self):
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")
        if self.R <= 0:
            raise ValueError(f"R must be positive, got {self.R}")
        expected = l2_norm_z(self.delta, self.R)
        if math.isnan(self.l2_norm_z):
            object.__setattr__(self, "l2_norm_z", expected)
        elif abs(self.l2_norm_z - expected) > 1e-12:
            raise ValueError("stored l2_norm_z disagrees with (delta, R)")

    def as_dict(self):
        return {"n": self.n, "N": self.N, "delta": self.delta, "p": self.p,
                "R": self.R, "l2_norm_z": self.l2_norm_z}


@dataclass(frozen=True)
class EnsembleSpec:
    kind: Kind
    params: SpikyParams | None = None
    alpha: float = field(default=float("nan"))

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.SPIKY and self.params is None:
            raise ValueError("the spiky ensemble needs SpikyParams")
        if math.isnan(self.alpha):
            # moment growth exponent: ||x||_Lp <~ p**alpha
            object.__setattr__(self, "alpha", 1.0 if self.kind is Kind.SYMEXP else 0.5)

    def as_dict(self):
        d = {"kind": self.kind.value}
        if self.params is not None:
            d["params"] = self.params.as_dict()
        return d


def gaussian():
    return EnsembleSpec(Kind.GAUSSIAN)


def rademacher():
    return EnsembleSpec(Kind.RADEMACHER)


def symexp():
    return EnsembleSpec(Kind.SYMEXP)


def spiky(params):
    return EnsembleSpec(Kind.SPIKY, params)


def derive_spiky_params(n, N, slack=2.0, delta=None, p=None, R=None):
    """Pinned counterexample parameters plus a report on each constraint.

    Returns ``(params, diagnostics)`` where diagnostics is a list of
    ``(name, value, satisfied)``. ``delta``, ``p`` and ``R`` may be
    overridden; ``p <= 2`` is an error.
    """
    if n < 16 or N < 2:
        raise GuardError(f"need n >= 16 and N >= 2, got n={n}, N={N}")
    if slack < 1:
        raise GuardError(f"slack must be >= 1, got {slack}")
    if delta is None:
        delta = math.log(N) / n
    if p is None:
        p = math.log(n) / math.log(N)
    if p <= 2:
        raise GuardError(f"moment horizon p = {p:.4g} <= 2: n={n} is too small relative to N={N}")
    if R is None:
        if delta <= 0:
            raise GuardError("R cannot be derived from delta = 0; pass R explicitly")
        R = math.sqrt(p) * delta ** (-1.0 / p)
    params = SpikyParams(n, N, float(delta), float(p), float(R))

    window = min(1.0 / N, math.log(math.e * n / N) / N)
    diagnostics = [
        ("R >= 2N", R, R >= 2 * N),
        ("delta <= slack*min(1/N, ln(en/N)/N)", delta, delta <= slack * window),
        ("R^4 delta <= slack", R ** 4 * delta, R ** 4 * delta <= slack),
        ("p <= 2 ln(1/delta)", p, delta > 0 and p <= 2 * math.log(1.0 / delta)),
    ]
    return params, diagnostics


def event_delta(N, n, target=None):
    """Smallest selector mean for which each row's spike event has the given probability.

    The default target ``1 - 1/(4N)`` is the per-row level that makes the
    all-rows event hold with probability at least 3/4 by a union bound.
    """
    if target is None:
        target = 1.0 - 1.0 / (4.0 * N)
    # per-column single-spike probability g needed: (1 - g)^(n-1) = 1 - target
    g = -math.expm1(math.log1p(-target) / (n - 1))
    top = 1.0 / N  # (1-d)^(N-1) d increases on [0, 1/N]
    if (1 - top) ** (N - 1) * top < g:
        raise GuardError(f"no selector mean reaches per-row probability {target} for N={N}, n={n}")
    return brentq(lambda d: (1 - d) ** (N - 1) * d - g, 0.0, top, xtol=1e-16, rtol=1e-14)


# --- sampling --------------------------------------------------------------

def _uniforms_per_row(kind, n):
    if kind is Kind.GAUSSIAN:
        return 2 * ((n + 1) // 2)
    if kind in (Kind.SYMEXP, Kind.SPIKY):
        return 2 * n
    if kind is Kind.RADEMACHER:
        return n
    return 0


def _coordinates(spec, U, n, trace=False):
    """Map a (rows, k) block of uniforms to (rows, n) coordinates."""
    kind = spec.kind
    rows = U.shape[0]
    if kind is Kind.GAUSSIAN:
        m = U.shape[1] // 2
        u1, u2 = U[:, :m], U[:, m:]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        th = 2.0 * math.pi * u2
        return np.concatenate([r * np.cos(th), r * np.sin(th)], axis=1)[:, :n]
    if kind is Kind.RADEMACHER:
        return np.where(U < 0.5, -1.0, 1.0)
    if kind is Kind.SYMEXP:
        sign = np.where(U[:, :n] < 0.5, -1.0, 1.0)
        return sign * (-np.log1p(-U[:, n:])) / math.sqrt(2.0)
    if kind is Kind.SPIKY:
        prm = spec.params
        eps = np.where(U[:, :n] < 0.5, -1.0, 1.0)
        eta = U[:, n:] < prm.delta
        x = eps * (1.0 + prm.R * eta) / prm.l2_norm_z
        if trace:
            return x, eps.astype(np.int8), eta.astype(np.uint8)
        return x
    return np.ones((rows, n))


def sample_row(spec, n, rng):
    """One measurement vector with n iid coordinates."""
    if n < 1:
        raise ValueError("n must be >= 1")
    U = rng.uniform(_uniforms_per_row(spec.kind, n)).reshape(1, -1)
    return _coordinates(spec, U, n)[0]


def sample_coordinates(spec, size, rng):
    """iid scalar draws of the coordinate law (a single long row)."""
    return sample_row(spec, size, rng)


@dataclass
class SpikyTrace:
    epsilon: np.ndarray
    eta: np.ndarray


def generate_matrix(spec, N, n, rng, keep_trace=False):
    """Gamma with rows X_i / sqrt(N); row i equals the i-th ``sample_row`` draw.

    Returns ``(Gamma, trace)``; trace is only produced for the spiky law.
    """
    if N < 1 or n < 1:
        raise ValueError("N and n must be >= 1")
    k = _uniforms_per_row(spec.kind, n)
    U = rng.uniform(N * k).reshape(N, k)
    if spec.kind is Kind.SPIKY and keep_trace:
        X, eps, eta = _coordinates(spec, U, n, trace=True)
        return X / math.sqrt(N), SpikyTrace(eps, eta)
    return _coordinates(spec, U, n) / math.sqrt(N), None


def reconstruct_from_trace(trace, params):
    """Entries eps * (1 + R eta) / (||z||_L2 sqrt(N)) rebuilt from a trace."""
    N = trace.epsilon.shape[0]
    return trace.epsilon * (1.0 + params.R * trace.eta) / params.l2_norm_z / math.sqrt(N)


# --- closed forms ---------------------------------------------------------

def _log_lq_moment(delta, R, q):
    # log of 1 + ((1+R)^q - 1) delta = (1 - delta) + delta (1+R)^q
    if delta == 0:
        return 0.0
    return float(np.logaddexp(math.log1p(-delta), math.log(delta) + q * math.log1p(R)))


def spiky_lq_ratio(params, q):
    """Exact ||z||_Lq / ||z||_L2 for z = eps (1 + R eta)."""
    if q < 2:
        raise ValueError("q must be >= 2")
    lq = _log_lq_moment(params.delta, params.R, q) / q
    l2 = _log_lq_moment(params.delta, params.R, 2.0) / 2.0
    return math.exp(lq - l2)


def empirical_lp_norm(spec, q, samples, rng):
    if q < 1:
        raise ValueError("q must be >= 1")
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    x = sample_coordinates(spec, samples, rng)
    return float(np.mean(np.abs(x) ** q) ** (1.0 / q))


def single_spike_row_prob(delta, N, n):
    """P(some column j >= 2 has its only spike in a given row) = 1 - (1 - (1-delta)^(N-1) delta)^(n-1)."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if delta == 0.0 or n <= 1:
        return 0.0
    if delta == 1.0:
        return 1.0 if N == 1 else 0.0
    g = math.exp((N - 1) * math.log1p(-delta)) * delta
    return -math.expm1((n - 1) * math.log1p(-g))


def perturbation_event_check(trace):
    """Does every row own a column (index >= 1) whose only spike sits in that row?

    Returns ``(holds, missing_rows)``.
    """
    eta = np.asarray(trace.eta if hasattr(trace, "eta") else trace).astype(bool)
    if eta.shape[1] < 2:
        raise ValueError("need at least two columns")
    rest = eta[:, 1:]
    single = rest.sum(axis=0) == 1
    hit = rest[:, single].any(axis=1)
    missing = [int(i) for i in np.nonzero(~hit)[0]]
    return not missing, missing
