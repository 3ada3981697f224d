"""Dense linear algebra helpers, norms and the counter-based random streams.

Vectors and matrices are plain float64 numpy arrays. ``as_vector`` and
``as_matrix`` validate shape and finiteness at module boundaries.
"""
from __future__ import annotations

import math

import numpy as np

ZERO_TOL = 1e-10

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


class GuardError(ValueError):
    """A combinatorial or precondition guard was violated."""


def as_vector(v, name="vector"):
    a = np.asarray(v, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def as_matrix(A, name="matrix"):
    a = np.asarray(A, dtype=float)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise ValueError(f"{name} must be a nonempty 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def norm(v, kind="l2", zero_tol=ZERO_TOL):
    """l0 / l1 / l2 / linf norm of a vector; l0 counts |v_i| > zero_tol."""
    v = as_vector(v)
    if kind == "l0":
        return int(np.count_nonzero(np.abs(v) > zero_tol))
    if kind == "l1":
        return float(np.sum(np.abs(v)))
    if kind == "l2":
        return float(np.linalg.norm(v))
    if kind == "linf":
        return float(np.max(np.abs(v)))
    raise ValueError(f"unknown norm kind {kind!r}")


def singular_extremes(A):
    """Smallest and largest singular value of A.

    For a wide matrix (rows < cols) the smallest singular value over R^cols
    is 0, which is what ``min ||Ax||`` over the unit sphere gives.
    """
    A = as_matrix(A)
    sv = np.linalg.svd(A, compute_uv=False)
    smax = float(sv[0])
    smin = float(sv[-1]) if A.shape[0] >= A.shape[1] else 0.0
    return smin, smax


def nullspace_basis(A, rank_tol=None):
    """Orthonormal basis of ker(A), returned as a list of vectors."""
    A = as_matrix(A)
    n = A.shape[1]
    _, sv, vt = np.linalg.svd(A, full_matrices=True)
    if rank_tol is None:
        rank_tol = 1e-10 * (sv[0] if sv.size else 0.0)
    rank = int(np.count_nonzero(sv > rank_tol))
    return [vt[k].copy() for k in range(rank, n)]


def least_squares_residual(A, y):
    """Least-squares fit of y by the columns of A; returns (x, ||Ax - y||_2)."""
    A = as_matrix(A)
    y = as_vector(y, "y")
    if A.shape[0] != y.size:
        raise ValueError(f"rows(A)={A.shape[0]} does not match len(y)={y.size}")
    x, *_ = np.linalg.lstsq(A, y, rcond=None)
    return x, float(np.linalg.norm(A @ x - y))


# --- random streams -------------------------------------------------------

def splitmix64_mix(z):
    """SplitMix64 finalizer on a python int (mod 2**64)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _M1) & _MASK64
    z = ((z ^ (z >> 27)) * _M2) & _MASK64
    return z ^ (z >> 31)


def _mix_array(z):
    # uint64 array arithmetic wraps mod 2**64
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def _rotl64(x, r):
    x &= _MASK64
    return ((x << r) | (x >> (64 - r))) & _MASK64


class RngStream:
    """A deterministic stream of 64-bit outputs keyed by (master_seed, stream_index).

    Output k is ``mix(key + (k + 1) * golden)`` where ``key`` is derived from
    the seed pair, so any block of the sequence can be produced in one
    vectorized call. The stream keeps a cursor; two streams built from the
    same pair emit identical sequences.
    """

    __slots__ = ("master_seed", "stream_index", "_key", "_pos")

    def __init__(self, master_seed, stream_index=0):
        self.master_seed = int(master_seed) & _MASK64
        self.stream_index = int(stream_index) & _MASK64
        self._key = splitmix64_mix(self.master_seed ^ _rotl64(self.stream_index, 32))
        self._pos = 0

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index}, pos={self._pos})"

    @property
    def position(self):
        return self._pos

    def next_u64(self, size):
        size = int(size)
        k = np.arange(self._pos + 1, self._pos + 1 + size, dtype=np.uint64)
        self._pos += size
        z = np.uint64(self._key) + k * np.uint64(_GOLDEN)
        return _mix_array(z)

    def uniform(self, size):
        """Doubles in [0, 1) from the top 53 bits."""
        return (self.next_u64(size) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)

    def normal(self, size):
        """Standard normals by Box-Muller; consumes 2*ceil(size/2) uniforms."""
        m = (int(size) + 1) // 2
        u = self.uniform(2 * m)
        return box_muller(u[:m], u[m:])[:size]

    def rademacher(self, size):
        return np.where(self.uniform(size) < 0.5, -1.0, 1.0)

    def bernoulli(self, p, size):
        return self.uniform(size) < p

    def sample_indices(self, n, k):
        """k distinct indices from range(n), by a partial Fisher-Yates shuffle."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot draw {k} distinct indices from {n}")
        perm = np.arange(n)
        u = self.uniform(k)
        for i in range(k):
            j = i + int(u[i] * (n - i))
            perm[i], perm[j] = perm[j], perm[i]
        return np.sort(perm[:k])

    def child(self, index):
        """An independent stream derived from the next output of this one."""
        return RngStream(int(self.next_u64(1)[0]), index)


def box_muller(u1, u2):
    r = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 lies in (0, 1]
    theta = 2.0 * math.pi * u2
    return np.concatenate([r * np.cos(theta), r * np.sin(theta)])


def derive_stream(master_seed, index):
    return RngStream(master_seed, index)
