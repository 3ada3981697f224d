"""Deterministic Monte Carlo harnesses.

Every trial draws from its own stream ``derive_stream(master_seed, index)``,
so results do not depend on execution order or on the worker count
(``SRL_THREADS``).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .conditions import compatibility_phi, kernel_cone_intersect, vertex_census
from .core import GuardError, derive_stream
from .ensembles import (EnsembleSpec, Kind, derive_spiky_params, generate_matrix,
                        perturbation_event_check, sample_coordinates, spiky)
from .solvers import (FEAS_TOL, REC_TOL, basis_pursuit, competitor_norm, l0_min, lasso)


def worker_count():
    try:
        return max(1, int(os.environ.get("SRL_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    workers = worker_count()
    if workers == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def cell_stream(master_seed, cell, trial):
    return derive_stream(master_seed, (cell << 32) | trial)


def random_sparse_signal(n, s, rng):
    """Uniform support of size s, Gaussian coefficients, unit l2 norm."""
    x = np.zeros(n)
    if s == 0:
        return x
    S = rng.sample_indices(n, s)
    c = rng.normal(s)
    x[S] = c / np.linalg.norm(c)
    return x


@dataclass
class TrialRecord:
    experiment: str
    seed: int
    params: dict
    outcome: dict

    def as_dict(self):
        return {"experiment": self.experiment, "seed": self.seed,
                "params": self.params, "outcome": self.outcome}


# --- phase diagram ---------------------------------------------------------

@dataclass
class PhaseTable:
    ensemble: EnsembleSpec
    n: int
    N_values: list
    s_values: list
    trials: int
    master_seed: int
    successes: dict = field(default_factory=dict)

    def rate(self, N, s):
        return self.successes[(N, s)] / self.trials

    def rows(self):
        out = []
        for N in self.N_values:
            for s in self.s_values:
                k = self.successes[(N, s)]
                out.append({"ensemble": self.ensemble.kind.value, "n": self.n, "N": N, "s": s,
                            "trials": self.trials, "successes": k, "rate": k / self.trials,
                            "seed": self.master_seed})
        return out


def _bp_trial(spec, n, N, s, rng):
    Gamma, _ = generate_matrix(spec, N, n, rng)
    x0 = random_sparse_signal(n, s, rng)
    res = basis_pursuit(Gamma, Gamma @ x0, x0_ref=x0)
    return bool(res.recovered)


def phase_diagram(spec, n, N_list, s_list, trials, master_seed):
    """Basis Pursuit success counts on an (N, s) grid."""
    if any(s > n for s in s_list):
        raise GuardError("sparsity cannot exceed n")
    table = PhaseTable(spec, n, list(N_list), list(s_list), trials, master_seed)
    jobs = []
    for ci, (N, s) in enumerate((N, s) for N in table.N_values for s in table.s_values):
        jobs.extend((ci, N, s, t) for t in range(trials))
    results = _map(lambda j: _bp_trial(spec, n, j[1], j[2], cell_stream(master_seed, j[0], j[3])), jobs)
    for (ci, N, s, t), ok in zip(jobs, results):
        table.successes[(N, s)] = table.successes.get((N, s), 0) + int(ok)
    return table


# --- counterexample --------------------------------------------------------

@dataclass
class CounterexampleResult:
    params: dict
    diagnostics: list
    trials: int
    master_seed: int
    failure_freq: float
    perturbation_freq: float
    column_leg_freq: float
    per_trial: list

    def as_dict(self):
        return {"experiment": "counterexample", "master_seed": self.master_seed,
                "trials": self.trials, "params": self.params,
                "diagnostics": [{"constraint": c, "value": v, "satisfied": bool(ok)}
                                for c, v, ok in self.diagnostics],
                "failure_freq": self.failure_freq, "perturbation_freq": self.perturbation_freq,
                "column_leg_freq": self.column_leg_freq,
                "per_trial": [r.as_dict() for r in self.per_trial]}


def counterexample_experiment(n, N, trials, master_seed, slack=2.0, delta=None, p=None, R=None,
                              cross_check=False, feas_tol=FEAS_TOL, col_tol=1e-9):
    """Does e_1 fail to be the unique Basis Pursuit solution on spiky matrices?

    Per trial: the competitor norm of e_1 (failure iff <= 1 + feas_tol), the
    spike event of every row, and whether ||Gamma e_1||_2 <= 1. With
    ``cross_check`` the cone-intersection and vertex routes are evaluated too.
    """
    params, diag = derive_spiky_params(n, N, slack, delta=delta, p=p, R=R)
    spec = spiky(params)

    def trial(t):
        rng = derive_stream(master_seed, t)
        Gamma, trace = generate_matrix(spec, N, n, rng, keep_trace=True)
        e1 = np.zeros(n)
        e1[0] = 1.0
        value = competitor_norm(Gamma, e1, [0], feas_tol)
        holds, missing = perturbation_event_check(trace)
        out = {"competitor_norm": value, "failure": bool(value <= 1.0 + feas_tol),
               "perturbation_event": holds, "missing_rows": len(missing),
               "column_norm": float(np.linalg.norm(Gamma[:, 0])),
               "column_leg": bool(np.linalg.norm(Gamma[:, 0]) <= 1.0 + col_tol)}
        if cross_check:
            out["cone_intersects"] = kernel_cone_intersect(Gamma, [0], 1.0, feas_tol).intersects
            out["column1_vertex"] = not vertex_census(Gamma, columns=[0], feas_tol=feas_tol).non_vertex_columns
            out["phi_1_e1_upper"] = compatibility_phi(Gamma, 1.0, [0], fw_iters=2000).phi_upper
        return TrialRecord("counterexample", master_seed, {"trial": t, "stream_index": t}, out)

    records = _map(trial, range(trials))
    freq = lambda key: sum(r.outcome[key] for r in records) / trials
    return CounterexampleResult(params.as_dict(), diag, trials, master_seed,
                                freq("failure"), freq("perturbation_event"), freq("column_leg"),
                                records)


# --- l0 --------------------------------------------------------------------

def l0_experiment(spec, n, s, N, trials, master_seed, rec_tol=REC_TOL):
    """Fraction of trials where l0 search returns x0 as its unique solution."""
    if s > 6:
        raise GuardError(f"s={s} exceeds the desk-scale guard of 6")

    def trial(t):
        rng = derive_stream(master_seed, t)
        Gamma, _ = generate_matrix(spec, N, n, rng)
        x0 = random_sparse_signal(n, s, rng)
        res = l0_min(Gamma, Gamma @ x0, max_support=min(s, N, 12))
        return res.unique and np.max(np.abs(res.solutions[0] - x0)) <= rec_tol

    return sum(_map(trial, range(trials))) / trials


# --- moment growth ---------------------------------------------------------

def gaussian_abs_moment(p):
    """E|g|^p for a standard normal g."""
    return math.exp(p / 2 * math.log(2) + gammaln((p + 1) / 2) - 0.5 * math.log(math.pi))


def moment_growth_experiment(spec, p_list, N, mc_samples, master_seed, square=False, chunk=20000):
    """Monte Carlo L_p norms of N^{-1/2} sum_i z_i.

    z is the coordinate law of ``spec`` or, with ``square``, its centered
    square x^2 - 1. Rows: p, lhs, lhs/sqrt(p), Gaussian reference moment.
    """
    alpha = spec.alpha * (2 if square else 1)
    need = max(p_list) ** max(2 * alpha - 1, 1)
    if N < need:
        raise GuardError(f"N={N} is below p^max(2 alpha - 1, 1) = {need:.4g}")
    rng = derive_stream(master_seed, 0)
    sums = np.empty(mc_samples)
    done = 0
    while done < mc_samples:
        b = min(chunk, mc_samples - done)
        z = sample_coordinates(spec, b * N, rng).reshape(b, N)
        if square:
            z = z * z - 1.0
        sums[done:done + b] = z.sum(axis=1) / math.sqrt(N)
        done += b
    rows = []
    for p in p_list:
        lhs = float(np.mean(np.abs(sums) ** p) ** (1.0 / p))
        rows.append({"p": p, "lhs": lhs, "ratio": lhs / math.sqrt(p),
                     "gaussian_ref": gaussian_abs_moment(p) ** (1.0 / p)})
    return rows


# --- noisy LASSO -----------------------------------------------------------

@dataclass(frozen=True)
class NoisyModel:
    sigma: float
    t: float

    def __post_init__(self):
        if self.sigma < 0 or self.t <= 0:
            raise ValueError("need sigma >= 0 and t > 0")

    def lam(self, n, N):
        return 4.0 * self.sigma * math.sqrt((self.t ** 2 + math.log(n)) / N)


def _violated(lhs, rhs):
    return bool(lhs > rhs * (1 + 1e-9) + 1e-12)


def noisy_lasso_experiment(spec, n, N, s, model, trials, master_seed, Gamma=None, fw_iters=5000,
                           lam=None):
    """Check both displayed LASSO error bounds trial by trial.

    Per trial: X (rows X_i, so Gamma = X / sqrt(N)), x0 s-sparse, Gaussian
    noise, LASSO with the rule's lambda, phi(3, S0) on the realized Gamma.
    A Frank-Wolfe upper bound on phi is used, which can only shrink the bounds.
    ``lam`` overrides the rule (the bounds are only claimed for the rule).
    """
    lam = model.lam(n, N) if lam is None else float(lam)
    fixed = None if Gamma is None else np.asarray(Gamma, dtype=float)
    if fixed is not None and fixed.shape != (N, n):
        raise ValueError(f"Gamma has shape {fixed.shape}, expected {(N, n)}")

    def trial(t):
        rng = derive_stream(master_seed, t)
        G = fixed if fixed is not None else generate_matrix(spec, N, n, rng)[0]
        X = G * math.sqrt(N)
        x0 = random_sparse_signal(n, s, rng)
        g = model.sigma * rng.normal(N)
        z = X @ x0 + g
        xhat = lasso(X, z, lam).xhat
        S0 = np.nonzero(x0)[0]
        k = S0.size
        pred = float(np.linalg.norm(G @ (xhat - x0)) ** 2)
        l1 = float(np.sum(np.abs(xhat - x0)))
        if k:
            phi = compatibility_phi(G, 3.0, S0, fw_iters=fw_iters).phi_upper
            base = model.t ** 2 + math.log(n)
            pred_rhs = 64 * model.sigma ** 2 * k * base / (N * phi ** 2) if phi > 0 else math.inf
            l1_rhs = 64 * model.sigma * k / phi ** 2 * math.sqrt(base / N) if phi > 0 else math.inf
        else:
            phi, pred_rhs, l1_rhs = math.inf, 0.0, 0.0
        out = {"phi_upper": phi, "prediction_error": pred, "prediction_bound": pred_rhs,
               "l1_error": l1, "l1_bound": l1_rhs,
               "prediction_violated": _violated(pred, pred_rhs),
               "l1_violated": _violated(l1, l1_rhs)}
        return TrialRecord("noisy-lasso", master_seed, {"trial": t, "lambda": lam}, out)

    records = _map(trial, range(trials))
    pv = sum(r.outcome["prediction_violated"] for r in records) / trials
    lv = sum(r.outcome["l1_violated"] for r in records) / trials
    either = sum(r.outcome["prediction_violated"] or r.outcome["l1_violated"] for r in records) / trials
    return {"lambda": lam, "bound_violation_freq": pv, "l1_bound_violation_freq": lv,
            "any_violation_freq": either, "reference_prob": 2 * math.exp(-model.t ** 2 / 2),
            "per_trial": records}
