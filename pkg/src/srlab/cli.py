"""Command-line front end: ``srl <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 numerical or guard error.
Outputs are written atomically (temp file in the target directory, then rename).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import __version__
from .conditions import InconsistentRoutes, condition_report
from .core import GuardError, derive_stream, splitmix64_mix
from .ensembles import EnsembleSpec, Kind, derive_spiky_params, generate_matrix, spiky
from .experiments import (NoisyModel, counterexample_experiment, l0_experiment,
                          moment_growth_experiment, noisy_lasso_experiment, phase_diagram)
from .lp import IterationLimitError
from .solvers import ConvergenceError, NoSparseSolution

MASK64 = (1 << 64) - 1
NUMERIC_ERRORS = (GuardError, ValueError, IterationLimitError, ConvergenceError,
                  NoSparseSolution, InconsistentRoutes, ArithmeticError)


@dataclass(frozen=True)
class CliConfig:
    """Resolved command configuration, embedded in every JSON report."""
    command: str
    options: dict

    @classmethod
    def from_args(cls, args):
        opts = {k: v for k, v in vars(args).items() if k not in ("command", "out", "format")}
        return cls(args.command, opts)

    def as_dict(self):
        return {"command": self.command, **self.options}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    parser = _Parser(prog="srl", description="Sparse recovery experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, N_list=False, s_list=False, fmt="json", ensemble=True):
        p.add_argument("--seed", type=_u64, default=0)
        p.add_argument("--n", type=int, required=True)
        if N_list:
            p.add_argument("--N-list", dest="N_list", type=_int_list, required=True)
        else:
            p.add_argument("--N", type=int, required=True)
        if s_list:
            p.add_argument("--s-list", dest="s_list", type=_int_list, required=True)
        if ensemble:
            p.add_argument("--ensemble", choices=[k.value for k in Kind if k is not Kind.CONSTANT],
                           default="gaussian")
        p.add_argument("--delta", type=float, help="spiky selector mean (default: pinned)")
        p.add_argument("--p", type=float, help="spiky moment horizon (default: pinned)")
        p.add_argument("--R", type=float, help="spiky spike height (default: pinned)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=["csv", "json"], default=fmt)

    p = sub.add_parser("gen", help="sample one measurement matrix")
    common(p, fmt="csv")

    p = sub.add_parser("phase", help="Basis Pursuit success rates on an (N, s) grid")
    common(p, N_list=True, s_list=True, fmt="csv")
    p.add_argument("--trials", type=int, required=True)

    p = sub.add_parser("counterexample", help="spiky-ensemble failure of order-1 recovery")
    common(p, ensemble=False)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--slack", type=float, default=2.0)
    p.add_argument("--cross-check", action="store_true")

    p = sub.add_parser("l0-phase", help="l0 unique-recovery rates on an (N, s) grid")
    common(p, N_list=True, s_list=True, fmt="csv")
    p.add_argument("--trials", type=int, required=True)

    p = sub.add_parser("conditions", help="condition report for one sampled matrix")
    common(p)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--L", type=float, default=3.0)
    p.add_argument("--c0", type=float, default=3.0)
    p.add_argument("--u", type=float)
    p.add_argument("--directions", type=int, default=200)
    p.add_argument("--restarts", type=int, default=50)

    p = sub.add_parser("noisy-lasso", help="LASSO error bounds under Gaussian noise")
    common(p)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, help="override the lambda rule")

    p = sub.add_parser("moments", help="L_p norms of normalized sums")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--p-list", dest="p_list", type=_float_list, required=True)
    p.add_argument("--trials", type=int, default=100000, help="number of Monte Carlo sums")
    p.add_argument("--ensemble", choices=["gaussian", "rademacher", "symexp"], default="gaussian")
    p.add_argument("--square", action="store_true", help="use the centered square x^2 - 1")
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    return parser


# --- serialization ---------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite reals as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if hasattr(obj, "value") and isinstance(obj.value, str):  # enums
        return obj.value
    return obj


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def to_csv(rows, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[h]) for h in header])
    return buf.getvalue()


def to_json(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_atomic(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(target), prefix=".srl-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- commands --------------------------------------------------------------

def _spec(args, N):
    if args.ensemble == "spiky":
        params, diag = derive_spiky_params(args.n, N, delta=args.delta, p=args.p, R=args.R)
        return spiky(params), diag
    return EnsembleSpec(Kind(args.ensemble)), []


def _config(args):
    return CliConfig.from_args(args).as_dict()


def _emit(args, text_csv, obj):
    if args.format == "csv":
        write_atomic(args.out, text_csv())
    else:
        write_atomic(args.out, to_json(obj))


def cmd_gen(args):
    spec, _ = _spec(args, args.N)
    Gamma, _ = generate_matrix(spec, args.N, args.n, derive_stream(args.seed, 0))
    header = [f"c{j}" for j in range(args.n)]
    rows = [dict(zip(header, r)) for r in Gamma]
    _emit(args, lambda: to_csv(rows, header),
          {"config": _config(args), "ensemble": spec.as_dict(), "Gamma": Gamma})


def _cell_seed(seed, *keys):
    """Distinct master seed per grid cell, used when the ensemble changes with N."""
    for k in keys:
        seed = splitmix64_mix((seed ^ _rotl(k)) & MASK64)
    return seed


def _rotl(k):
    return ((k << 32) | (k >> 32)) & MASK64


PHASE_HEADER = ["ensemble", "n", "N", "s", "trials", "successes", "rate", "seed"]


def cmd_phase(args):
    if args.trials < 1:
        raise GuardError("trials must be >= 1")
    if len(set(args.N_list)) != len(args.N_list):
        raise GuardError("N-list contains duplicates")
    if args.ensemble != "spiky":
        spec, _ = _spec(args, args.N_list[0])
        rows = phase_diagram(spec, args.n, args.N_list, args.s_list, args.trials, args.seed).rows()
    else:
        # spiky parameters depend on N, so each N is its own table with its own seed
        rows = []
        for N in args.N_list:
            spec, _ = _spec(args, N)
            rows.extend(phase_diagram(spec, args.n, [N], args.s_list, args.trials,
                                      _cell_seed(args.seed, N)).rows())
    _emit(args, lambda: to_csv(rows, PHASE_HEADER), {"config": _config(args), "cells": rows})


def cmd_l0(args):
    if args.trials < 1:
        raise GuardError("trials must be >= 1")
    rows = []
    for N in args.N_list:
        spec, _ = _spec(args, N)
        for s in args.s_list:
            seed = _cell_seed(args.seed, N, s)
            rate = 0.0 if s > N else l0_experiment(spec, args.n, s, N, args.trials, seed)
            rows.append({"ensemble": spec.kind.value, "n": args.n, "N": N, "s": s,
                         "trials": args.trials, "successes": int(round(rate * args.trials)),
                         "rate": rate, "seed": seed})
    _emit(args, lambda: to_csv(rows, PHASE_HEADER), {"config": _config(args), "cells": rows})


CE_HEADER = ["trial", "competitor_norm", "failure", "perturbation_event", "missing_rows",
             "column_norm", "column_leg"]


def cmd_counterexample(args):
    res = counterexample_experiment(args.n, args.N, args.trials, args.seed, slack=args.slack,
                                    delta=args.delta, p=args.p, R=args.R,
                                    cross_check=args.cross_check)
    header = CE_HEADER + (["cone_intersects", "column1_vertex", "phi_1_e1_upper"]
                          if args.cross_check else [])
    rows = [dict(r.outcome, trial=r.params["trial"]) for r in res.per_trial]
    out = res.as_dict()
    out["config"] = _config(args)
    _emit(args, lambda: to_csv(rows, header), out)


def cmd_conditions(args):
    spec, _ = _spec(args, args.N)
    rng = derive_stream(args.seed, 0)
    Gamma, _ = generate_matrix(spec, args.N, args.n, rng)
    rep = condition_report(Gamma, args.s, L=args.L, c0=args.c0, restarts=args.restarts,
                           rng=derive_stream(args.seed, 1), spec=spec, u=args.u,
                           directions=args.directions)
    d = rep.as_dict()
    flat = [{"key": k, "value": v} for k, v in sorted(_flatten(d).items())]
    _emit(args, lambda: to_csv(flat, ["key", "value"]),
          {"config": _config(args), "ensemble": spec.as_dict(), "report": d})


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = " ".join(_fmt(x) for x in v)
        else:
            out[key] = v
    return out


LASSO_HEADER = ["trial", "phi_upper", "prediction_error", "prediction_bound", "prediction_violated",
                "l1_error", "l1_bound", "l1_violated"]


def cmd_noisy_lasso(args):
    spec, _ = _spec(args, args.N)
    model = NoisyModel(args.sigma, args.t)
    res = noisy_lasso_experiment(spec, args.n, args.N, args.s, model, args.trials, args.seed,
                                 lam=args.lam)
    rows = [dict(r.outcome, trial=r.params["trial"]) for r in res["per_trial"]]
    out = {k: v for k, v in res.items() if k != "per_trial"}
    out["per_trial"] = rows
    out["config"] = _config(args)
    _emit(args, lambda: to_csv(rows, LASSO_HEADER), out)


def cmd_moments(args):
    spec = EnsembleSpec(Kind(args.ensemble))
    rows = moment_growth_experiment(spec, args.p_list, args.N, args.trials, args.seed,
                                    square=args.square)
    _emit(args, lambda: to_csv(rows, ["p", "lhs", "ratio", "gaussian_ref"]),
          {"config": _config(args), "rows": rows})


DISPATCH = {"gen": cmd_gen, "phase": cmd_phase, "counterexample": cmd_counterexample,
            "l0-phase": cmd_l0, "conditions": cmd_conditions, "noisy-lasso": cmd_noisy_lasso,
            "moments": cmd_moments}


def run(argv=None):
    """Parse, dispatch, write. Returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        sys.stderr.write(str(e))
        return 1
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    try:
        DISPATCH[args.command](args)
    except NUMERIC_ERRORS as e:
        sys.stderr.write(f"srl {args.command}: {type(e).__name__}: {e}\n")
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
