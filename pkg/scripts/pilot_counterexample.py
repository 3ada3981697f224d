"""Pilot for the spiky counterexample: failure and spike-event frequencies against delta.

Prints one line per selector mean; the pinned value and the value that puts each
row's event at 1 - 1/(4N) are always included.
"""
import argparse

from srlab.ensembles import derive_spiky_params, event_delta, single_spike_row_prob
from srlab.experiments import counterexample_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=10000)
    ap.add_argument("--N", type=int, default=4)
    ap.add_argument("--trials", type=int, default=40)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    pinned, _ = derive_spiky_params(args.n, args.N)
    deltas = sorted([pinned.delta * f for f in (0.5, 1.0, 4.0)] + [event_delta(args.N, args.n)])
    print("delta        R        failure  event  per-row^N")
    for d in deltas:
        r = counterexample_experiment(args.n, args.N, args.trials, args.seed, delta=d)
        row = single_spike_row_prob(d, args.N, args.n) ** args.N
        print(f"{d:.5e}  {r.params['R']:7.3f}  {r.failure_freq:7.2f}  "
              f"{r.perturbation_freq:5.2f}  {row:9.3f}")


if __name__ == "__main__":
    main()
