"""Monte-Carlo throughput of every power policy against the analytic optimum.

One line per policy: empirical rate, batch-means standard error and the
distance to the optimal online value in standard errors.
"""

import argparse

from rbrcap.bounds import causal_upper
from rbrcap.model import validate_params
from rbrcap.simulator import make_policy, simulate

POLICIES = (("optimal", None), ("greedy", None), ("constant_fraction", 0.5),
            ("constant_fraction", 0.9), ("zero", None))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--bbar", type=float, default=2.0)
    ap.add_argument("--steps", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args(argv)

    params = validate_params(args.p, args.bbar)
    target = causal_upper(params)
    print(f"optimal online value {target:.6f} bits")
    for kind, fraction in POLICIES:
        rep = simulate(params, make_policy(kind, params, fraction), args.steps, args.seed)
        z = (rep.empirical_throughput_bits - target) / rep.std_error_bits if rep.std_error_bits else float("-inf")
        print(f"{rep.policy:<26} {rep.empirical_throughput_bits:.6f} +- {rep.std_error_bits:.6f}"
              f"  ({z:+.1f} se from optimum)")


if __name__ == "__main__":
    main()
