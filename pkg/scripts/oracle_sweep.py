#!/usr/bin/env python3
"""Same-label aggregation sweep: how set size shrinks as more same-label
peers are mixed into each node's scores (requires ground-truth labels, so
this is a diagnostic of how much label information aggregation could buy).

Example:
    python3 scripts/oracle_sweep.py --n 3000 --classes 6 --trials 50
"""

import argparse

import graphcp as g


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=3000)
    ap.add_argument("--classes", type=int, default=6)
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--class-sep", type=float, default=2.0)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--m-sweep", default="0,1,2,4,8,16,32")
    ap.add_argument("--w", type=float, default=0.5)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    bundle = g.generate_synthetic(
        n=args.n, num_classes=args.classes, dim=args.dim, homophily=0.8,
        class_sep=args.class_sep, noise=1.0, seed=args.seed,
    )
    m_sweep = tuple(int(tok) for tok in args.m_sweep.split(","))
    reports = g.run_oracle_experiment(
        bundle, alpha=args.alpha, m_sweep=m_sweep, w=args.w,
        n_trials=args.trials, seed=args.seed,
    )
    print(f"{'m':>4} {'coverage':>10} {'size':>8}")
    for report in reports:
        a = report.aggregate
        print(f"{report.config['m']:>4} {a['coverage']['mean']:>10.4f} "
              f"{a['size']['mean']:>8.3f}")


if __name__ == "__main__":
    main()
