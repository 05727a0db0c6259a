"""Command-line front end.

Subcommands: ``run`` (repeated conformal trials on a dataset bundle),
``oracle`` (same-label aggregation sweep), ``synth`` (write a synthetic
bundle), ``image`` (graph-free correction on pre-split files), and
``knn-cache`` (build and store a similarity graph).

Exit codes: 0 success, 1 validation error (bad inputs or arguments),
2 runtime error.  All randomness flows from ``--seed``; the env var
``GRAPHCP_THREADS`` sets the trial-level thread count.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import harness, matrixio
from .conformal import calibrate, predict_sets
from .errors import ValidationError
from .graph import KnnConfig, build_knn_graph, save_knn_cache
from .metrics import MetricSummary, evaluate, sscv
from .propagate import SnapsParams, image_snaps
from .report import TrialResult, make_report, report_to_dict, write_report
from .scores import XiPolicy, aps_scores


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; bad arguments are validation
    # errors here (exit 1), so re-raise instead
    def error(self, message):
        raise ValidationError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="graphcp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="repeated conformal trials on a bundle")
    run.add_argument("--manifest", required=True)
    run.add_argument("--method", choices=list(harness.METHODS), default="snaps")
    run.add_argument("--base", choices=list(harness.BASES), default="aps")
    run.add_argument("--alpha", type=float, default=0.05)
    run.add_argument("--splits", type=int, default=10, help="model splits")
    run.add_argument("--trials", type=int, default=100, help="conformal splits per model split")
    run.add_argument("--k", type=int, default=20, help="similarity-graph neighbor count")
    run.add_argument("--sample-m", type=int, default=None,
                     help="candidate sample size for large graphs")
    run.add_argument("--grid-step", type=float, default=0.05)
    run.add_argument("--calib-size", type=int, default=None,
                     help="fixed calibration size (default: min(1000, pool/2) rule)")
    run.add_argument("--lambda", dest="lam", type=float, default=None,
                     help="force the similarity weight (skips tuning; needs --mu)")
    run.add_argument("--mu", type=float, default=None,
                     help="force the structural weight (skips tuning)")
    run.add_argument("--renormalize", action="store_true",
                     help="rescale probability rows instead of rejecting them")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True)
    run.add_argument("--format", choices=["json", "csv"], default="json")

    oracle = sub.add_parser("oracle", help="same-label aggregation sweep")
    oracle.add_argument("--manifest", required=True)
    oracle.add_argument("--alpha", type=float, default=0.05)
    oracle.add_argument("--m-sweep", default="0,1,2,4,8,16,32")
    oracle.add_argument("--w", type=float, default=0.5)
    oracle.add_argument("--trials", type=int, default=20)
    oracle.add_argument("--calib-size", type=int, default=None)
    oracle.add_argument("--renormalize", action="store_true")
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--out", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic bundle")
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--classes", type=int, required=True)
    synth.add_argument("--dim", type=int, required=True)
    synth.add_argument("--homophily", type=float, default=0.8)
    synth.add_argument("--class-sep", type=float, default=1.5)
    synth.add_argument("--noise", type=float, default=1.0)
    synth.add_argument("--avg-degree", type=float, default=10.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out-dir", required=True)

    image = sub.add_parser("image", help="graph-free correction on pre-split files")
    image.add_argument("--probs-calib", required=True)
    image.add_argument("--probs-test", required=True)
    image.add_argument("--feats-calib", required=True)
    image.add_argument("--feats-test", required=True)
    image.add_argument("--labels-calib", required=True)
    image.add_argument("--labels-test", default=None,
                       help="optional; enables coverage/sh/sscv in the report")
    image.add_argument("--k", type=int, default=5)
    image.add_argument("--eta", type=float, default=0.5)
    image.add_argument("--alpha", type=float, default=0.1)
    image.add_argument("--seed", type=int, default=0)
    image.add_argument("--out", required=True)
    image.add_argument("--format", choices=["json", "csv"], default="json")

    cache = sub.add_parser("knn-cache", help="build and store a similarity graph")
    cache.add_argument("--features", required=True)
    cache.add_argument("--k", type=int, required=True)
    cache.add_argument("--sample-m", type=int, default=None)
    cache.add_argument("--min-similarity", type=float, default=0.0)
    cache.add_argument("--seed", type=int, default=0)
    cache.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    bundle = matrixio.load_bundle(args.manifest, renormalize=args.renormalize)
    params = None
    if (args.lam is None) != (args.mu is None):
        raise ValidationError("--lambda and --mu must be given together")
    if args.mu is not None:
        lam = args.lam if args.method == "snaps" else 0.0
        params = SnapsParams(lam, args.mu)
    cfg = harness.ExperimentConfig(
        alpha=args.alpha, method=args.method, base=args.base,
        knn=KnnConfig(k=args.k, sample_size=args.sample_m, seed=args.seed),
        grid_step=args.grid_step,
        n_model_splits=args.splits, n_conformal_splits=args.trials,
        calib_rule="fixed" if args.calib_size else "min_1000_half",
        calib_size=args.calib_size or 1000,
        seed=args.seed, params=params,
    )
    report = harness.run_experiment(bundle, cfg)
    write_report(report, args.out, format=args.format)
    agg = report.aggregate
    print(f"{bundle.name} method={args.method} alpha={args.alpha}: "
          f"coverage={agg['coverage']['mean']:.4f} size={agg['size']['mean']:.3f} "
          f"sh={agg['sh']['mean']:.4f} -> {args.out}")
    return 0


def _cmd_oracle(args) -> int:
    bundle = matrixio.load_bundle(args.manifest, renormalize=args.renormalize)
    try:
        m_sweep = tuple(int(tok) for tok in args.m_sweep.split(",") if tok.strip())
    except ValueError:
        raise ValidationError(f"bad --m-sweep: {args.m_sweep!r}") from None
    reports = harness.run_oracle_experiment(
        bundle, alpha=args.alpha, m_sweep=m_sweep, w=args.w,
        n_trials=args.trials,
        calib_rule="fixed" if args.calib_size else "min_1000_half",
        calib_size=args.calib_size or 1000, seed=args.seed,
    )
    payload = {
        "m_sweep": list(m_sweep),
        # one report object per m, in sweep order
        "reports": [report_to_dict(r) for r in reports],
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    for m, rep in zip(m_sweep, reports):
        agg = rep.aggregate
        print(f"m={m}: coverage={agg['coverage']['mean']:.4f} "
              f"size={agg['size']['mean']:.3f}")
    return 0


def _cmd_synth(args) -> int:
    bundle = harness.generate_synthetic(
        n=args.n, num_classes=args.classes, dim=args.dim,
        homophily=args.homophily, class_sep=args.class_sep,
        noise=args.noise, seed=args.seed, avg_degree=args.avg_degree,
    )
    manifest = matrixio.save_bundle(bundle, args.out_dir)
    print(manifest)
    return 0


def _cmd_image(args) -> int:
    p_cal = matrixio.load_matrix(args.probs_calib)
    p_test = matrixio.load_matrix(args.probs_test)
    f_cal = matrixio.load_matrix(args.feats_calib)
    f_test = matrixio.load_matrix(args.feats_test)
    y_cal = matrixio.load_labels(args.labels_calib, p_cal.shape[1])
    if y_cal.shape[0] != p_cal.shape[0]:
        raise ValidationError("calibration labels/probabilities row mismatch")
    n_cal, n_test = p_cal.shape[0], p_test.shape[0]

    xi = XiPolicy("uniform", seed=args.seed)
    s_cal = aps_scores(p_cal, xi, node_ids=np.arange(n_cal))
    s_test = aps_scores(p_test, xi, node_ids=n_cal + np.arange(n_test))
    corr_cal = image_snaps(s_cal, s_cal, f_cal, f_cal, k=args.k, eta=args.eta,
                           exclude_self=True)
    corr_test = image_snaps(s_test, s_cal, f_test, f_cal, k=args.k, eta=args.eta)

    full = np.concatenate([corr_cal.values, corr_test.values], axis=0)
    labels_full = np.concatenate([y_cal, np.zeros(n_test, dtype=np.int64)])
    threshold = calibrate(full, labels_full, np.arange(n_cal), args.alpha)
    sets = predict_sets(full, threshold, n_cal + np.arange(n_test))

    if args.labels_test:
        y_test = matrixio.load_labels(args.labels_test, p_test.shape[1])
        if y_test.shape[0] != n_test:
            raise ValidationError("test labels/probabilities row mismatch")
        labels_full[n_cal:] = y_test
        summary = evaluate(sets, labels_full)
        summary = replace(summary, sscv=sscv(sets, labels_full, alpha=args.alpha))
    else:
        summary = MetricSummary(coverage=None, size=float(sets.sizes().mean()),
                                sh=None, sscv=None, n_eval=n_test)
    trial = TrialResult(0, 0, summary, {"k": args.k, "eta": args.eta})
    config = {"mode": "image", "alpha": args.alpha, "k": args.k, "eta": args.eta,
              "calib_size": n_cal, "n_test": n_test, "seed": args.seed}
    write_report(make_report(config, [trial]), args.out, format=args.format)
    size = summary.size
    cov = "n/a" if summary.coverage is None else f"{summary.coverage:.4f}"
    print(f"image mode: coverage={cov} size={size:.3f} -> {args.out}")
    return 0


def _cmd_knn_cache(args) -> int:
    features = matrixio.load_matrix(args.features)
    cfg = KnnConfig(k=args.k, sample_size=args.sample_m, seed=args.seed,
                    min_similarity=args.min_similarity)
    graph = build_knn_graph(features, cfg)
    save_knn_cache(graph, args.out, matrixio.file_sha256(args.features), cfg)
    print(f"{args.out}: n={graph.n} arcs={graph.nnz}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "oracle": _cmd_oracle,
    "synth": _cmd_synth,
    "image": _cmd_image,
    "knn-cache": _cmd_knn_cache,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
