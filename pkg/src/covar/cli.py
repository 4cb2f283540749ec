"""Command-line front end.

Subcommands: decompose, select, simulate, compare, ece, grid.  All but
``grid`` print a JSON run report to stdout; ``grid`` prints CSV contour
samples.  Exit status: 0 on success, 2 on any input/validation problem,
1 on internal errors.  Identical invocations on identical inputs produce
byte-identical output.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import __version__
from .baseline import ece as compute_ece
from .decomposition import EpsilonPolicy, decompose_batch, decompose_sample
from .errors import CovarError, InfiniteCrossEntropyError
from .io import (
    format_float,
    load_labels,
    load_matrix,
    matrix_digest,
    parse_report,  # noqa: F401  (re-exported convenience for report consumers)
    save_matrix,
    serialize_report,
)
from .pcos import DEFAULT_LAMBDA, pcos
from .simulator import CovarPolicy, SyntheticConfig, evaluate_policies, generate
from .stats import ProbabilityBatch, compute_stats
from .baseline import ThresholdPolicy

_REPORT_VERSION = 1


def _fin(x: float):
    """Reports cannot hold non-finite floats; map them to null."""
    x = float(x)
    return x if math.isfinite(x) else None


def _input_section(batch: ProbabilityBatch, source: str) -> dict:
    return {
        "source": source,
        "digest": matrix_digest(batch),
        "n_samples": batch.n_samples,
        "n_classes": batch.n_classes,
    }


def _report(kind: str, **sections) -> dict:
    doc = {"report": kind, "format_version": _REPORT_VERSION, "tool": f"covar {__version__}"}
    doc.update(sections)
    return doc


def _retention_list(retention: dict) -> list:
    return [
        {
            "label": r.label,
            "count": r.count,
            "retained": r.retained,
            "retention": _fin(r.retention),
            "inv_sqrt_count": _fin(r.inv_sqrt_count),
        }
        for _, r in sorted(retention.items())
    ]


# ---------------------------------------------------------------------------
# subcommands


def _cmd_decompose(args) -> dict:
    batch = load_matrix(args.input, args.format)
    if args.epsilon == "adaptive":
        policy = EpsilonPolicy.adaptive()
        eps_echo: object = "adaptive"
    else:
        try:
            value = float(args.epsilon)
        except ValueError:
            raise CovarError(
                f"--epsilon must be 'adaptive' or a number, got {args.epsilon!r}"
            ) from None
        policy = EpsilonPolicy.fixed(value)
        eps_echo = value
    sts = compute_stats(batch)
    per = []
    for i, s in enumerate(sts):
        try:
            per.append(decompose_sample(s, policy, paper_literal=args.paper_literal))
        except InfiniteCrossEntropyError as exc:
            raise InfiniteCrossEntropyError(f"sample {i}: {exc}") from None
    agg = decompose_batch(sts, policy, paper_literal=args.paper_literal)
    samples = []
    for i, (s, d) in enumerate(zip(sts, per)):
        samples.append(
            {
                "index": i,
                "max_class": s.max_class,
                "max_conf": s.max_conf,
                "rcv": s.rcv,
                "rho": s.rho,
                "degenerate": s.degenerate,
                "epsilon": d.epsilon,
                "g_coeff": d.g_coeff,
                "exact_ce": d.exact_ce,
                "approx_ce": d.approx_ce,
                "middle_term": d.middle_term,
                "f_term": d.f_term,
                "remainder_bound": _fin(d.remainder_bound),
                "remainder_actual": d.remainder_actual,
                "assumption_ok": d.assumption_ok,
            }
        )
    return _report(
        "decompose",
        input=_input_section(batch, str(args.input)),
        config={"epsilon": eps_echo, "paper_literal": args.paper_literal},
        samples=samples,
        batch={
            "mc_bar": agg.mc_bar,
            "g_bar": agg.g_bar,
            "v_bar": agg.v_bar,
            "srcv": agg.srcv,
            "cov_gv": agg.cov_gv,
            "batch_ce": agg.batch_ce,
            "lower_bound": agg.lower_bound,
            "remainder_batch_bound": _fin(agg.remainder_batch_bound),
            "n_samples": agg.n_samples,
        },
    )


def _partition_section(result, lam: float, kind: str) -> dict:
    clusters = []
    for c in (0, 1):
        if result.cluster_stats.size[c] > 0:
            clusters.append(
                {
                    "cluster": c,
                    "size": int(result.cluster_stats.size[c]),
                    "mean": [_fin(x) for x in result.cluster_stats.mean[c]],
                    "std": [_fin(x) for x in result.cluster_stats.std[c]],
                }
            )
    return {
        "embedding": kind,
        "lambda": lam,
        "reliable_cluster": result.reliable_cluster,
        "rank_deficient": result.rank_deficient,
        "clusters": clusters,
    }


def _cmd_select(args) -> dict:
    batch = load_matrix(args.input, args.format)
    sts = compute_stats(batch)
    result = pcos(batch, args.embedding, args.lam, alg1_exponent=args.alg1_exponent)
    k = batch.n_classes
    samples = []
    for i, s in enumerate(sts):
        samples.append(
            {
                "index": i,
                "max_class": s.max_class,
                "max_conf": s.max_conf,
                "rcv": s.rcv,
                "g_coeff": (k - 1) ** 2 / (2.0 * (1.0 - s.safe_conf)),
                "weight": float(result.weights[i]),
                "cluster": int(result.assignment[i]),
                "preserved": bool(result.preserved_mask[i]),
            }
        )
    return _report(
        "select",
        input=_input_section(batch, str(args.input)),
        config={
            "embedding": args.embedding,
            "lambda": args.lam,
            "alg1_exponent": args.alg1_exponent,
        },
        samples=samples,
        partition=_partition_section(result, args.lam, args.embedding),
    )


def _synthetic_config(args) -> SyntheticConfig:
    if args.priors is None:
        priors = tuple([1.0 / args.k] * args.k)
    else:
        try:
            priors = tuple(float(x) for x in args.priors.split(","))
        except ValueError:
            raise CovarError(f"--priors must be comma-separated numbers, got {args.priors!r}") from None
    return SyntheticConfig(
        n_samples=args.n,
        n_classes=args.k,
        class_priors=priors,
        base_accuracy=args.accuracy,
        overconfidence_temp=args.temp,
        residual_mode=args.residual,
        seed=args.seed,
    )


def _config_echo(config: SyntheticConfig) -> dict:
    return {
        "n_samples": config.n_samples,
        "n_classes": config.n_classes,
        "class_priors": [float(p) for p in config.class_priors],
        "base_accuracy": config.base_accuracy,
        "overconfidence_temp": config.overconfidence_temp,
        "residual_mode": config.residual_mode,
        "seed": config.seed,
    }


def _cmd_simulate(args) -> dict:
    config = _synthetic_config(args)
    batch, labels = generate(config)
    if args.out:
        save_matrix(batch, args.out, args.format)
    if args.labels_out:
        with open(args.labels_out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(str(int(y)) for y in labels) + "\n")
    sts = compute_stats(batch)
    correct = [s.max_class == int(y) for s, y in zip(sts, labels)]
    samples = [
        {
            "index": i,
            "true_label": int(labels[i]),
            "max_class": s.max_class,
            "correct": bool(correct[i]),
            "max_conf": s.max_conf,
            "rcv": s.rcv,
        }
        for i, s in enumerate(sts)
    ]
    return _report(
        "simulate",
        input=_input_section(batch, "simulate"),
        config=_config_echo(config),
        samples=samples,
        summary={
            "accuracy": float(np.mean(correct)),
            "mean_max_conf": float(np.mean([s.max_conf for s in sts])),
            "mean_rcv": float(np.mean([s.rcv for s in sts])),
        },
    )


def _cmd_compare(args) -> dict:
    if args.input is not None:
        if args.labels is None:
            raise CovarError("compare with --input also needs --labels")
        batch = load_matrix(args.input, args.format)
        labels = load_labels(args.labels)
        source = str(args.input)
        config_echo: dict = {}
    else:
        config = _synthetic_config(args)
        batch, labels = generate(config)
        source = "simulate"
        config_echo = _config_echo(config)
    policies = [
        ThresholdPolicy(tau=args.tau),
        CovarPolicy(kind=args.embedding, lam=args.lam),
    ]
    evals = evaluate_policies(batch, labels, policies)
    config_echo.update({"tau": args.tau, "embedding": args.embedding, "lambda": args.lam})
    return _report(
        "compare",
        input=_input_section(batch, source),
        config=config_echo,
        policies=[
            {
                "name": e.name,
                "n_selected": e.n_selected,
                "selected_accuracy": _fin(e.selected_accuracy),
                "weighted_accuracy": _fin(e.weighted_accuracy),
                "mean_weight": e.mean_weight,
                "ece": e.ece,
                "retention": _retention_list(e.retention),
            }
            for e in evals
        ],
    )


def _cmd_ece(args) -> dict:
    batch = load_matrix(args.input, args.format)
    labels = load_labels(args.labels)
    if labels.shape[0] != batch.n_samples:
        raise CovarError(
            f"{labels.shape[0]} labels for {batch.n_samples} samples"
        )
    sts = compute_stats(batch)
    conf = np.array([s.max_conf for s in sts])
    correct = np.array([s.max_class for s in sts]) == labels
    report = compute_ece(conf, correct, n_bins=args.bins)
    bins = []
    for b in range(report.n_bins):
        bins.append(
            {
                "lower": float(report.bin_edges[b]),
                "upper": float(report.bin_edges[b + 1]),
                "count": int(report.bin_count[b]),
                "confidence": _fin(report.bin_confidence[b]),
                "accuracy": _fin(report.bin_accuracy[b]),
            }
        )
    return _report(
        "ece",
        input=_input_section(batch, str(args.input)),
        config={"bins": args.bins, "labels": str(args.labels)},
        calibration={"n_bins": report.n_bins, "ece": report.ece, "bins": bins},
    )


def _cmd_grid(args) -> str:
    if not 0.0 < args.p_min <= args.p_max < 1.0:
        raise CovarError("need 0 < p-min <= p-max < 1")
    if not 0.0 <= args.v_min <= args.v_max:
        raise CovarError("need 0 <= v-min <= v-max")
    k = args.k
    ps = np.linspace(args.p_min, args.p_max, args.p_steps)
    vs = np.linspace(args.v_min, args.v_max, args.v_steps)
    lines = ["p,v,ce"]
    for p in ps:
        g = (k - 1) ** 2 / (2.0 * (1.0 - p))
        for v in vs:
            ce = -math.log(p) + g * v
            lines.append(f"{format_float(p)},{format_float(v)},{format_float(ce)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# wiring


def _add_matrix_args(sp, required: bool = True) -> None:
    sp.add_argument("--input", required=required, help="probability matrix file")
    sp.add_argument(
        "--format",
        choices=("csv", "binary"),
        default=None,
        help="matrix format (default: by extension, .csv -> csv else binary)",
    )


def _add_simulate_args(sp, required: bool = True) -> None:
    sp.add_argument("--n", type=int, required=required, help="number of samples")
    sp.add_argument("--k", type=int, required=required, help="number of classes")
    sp.add_argument("--priors", default=None, help="comma-separated class priors (default uniform)")
    sp.add_argument("--accuracy", type=float, default=0.75, help="base argmax accuracy")
    sp.add_argument("--temp", type=float, default=1.0, help="overconfidence temperature (<1 sharpens)")
    sp.add_argument("--residual", choices=("uniform", "bimodal"), default="uniform")
    sp.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covar",
        description="Confidence-variance reliability analysis for pseudo-label selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("decompose", help="per-sample and batch CE decomposition")
    _add_matrix_args(sp)
    sp.add_argument("--epsilon", default="adaptive", help="'adaptive' or a fixed value")
    sp.add_argument("--paper-literal", action="store_true", help="use the sign-flipped middle term")
    sp.set_defaults(func=_cmd_decompose)

    sp = sub.add_parser("select", help="PCOS reliability weights")
    _add_matrix_args(sp)
    sp.add_argument("--embedding", choices=("theory", "raw"), default="theory")
    sp.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    sp.add_argument("--alg1-exponent", action="store_true", help="use the wider exp(-(d/2s)^2) factor")
    sp.set_defaults(func=_cmd_select)

    sp = sub.add_parser("simulate", help="generate a synthetic batch")
    _add_simulate_args(sp)
    sp.add_argument("--out", default=None, help="also write the matrix here")
    sp.add_argument("--labels-out", default=None, help="also write true labels here")
    sp.add_argument("--format", choices=("csv", "binary"), default=None)
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("compare", help="fixed threshold vs covar-pcos on labelled data")
    _add_matrix_args(sp, required=False)
    sp.add_argument("--labels", default=None, help="true labels (with --input)")
    _add_simulate_args(sp, required=False)
    sp.add_argument("--tau", type=float, default=0.95)
    sp.add_argument("--embedding", choices=("theory", "raw"), default="theory")
    sp.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    sp.set_defaults(func=_cmd_compare)

    sp = sub.add_parser("ece", help="binned expected calibration error")
    _add_matrix_args(sp)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--bins", type=int, default=15)
    sp.set_defaults(func=_cmd_ece)

    sp = sub.add_parser("grid", help="CE contour samples over (p, v) as CSV")
    sp.add_argument("--k", type=int, default=21)
    sp.add_argument("--p-min", type=float, default=0.5)
    sp.add_argument("--p-max", type=float, default=0.999)
    sp.add_argument("--v-min", type=float, default=0.0)
    sp.add_argument("--v-max", type=float, default=0.01)
    sp.add_argument("--p-steps", type=int, default=50)
    sp.add_argument("--v-steps", type=int, default=50)
    sp.add_argument("--emit", default="-", help="output path ('-' for stdout)")
    sp.set_defaults(func=_cmd_grid)

    return parser


def run_cli(argv: list[str] | None = None) -> int:
    """Parse argv, run one subcommand, write its report; returns exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    try:
        if args.command == "compare" and args.input is None and (args.n is None or args.k is None):
            parser.error("compare needs --input/--labels or the simulate flags (--n, --k)")
        out = args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except CovarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if isinstance(out, dict):
        sys.stdout.write(serialize_report(out))
    elif args.command == "grid" and args.emit != "-":
        with open(args.emit, "w", encoding="utf-8") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return 0


def main() -> None:
    sys.exit(run_cli())
