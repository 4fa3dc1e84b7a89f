"""Command-line interface.

Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .bench import (
    SuiteEntry,
    SuiteSpec,
    cross_seed_baseline,
    detection_threshold,
    pairwise_layer_matrix,
    prepare_suite,
    run_benchmark,
)
from .bootstrap import bootstrap_compare
from .errors import InputError, NumericalError
from .formats import (
    ORIENTATIONS,
    ReportFile,
    atomic_write_text,
    dump_json,
    read_representation,
    read_representation_dir,
    read_scores_csv,
    write_representation,
)
from .metrics import ALL_METRICS, MetricId, distance, parse_metrics
from .perturb import delete_components
from .repcore import CenteringAxis, RawRepresentation, normalize
from .synthlab import PRESETS, SynthConfig, build_suite, preset_config

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _metrics_arg(value: str) -> list[MetricId]:
    try:
        return parse_metrics(value)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown metric in {value!r}; choose from {', '.join(m.value for m in ALL_METRICS)} or 'all'"
        )


def _k_list_arg(value: str):
    if value == "all":
        return "all"
    try:
        return [int(k) for k in value.split(",") if k.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k-list must be comma-separated integers or 'all', got {value!r}")


def _stamp(args) -> str | None:
    return datetime.now(timezone.utc).isoformat(timespec="seconds") if args.timestamp else None


def _summary_stream(args):
    # keep stdout parseable when the JSON report goes there
    return sys.stdout if args.out else sys.stderr


def _write_report(report: ReportFile, out: str | None) -> None:
    if out:
        report.write(out)
    else:
        sys.stdout.write(report.dumps())


def cmd_dist(args) -> None:
    a = normalize(read_representation(args.a, args.orientation), args.center)
    b = normalize(read_representation(args.b, args.orientation), args.center)
    if len(args.metric) == 1:
        print(f"{distance(args.metric[0], a, b):.6f}")
        return
    for m in args.metric:
        print(f"{m.value}\t{distance(m, a, b):.6f}")


def cmd_heatmap(args) -> None:
    model_a = read_representation_dir(args.models[0])
    model_b = read_representation_dir(args.models[1])
    mats = pairwise_layer_matrix(model_a, model_b, args.metric[0], args.center)
    atomic_write_text(args.out, mats.to_csv())


def cmd_pcdelete(args) -> None:
    rep = read_representation(args.input, args.orientation)
    out = RawRepresentation(
        data=delete_components(rep, args.k),
        model_id=rep.model_id,
        layer_id=rep.layer_id,
        tags={**rep.tags, "k": str(args.k)},
    )
    write_representation(out, args.output)


def cmd_threshold(args) -> None:
    rep = normalize(read_representation(args.rep, args.orientation), args.center)
    seeds = read_representation_dir(args.baseline_suite)
    p = rep.shape[0]
    ks = list(range(p)) if args.k_list == "all" else args.k_list
    results = {}
    for m in args.metric:
        baseline = cross_seed_baseline(seeds, m, args.center)
        res = detection_threshold(rep.data, ks, m, baseline, renormalize=True)
        results[m.value] = res.to_dict()
        frac = "none" if res.threshold_k is None else f"{res.threshold_fraction:.4f}"
        print(f"{m.value}\tbaseline={baseline:.6f}\tthreshold_k={res.threshold_k}\tfraction={frac}")
    report = ReportFile(
        kind="detection",
        payload=results,
        config={"metrics": [m.value for m in args.metric], "k_list": ks, "centering": args.center.value},
        created_at=_stamp(args),
    )
    if args.out:
        report.write(args.out)


def cmd_bench(args) -> None:
    suite = SuiteSpec.load(args.suite)
    report = run_benchmark(suite, workers=args.workers)
    for m, c in report.correlations.items():
        rho = "undefined" if c.rho is None else f"{c.rho:.4f}"
        tau = "undefined" if c.tau is None else f"{c.tau:.4f}"
        flags = " low-n" if c.low_n else ""
        print(f"{m}\trho={rho}\ttau={tau}\tn={c.n}{flags}", file=_summary_stream(args))
    _write_report(
        ReportFile(
            kind="benchmark",
            payload=report.to_dict(),
            config=suite.config(),
            fingerprint=report.fingerprint,
            created_at=_stamp(args),
        ),
        args.out,
    )
    if args.pairs_csv:
        atomic_write_text(args.pairs_csv, report.pair_table_csv())


def cmd_bootstrap(args) -> None:
    suite = SuiteSpec.load(args.suite)
    prepared = prepare_suite(suite)
    metrics = args.metrics or [m for m in suite.metrics]
    reports = bootstrap_compare(prepared, metrics, resamples=args.resamples, seed=args.seed, workers=args.workers)
    for r in reports:
        sig = "significant" if r.significant else "n.s."
        print(f"{r.pair[0]}-{r.pair[1]}\t{r.statistic}\t[{r.ci_low:.4f}, {r.ci_high:.4f}]\t{sig}", file=_summary_stream(args))
    config = {**suite.config(), "metrics": [MetricId(m).value for m in metrics]}
    config.update(resamples=args.resamples, seed=args.seed)
    _write_report(
        ReportFile(
            kind="bootstrap",
            payload={"reports": [r.to_dict() for r in reports]},
            config=config,
            fingerprint=prepared.fingerprint,
            created_at=_stamp(args),
        ),
        args.out,
    )


def cmd_synth_build(args) -> None:
    config = SynthConfig.load(args.config) if args.config else preset_config(args.preset)
    config = SynthConfig.from_dict({**config.to_dict(), "data_seed": args.seed})
    suite = build_suite(config, args.preset, out_dir=args.out)
    print(f"wrote {len(suite.entries)} entries to {Path(args.out) / 'suite.json'}")


def cmd_make_suite(args) -> None:
    scores = read_scores_csv(args.scores)
    base = Path(args.out).resolve().parent
    entries = []
    for path in sorted(Path(args.reps).glob("*.npy")):
        rep = read_representation(path)
        key = (rep.model_id, rep.layer_id)
        if key not in scores:
            if args.skip_missing:
                continue
            raise InputError(f"{path}: no score for model_id={key[0]!r} layer_id={key[1]}")
        rel = Path(path).resolve()
        try:
            rel = rel.relative_to(base)
        except ValueError:
            pass
        entries.append(
            SuiteEntry(functionality=scores[key], path=str(rel), model_id=rep.model_id, layer_id=rep.layer_id, tags=rep.tags)
        )
    suite = SuiteSpec(entries=tuple(entries), centering=args.center, metrics=args.metrics or ALL_METRICS)
    atomic_write_text(args.out, dump_json(suite.to_dict()))
    print(f"wrote {len(entries)} entries to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simbench", description="Representation dissimilarity measures and rank-correlation benchmarks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_center(p):
        p.add_argument("--center", type=CenteringAxis, default=CenteringAxis.PER_NEURON,
                       help="centering axis: per-neuron (default), per-example or none")

    def add_orientation(p):
        p.add_argument("--orientation", choices=ORIENTATIONS, default=None,
                       help="layout of NPY files that have no sidecar metadata")

    p = sub.add_parser("dist", help="distance between two representations")
    p.add_argument("--metric", type=_metrics_arg, default=list(ALL_METRICS))
    add_center(p)
    add_orientation(p)
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("heatmap", help="layer-by-layer distances between two models")
    p.add_argument("--metric", type=_metrics_arg, required=True)
    p.add_argument("--models", nargs=2, metavar=("A_DIR", "B_DIR"), required=True)
    p.add_argument("--out", required=True)
    add_center(p)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("pcdelete", help="delete the k smallest principal components")
    p.add_argument("--k", type=int, required=True)
    add_orientation(p)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_pcdelete)

    p = sub.add_parser("threshold", help="PC-deletion detection threshold against a cross-seed baseline")
    p.add_argument("--metric", type=_metrics_arg, default=list(ALL_METRICS))
    p.add_argument("--k-list", type=_k_list_arg, default="all")
    p.add_argument("--baseline-suite", required=True, help="directory of same-layer representations from other seeds")
    p.add_argument("--out")
    p.add_argument("--timestamp", action="store_true")
    add_center(p)
    add_orientation(p)
    p.add_argument("rep")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("bench", help="rank correlation of distance with functionality gap")
    p.add_argument("--suite", required=True)
    p.add_argument("--out")
    p.add_argument("--pairs-csv")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timestamp", action="store_true", help="record the creation time in the report")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("bootstrap", help="bootstrap intervals for differences between metrics")
    p.add_argument("--suite", required=True)
    p.add_argument("--resamples", type=int, default=2000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--metrics", type=_metrics_arg, default=None)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timestamp", action="store_true")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("synth", help="synthetic model suites")
    synth = p.add_subparsers(dest="synth_command", required=True)
    q = synth.add_parser("build-suite", help="train MLPs and write a suite")
    q.add_argument("--preset", choices=PRESETS, required=True)
    q.add_argument("--config", help="JSON config overriding the preset's")
    q.add_argument("--seed", type=int, required=True, help="dataset and probe-split seed")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_synth_build)

    p = sub.add_parser("make-suite", help="join a representation directory with a score CSV")
    p.add_argument("--reps", required=True)
    p.add_argument("--scores", required=True, help="CSV with header model_id,layer_id,score")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", type=_metrics_arg, default=None)
    p.add_argument("--skip-missing", action="store_true")
    add_center(p)
    p.set_defaults(func=cmd_make_suite)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"simbench: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, OSError, json.JSONDecodeError) as exc:
        print(f"simbench: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
