"""Command-line entry point: every analysis as a subcommand over on-disk suites.

Reports are machine-first (CSV/JSON) written under the output directory;
``--summary`` additionally prints a human-readable table. Running the same
inputs twice produces byte-identical reports. Exit codes: 0 success,
1 analysis error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path

from .core import FormatError, ScoreParams, validate_suite
from . import (distribution, fixtures, predictor, scaling, scorer, store,
               synth)

OUT_DIR_ENV = "MEMFORECAST_OUT"


def _parse_flops(text: str) -> int:
    """Exact integer flops from decimal or scientific notation."""
    try:
        value = Decimal(text)
    except InvalidOperation as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if value != value.to_integral_value():
        raise argparse.ArgumentTypeError(f"budget must be a whole number: {text!r}")
    return int(value)


def _parse_budgets(text: str) -> list[int]:
    return [_parse_flops(part) for part in text.split(",") if part.strip()]


def _parse_ref(text: str) -> tuple[str, str]:
    """Parse a model@checkpoint reference."""
    model, sep, label = text.rpartition("@")
    if not sep or not model or not label:
        raise argparse.ArgumentTypeError(
            f"expected MODEL@CHECKPOINT, got {text!r}")
    return model, label


def _out_path(args, name: str) -> Path:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / name


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def _write_json(path: Path, payload) -> None:
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _threshold(suite, args) -> int:
    return args.threshold if args.threshold else suite.threshold_default.cont_len


def _print_table(columns, rows) -> None:
    table = [[store.format_cell(v) for v in row] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in table)) if table else len(c)
              for i, c in enumerate(columns)]
    print("  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip())
    for row in table:
        print("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())


# ---------------------------------------------------------------------------
# Subcommands

def cmd_score(args) -> int:
    out = _out_path(args, args.records)
    header = scorer.scan_to_record_file(
        args.tokens, out, model_name=args.model,
        checkpoint_label=args.checkpoint, threads=args.threads)
    print(f"wrote {out} ({header.record_count} records, "
          f"prompt {header.prompt_len}, mask bits {header.max_cont_len})")
    return 0


def cmd_sets(args) -> int:
    mset = scorer.load_memorized_set(args.records, args.threshold,
                                     id_bound=args.id_bound)
    out = _out_path(args, args.set)
    store.write_set_file(out, args.threshold, mset.ids)
    print(f"wrote {out} ({len(mset)} ids at threshold {args.threshold})")
    return 0


def cmd_validate(args) -> int:
    suite = store.load_manifest(args.manifest)
    violations = validate_suite(suite)
    for v in violations:
        print(str(v), file=sys.stderr)
    if violations:
        print(f"{len(violations)} violation(s)", file=sys.stderr)
        return 1
    print(f"suite {suite.name!r} is valid "
          f"({len(suite.models)} models)")
    return 0


def cmd_predict(args) -> int:
    if args.grid_csv:
        rows = scaling.grid_from_csv(Path(args.grid_csv).read_text("utf-8"))
        model, label = args.predictor
        matches = [r for r in rows
                   if r.model == model and r.checkpoint == label]
        if not matches:
            raise ValueError(f"no grid row for {model}@{label}")
        row = matches[0]
        payload = {
            "source": "grid-csv",
            "predictor": f"{row.model}@{row.checkpoint}",
            "precision": row.precision,
            "recall": row.recall,
            "cost": row.cost,
        }
    else:
        suite = store.load_manifest(args.suite)
        n = _threshold(suite, args)
        pred = predictor.checkpoint_memorized_set(suite, *args.predictor, n)
        target = predictor.checkpoint_memorized_set(suite, *args.target, n)
        c = predictor.confusion(pred, target)
        precision, recall = predictor.precision_recall(c)
        payload = {
            "source": "suite",
            "predictor": pred.label,
            "target": target.label,
            "threshold": n,
            "common_support": predictor.common_support(pred, target),
            "confusion": {"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn},
            "precision": precision,
            "recall": recall,
            "phi": predictor.phi_correlation(pred, target),
        }
    _write_json(_out_path(args, args.report), payload)
    if args.summary:
        _print_table(("predictor", "precision", "recall"),
                     [(payload["predictor"], payload["precision"],
                       payload["recall"])])
    return 0


def cmd_correlate(args) -> int:
    suite = store.load_manifest(args.suite)
    n = _threshold(suite, args)
    sets = []
    if args.model:
        model = suite.model(args.model)
        for cp in model.checkpoints:
            sets.append(predictor.checkpoint_memorized_set(
                suite, model.name, cp.label, n))
    else:
        for model in suite.models:
            sets.append(predictor.final_memorized_set(suite, model.name, n))
    matrix = predictor.correlation_matrix(sets)
    out = _out_path(args, args.matrix)
    _write_text(out, matrix.to_csv())
    if args.summary:
        _print_table(("",) + matrix.labels,
                     [(label,) + row
                      for label, row in zip(matrix.labels, matrix.values)])
    return 0


def cmd_grid(args) -> int:
    if args.from_csv:
        rows = scaling.grid_from_csv(Path(args.from_csv).read_text("utf-8"))
        grid = scaling.PredictorGrid(tuple(rows))
    else:
        suite = store.load_manifest(args.suite)
        grid = scaling.predictor_grid(suite, args.target,
                                      args.threshold or None)
        for problem in grid.problems:
            print(f"warning: {problem}", file=sys.stderr)
    out = _out_path(args, args.grid)
    _write_text(out, grid.to_csv())
    if args.summary:
        _print_table(scaling.GRID_COLUMNS, [r.as_tuple() for r in grid.rows])
    return 0


def cmd_frontier(args) -> int:
    rows = scaling.grid_from_csv(Path(args.grid_csv).read_text("utf-8"))
    entries = scaling.equi_compute_frontier(rows, args.budgets)
    out = _out_path(args, args.frontier)
    _write_text(out, scaling.frontier_to_csv(entries))
    if args.summary:
        _print_table(("budget", "selection", "recall"),
                     [(e.budget,
                       f"{e.row.model}@{e.row.checkpoint}" if e.row else "infeasible",
                       e.row.recall if e.row else None)
                      for e in entries])
    return 0


def cmd_recommend(args) -> int:
    rows = scaling.grid_from_csv(Path(args.grid_csv).read_text("utf-8"))
    rec = scaling.recommend(args.budget, rows, args.min_recall)
    _write_json(_out_path(args, args.report), rec.as_dict())
    if rec.feasible:
        row = rec.row
        print(f"recommend {row.model}@{row.checkpoint} "
              f"(cost {row.cost}, recall {store.format_cell(row.recall)})")
    else:
        print("infeasible", end="")
        if rec.smallest_sufficient is not None:
            s = rec.smallest_sufficient
            print(f"; smallest budget achieving recall "
                  f">= {args.min_recall}: {s.cost} "
                  f"({s.model}@{s.checkpoint}, recall {store.format_cell(s.recall)})")
        elif args.min_recall is not None:
            print(f"; no grid row achieves recall >= {args.min_recall}")
        else:
            print("; no grid row is affordable")
    return 0


def cmd_distribution(args) -> int:
    header, chunks = store.read_match_arrays(args.records)
    n = args.threshold or header.max_cont_len
    if n > header.max_cont_len:
        raise ValueError(f"threshold {n} exceeds the record file's "
                         f"{header.max_cont_len} stored mask bits")
    hist = distribution.histogram(chunks, ScoreParams(cont_len=n))
    _write_text(_out_path(args, args.histogram), hist.to_csv())
    if not args.no_fit:
        report = distribution.tail_fit(hist, args.tail_min)
        _write_json(_out_path(args, args.fit), report.as_dict())
        if args.summary:
            _print_table(("spike_mass", "preferred", "exp_rate", "pl_exponent"),
                         [(report.spike_mass, report.preferred,
                           report.exp_rate, report.pl_exponent)])
    return 0


def cmd_compare_suites(args) -> int:
    suite_a = store.load_manifest(args.suite_a)
    suite_b = store.load_manifest(args.suite_b)
    result = predictor.compare_suites(suite_a, suite_b, args.threshold or None)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    _write_text(_out_path(args, args.table), result.to_csv())
    if args.summary:
        _print_table(("model", "fraction_a", "fraction_b", "delta"),
                     [(r.label, r.fraction_a, r.fraction_b, r.delta)
                      for r in result.rows])
    return 0


def cmd_synth(args) -> int:
    config = synth.load_config(args.config)
    out = _out_path(args, args.dir)
    result = synth.generate(config, out)
    print(f"wrote {result.manifest_path} and {result.truth_path}")
    return 0


def cmd_check(args) -> int:
    report = synth.ground_truth_check(args.manifest, args.truth)
    _write_text(_out_path(args, args.report), str(report) + "\n")
    print(str(report))
    return 0 if report.passed else 1


def cmd_fixtures(args) -> int:
    for name in fixtures.ALL:
        _write_text(_out_path(args, f"{name}.csv"), fixtures.fixture_text(name))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memforecast",
        description=("Measure verbatim memorization of training sequences and "
                     "forecast a target model's memorization from cheaper "
                     "predictors."))
    parser.add_argument("--out-dir", default=os.environ.get(OUT_DIR_ENV, "."),
                        help="directory all reports are written under "
                             f"(default: ${OUT_DIR_ENV} or the working directory)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="scan a token file into match records")
    p.add_argument("--tokens", required=True)
    p.add_argument("--records", required=True, help="output record file name")
    p.add_argument("--model", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sets", help="extract a memorized-set file from match records")
    p.add_argument("--records", required=True)
    p.add_argument("--set", required=True, help="output set file name")
    p.add_argument("--threshold", type=int, default=32)
    p.add_argument("--id-bound", type=int, default=None)
    p.set_defaults(func=cmd_sets)

    p = sub.add_parser("validate", help="check a suite manifest and its files")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("predict",
                       help="precision/recall of one predictor against a target")
    p.add_argument("--suite")
    p.add_argument("--grid-csv", help="replay a precomputed grid instead")
    p.add_argument("--predictor", type=_parse_ref, required=True,
                   metavar="MODEL@CHECKPOINT")
    p.add_argument("--target", type=_parse_ref, metavar="MODEL@CHECKPOINT")
    p.add_argument("--threshold", type=int, default=0)
    p.add_argument("--report", default="predict.json")
    p.add_argument("--summary", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("correlate", help="phi correlation matrix CSV")
    p.add_argument("--suite", required=True)
    p.add_argument("--model",
                   help="correlate this model's checkpoints; default: "
                        "final checkpoints across model sizes")
    p.add_argument("--threshold", type=int, default=0)
    p.add_argument("--matrix", default="correlation.csv")
    p.add_argument("--summary", action="store_true")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("grid", help="full predictor grid against one target")
    p.add_argument("--suite")
    p.add_argument("--target", type=_parse_ref, metavar="MODEL@CHECKPOINT")
    p.add_argument("--from-csv", help="re-export an existing grid CSV")
    p.add_argument("--threshold", type=int, default=0)
    p.add_argument("--grid", default="grid.csv")
    p.add_argument("--summary", action="store_true")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("frontier", help="equi-compute frontier over budgets")
    p.add_argument("--grid-csv", required=True)
    p.add_argument("--budgets", type=_parse_budgets, required=True,
                   help="comma-separated flops budgets")
    p.add_argument("--frontier", default="frontier.csv")
    p.add_argument("--summary", action="store_true")
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("recommend", help="predictor to train for a budget")
    p.add_argument("--grid-csv", required=True)
    p.add_argument("--budget", type=_parse_flops, required=True)
    p.add_argument("--min-recall", type=float, default=None)
    p.add_argument("--report", default="recommend.json")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("distribution",
                       help="score histogram, spike mass, and tail fits")
    p.add_argument("--records", required=True)
    p.add_argument("--threshold", type=int, default=0,
                   help="default: the file's stored mask width")
    p.add_argument("--tail-min", type=float,
                   default=distribution.DEFAULT_TAIL_MIN)
    p.add_argument("--histogram", default="histogram.csv")
    p.add_argument("--fit", default="tailfit.json")
    p.add_argument("--no-fit", action="store_true")
    p.add_argument("--summary", action="store_true")
    p.set_defaults(func=cmd_distribution)

    p = sub.add_parser("compare-suites",
                       help="per-model memorized-fraction deltas")
    p.add_argument("--suite-a", required=True)
    p.add_argument("--suite-b", required=True)
    p.add_argument("--threshold", type=int, default=0)
    p.add_argument("--table", default="compare.csv")
    p.add_argument("--summary", action="store_true")
    p.set_defaults(func=cmd_compare_suites)

    p = sub.add_parser("synth", help="generate a synthetic suite with ground truth")
    p.add_argument("--config", required=True)
    p.add_argument("--dir", default="synth-suite")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("check", help="verify a synthetic suite against its sidecar")
    p.add_argument("--manifest", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--report", default="check.txt")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("fixtures", help="export the bundled grid fixtures")
    p.set_defaults(func=cmd_fixtures)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.func is cmd_predict and not args.grid_csv:
        if not args.suite or not args.target:
            parser.error("predict needs either --grid-csv or --suite with --target")
    if args.func is cmd_grid and not args.from_csv:
        if not args.suite or not args.target:
            parser.error("grid needs either --from-csv or --suite with --target")
    try:
        return args.func(args)
    except (FormatError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
