"""Command-line front door: ingest, build, query, baseline, inspect.

Results stream to stdout as JSON lines or CSV.  Failures print a single
machine-readable JSON record to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .baselines import METHODS
from .corpus import Corpus, QueryClause
from .errors import TopolinkError
from .resolution import SpatialRes

_RESULT_COLUMNS = ["dataset1", "function1", "dataset2", "function2", "spatial", "temporal",
                   "mode", "tau", "rho", "p_value", "significant", "n_sigma", "n_pos",
                   "n_neg", "seed"]


def _split_names(value: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in value.split(",") if part.strip())


def _parse_threshold(value: str):
    # dataset:function=theta_plus,theta_minus  (either theta may be blank)
    try:
        target, _, spec = value.partition("=")
        dataset, _, function = target.partition(":")
        plus_text, _, minus_text = spec.partition(",")
        plus = float(plus_text) if plus_text.strip() else None
        minus = float(minus_text) if minus_text.strip() else None
        if not dataset or not function or (plus is None and minus is None):
            raise ValueError
        return (dataset, function, plus, minus)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected dataset:function=theta_plus,theta_minus, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topolink",
        description="Discover statistically significant topology-based relationships "
                    "among spatio-temporal datasets.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--corpus", default=os.environ.get("TOPOLINK_CORPUS", "corpus"),
                        help="corpus directory (default: $TOPOLINK_CORPUS or ./corpus)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a dataset and register it in the corpus")
    p.add_argument("descriptor")
    p.add_argument("csv")

    p = sub.add_parser("build", help="materialize functions, indices and features")
    p.add_argument("datasets", nargs="*", help="datasets to build (default: all registered)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--force", action="store_true", help="rebuild even when artifacts are fresh")

    p = sub.add_parser(
        "query",
        help="find significant relationships between dataset collections",
        epilog="Results are sorted by |tau| descending, then rho descending. "
               "All common resolutions are evaluated, highest first.",
    )
    p.add_argument("--d1", required=True, type=_split_names, help="comma-separated dataset names")
    p.add_argument("--d2", type=_split_names, default=(),
                   help="comma-separated dataset names (default: the whole corpus)")
    p.add_argument("--min-score", type=float, default=0.0, help="minimum |tau|")
    p.add_argument("--min-strength", type=float, default=0.0, help="minimum rho")
    p.add_argument("--mode", choices=["salient", "extreme", "both"], default="both")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--shifts", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", action="append", type=_parse_threshold, default=[],
                   metavar="DS:FN=TP,TM",
                   help="user feature thresholds for one function (repeatable); "
                        "features are then queried from the merge tree index")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("baseline", help="reference correlation measures on city-resolution series")
    p.add_argument("--method", choices=sorted(METHODS), required=True)
    p.add_argument("--d1", required=True, type=_split_names)
    p.add_argument("--d2", type=_split_names, default=())
    p.add_argument("--bins", type=int, default=16, help="histogram bins for the mi method")
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("inspect", help="list built functions, thresholds and feature counts")
    p.add_argument("dataset")
    return parser


def _emit(records: list[dict], columns: list[str], fmt: str, out) -> None:
    if fmt == "csv":
        writer = csv.DictWriter(out, fieldnames=columns)
        writer.writeheader()
        writer.writerows(records)
    else:
        for rec in records:
            out.write(json.dumps(rec, sort_keys=True) + "\n")


def _cmd_ingest(corpus: Corpus, args) -> int:
    desc = corpus.register(args.descriptor, args.csv)
    print(f"registered {desc.name}: native {desc.native.label}, "
          f"{len(desc.id_attrs)} id attrs, {len(desc.numeric_attrs)} numeric attrs")
    return 0


def _cmd_build(corpus: Corpus, args) -> int:
    report = corpus.build(args.datasets or None, workers=args.workers, force=args.force)
    for e in report.entries:
        status = f"ERROR: {e.error}" if e.error else (
            f"{e.functions} functions built, {e.skipped_fresh} fresh, "
            f"{e.records_kept} records ({e.records_skipped} skipped), {e.seconds:.1f}s")
        print(f"{e.dataset}: {status}")
    return 1 if report.failures else 0


def _cmd_query(corpus: Corpus, args) -> int:
    clause = QueryClause(
        d1=args.d1, d2=args.d2, min_score=args.min_score, min_strength=args.min_strength,
        mode=args.mode, alpha=args.alpha, shifts=args.shifts, seed=args.seed,
        thresholds=tuple(args.threshold),
    )
    outcome = corpus.query(clause, workers=args.workers)
    _emit([r.to_record() for r in outcome.results], _RESULT_COLUMNS, args.format, sys.stdout)
    rep = outcome.report
    suffix = " (cache hit)" if outcome.cached else ""
    print(f"evaluated {rep['evaluated']} candidates, emitted {rep['emitted']}{suffix}",
          file=sys.stderr)
    return 0


def _cmd_baseline(corpus: Corpus, args) -> int:
    measure = METHODS[args.method]
    d1 = list(dict.fromkeys(args.d1))
    d2 = list(dict.fromkeys(args.d2)) or corpus.datasets()
    records = []
    for name1 in d1:
        for name2 in d2:
            if name1 == name2:
                continue
            for ref1 in corpus.functions(name1):
                res1 = {r for r in corpus.resolutions(ref1) if r.spatial is SpatialRes.CITY}
                for ref2 in corpus.functions(name2):
                    res2 = {r for r in corpus.resolutions(ref2) if r.spatial is SpatialRes.CITY}
                    for res in sorted(res1 & res2, key=lambda r: r.rank):
                        x = corpus.series(ref1, res)
                        y = corpus.series(ref2, res)
                        n = min(len(x), len(y))
                        kwargs = {"bins": args.bins} if args.method == "mi" else {}
                        beta = measure(x[:n], y[:n], **kwargs)
                        records.append({
                            "dataset1": name1, "function1": ref1.name,
                            "dataset2": name2, "function2": ref2.name,
                            "spatial": res.spatial.value, "temporal": res.temporal.value,
                            "method": args.method,
                            "score": None if beta is None else round(float(beta), 12),
                        })
    columns = ["dataset1", "function1", "dataset2", "function2", "spatial", "temporal",
               "method", "score"]
    _emit(records, columns, args.format, sys.stdout)
    return 0


def _cmd_inspect(corpus: Corpus, args) -> int:
    for meta in corpus.inspect(args.dataset):
        counts = meta["feature_counts"]
        per_mode = ", ".join(
            f"{mode}: +{c[0]}/-{c[1]}" for mode, c in sorted(counts.items()))
        print(f"{meta['function']} @ {meta['resolution']} "
              f"[{meta['n_regions']}x{meta['m_steps']}] {per_mode}")
        for th in meta["thresholds"]:
            plus = "-" if th["theta_plus"] is None else f"{th['theta_plus']:.6g}"
            minus = "-" if th["theta_minus"] is None else f"{th['theta_minus']:.6g}"
            print(f"    {th['mode']}[{th['interval']}] theta+={plus} theta-={minus}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "build": _cmd_build,
    "query": _cmd_query,
    "baseline": _cmd_baseline,
    "inspect": _cmd_inspect,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    corpus = Corpus(args.corpus)
    try:
        return _COMMANDS[args.command](corpus, args)
    except TopolinkError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": "not-found", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
