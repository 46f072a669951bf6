"""Command-line front end: ``idselect <subcommand> [options]``.

Exit status is 0 on success, 1 when the library rejects the inputs and 2 for
usage errors.  ``--json`` replaces the human-readable tables with a report
that follows ``data/report.schema.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

from . import __version__
from .datasets import DATASET_NAMES, deviation_warnings, embedded_dataset, published_report
from .errors import IdSelectError
from .estimators import EstimationWarning, compare_estimators, estimate
from .gaussian import format_covariance_csv, implied_covariance, read_covariance_csv
from .graph import d_separated, format_path_diagram, read_path_diagram
from .identification import DEFAULT_MAX_SIZE, check_strategy, enumerate_criterion, recommend
from .report import build_report, dumps
from .simulation import monte_carlo_variances
from .strategy import KINDS, Strategy, criterion_kind, split_names

__all__ = ["build_parser", "run_command", "main", "SEED_ENV"]

SEED_ENV = "IDSELECT_SEED"
DEFAULT_SIZES = "20,40,60,80,100"


class UsageError(Exception):
    """Argument combination argparse cannot express; reported with exit 2."""


# --------------------------------------------------------------------------
# parser


def _source_flags(p, graph=True, cov=True):
    g = p.add_argument_group("inputs")
    if graph:
        g.add_argument("--graph", metavar="FILE", help="path diagram file (A -> B [coef=c] per line)")
    if cov:
        g.add_argument("--cov", metavar="FILE", help="covariance CSV (header of labels, then rows)")
    g.add_argument("--dataset", choices=DATASET_NAMES, help="embedded dataset instead of files")


def _effect_flags(p):
    p.add_argument("--treatment", "-x", required=True, metavar="X")
    p.add_argument("--outcome", "-y", required=True, metavar="Y")


def _strategy_flags(p):
    p.add_argument("--criterion", help="back-door, civ or front-door")
    p.add_argument("--adjust", "--set", dest="set", metavar="V,...", help="adjustment or mediator set")
    p.add_argument("--instrument", metavar="Z")
    p.add_argument("--given", metavar="V,...", help="conditioning set of a conditional IV")
    p.add_argument("--strategy", metavar="SPEC", help="one strategy, e.g. civ:Z|T (overrides --criterion)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit a JSON report")

    parser = argparse.ArgumentParser(
        prog="idselect",
        description="Identify total effects in linear path diagrams and compare estimator variances.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("dsep", parents=[common], help="query d-separation")
    _source_flags(p, cov=False)
    p.add_argument("--a", required=True, metavar="V,...")
    p.add_argument("--b", required=True, metavar="V,...")
    p.add_argument("--given", default="", metavar="V,...")
    p.add_argument("--engine", choices=("fast", "oracle"), default="fast")

    p = sub.add_parser("check", parents=[common], help="certificate for one criterion")
    _source_flags(p, cov=False)
    _effect_flags(p)
    _strategy_flags(p)

    p = sub.add_parser("enumerate", parents=[common], help="all valid sets up to a size")
    _source_flags(p, cov=False)
    _effect_flags(p)
    p.add_argument("--criterion", help="restrict to one criterion (default: all)")
    p.add_argument("--max-size", type=int, default=DEFAULT_MAX_SIZE)

    p = sub.add_parser("estimate", parents=[common], help="estimate and variances for one strategy")
    _source_flags(p)
    _effect_flags(p)
    _strategy_flags(p)
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--tau", type=float, help="effect value plugged into the IV variance")

    p = sub.add_parser("compare", parents=[common], help="compare strategies by asymptotic variance")
    _source_flags(p)
    _effect_flags(p)
    p.add_argument("--strategy", action="append", default=[], metavar="SPEC")
    p.add_argument("--max-size", type=int, default=DEFAULT_MAX_SIZE)
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("recommend", parents=[common], help="rank every valid strategy")
    _source_flags(p)
    _effect_flags(p)
    p.add_argument("--max-size", type=int, default=DEFAULT_MAX_SIZE)
    p.add_argument("--n", type=int, default=100)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo variance table")
    _source_flags(p)
    _effect_flags(p)
    p.add_argument("--strategy", action="append", default=[], metavar="SPEC", required=True)
    p.add_argument("--sizes", default=DEFAULT_SIZES, metavar="N,...")
    p.add_argument("--replications", type=int, default=1000)
    p.add_argument("--seed", type=int, help=f"defaults to ${SEED_ENV}, else 0")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--raw-out", metavar="FILE", help="per-replication estimates as CSV")

    p = sub.add_parser("dataset", parents=[common], help="print an embedded dataset")
    p.add_argument("--name", required=True, choices=DATASET_NAMES)
    p.add_argument("--format", choices=("csv", "json", "dag"), default="csv")
    p.add_argument("--published", action="store_true", help="recompute the published figures instead")
    return parser


# --------------------------------------------------------------------------
# input resolution


def _graph(args):
    if getattr(args, "graph", None):
        return read_path_diagram(args.graph)
    if args.dataset:
        g = embedded_dataset(args.dataset).graph
        if g is None:
            raise IdSelectError(f"dataset {args.dataset} has no diagram; pass --graph")
        return g
    raise UsageError("a path diagram is required: pass --graph or --dataset")


def _maybe_graph(args):
    try:
        return _graph(args)
    except UsageError:
        return None


def _covariance(args):
    if getattr(args, "cov", None):
        return read_covariance_csv(args.cov)
    if args.dataset:
        return embedded_dataset(args.dataset).covariance
    if getattr(args, "graph", None):
        g = read_path_diagram(args.graph)
        if g.is_parameterized:
            return implied_covariance(g)
        raise IdSelectError("diagram lacks coefficients or variances; pass --cov for a covariance matrix")
    raise UsageError("a covariance is required: pass --cov, --dataset or a parameterised --graph")


def _one_strategy(args) -> Strategy:
    x, y = args.treatment, args.outcome
    if args.strategy:
        return Strategy.parse(args.strategy, x, y)
    if not args.criterion:
        raise UsageError("pass --criterion or --strategy")
    kind = criterion_kind(args.criterion)
    names = split_names(args.set or "")
    if kind == "conditional_iv":
        if not args.instrument:
            raise UsageError("a conditional IV needs --instrument")
        if args.set and args.given is None:
            given = names
        else:
            given = split_names(args.given or "")
        return Strategy.conditional_iv(x, y, args.instrument, given)
    if kind == "front_door":
        return Strategy.front_door(x, y, names)
    return Strategy.back_door(x, y, names)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"${SEED_ENV} must be an integer, got {raw!r}") from None


def _sizes(text) -> list[int]:
    try:
        return [int(s) for s in split_names(text)]
    except ValueError:
        raise UsageError(f"--sizes must be comma-separated integers, got {text!r}") from None


def _inputs(args) -> dict:
    skip = {"json", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v not in (None, [], False)}


def _dataset_warnings(args, rep):
    return list(rep.warnings) + (deviation_warnings(args.dataset, rep) if args.dataset else [])


# --------------------------------------------------------------------------
# text rendering


def _num(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _table(headers, rows) -> str:
    cells = [list(map(str, headers))] + [[_num(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _certificate_text(c) -> str:
    lines = [f"{c.strategy().label}: {'valid' if c.valid else 'invalid'}"]
    for label, ok in c.conditions:
        lines.append(f"  [{'x' if ok else ' '}] {label}")
    if c.disjunctive_only:
        lines.append("  (passes only under the looser 'of X or of Y' nondescendant reading)")
    return "\n".join(lines)


_EST_HEADERS = ("strategy", "tau_hat", "n_times_avar", "avar", "finite_var", "n")


def _est_row(r):
    return (r.label, r.tau_hat, r.n_times_avar, r.avar, r.finite_var, r.n)


# --------------------------------------------------------------------------
# commands; each returns (report, text)


def _cmd_dsep(args):
    G = _graph(args)
    A, B, Z = split_names(args.a), split_names(args.b), split_names(args.given)
    sep = d_separated(G, A, B, Z, engine=args.engine)
    result = {"a": list(A), "b": list(B), "given": list(Z), "engine": args.engine, "d_separated": sep}
    return build_report("dsep", _inputs(args), result=result), f"d-separated: {str(sep).lower()}"


def _cmd_check(args):
    G = _graph(args)
    cert = check_strategy(G, _one_strategy(args))
    return (
        build_report("check", _inputs(args), certificates=[cert.as_dict()], result={"valid": cert.valid}),
        _certificate_text(cert),
    )


def _cmd_enumerate(args):
    G = _graph(args)
    kinds = [criterion_kind(args.criterion)] if args.criterion else list(KINDS)
    certs = []
    for k in kinds:
        certs.extend(enumerate_criterion(G, k, args.treatment, args.outcome, args.max_size))
    rows = [(c.strategy().label, "yes" if c.minimal else "no") for c in certs]
    text = _table(("strategy", "minimal"), rows) if rows else "no valid strategies"
    result = {"count": len(certs)}
    return build_report("enumerate", _inputs(args), certificates=[c.as_dict() for c in certs], result=result), text


def _cmd_estimate(args):
    cov = _covariance(args)
    s = _one_strategy(args)
    rep = estimate(cov, s, args.n, args.tau)
    certs = []
    G = _maybe_graph(args)
    if G is not None and set(s.variables) | {s.treatment, s.outcome} <= set(G.vertices):
        certs.append(check_strategy(G, s).as_dict())
    warn = _dataset_warnings(args, rep)
    text = "\n".join(f"{k:<13} {_num(v)}" for k, v in zip(_EST_HEADERS, _est_row(rep)))
    return build_report("estimate", _inputs(args), certificates=certs, estimates=[rep.as_dict()], warnings=warn), text


def _strategies_for(args):
    x, y = args.treatment, args.outcome
    if args.strategy:
        return [Strategy.parse(t, x, y) for t in args.strategy]
    G = _maybe_graph(args)
    if G is None:
        raise UsageError("pass --strategy (repeatable) or a diagram to enumerate strategies from")
    out = []
    for k in KINDS:
        out.extend(c.strategy() for c in enumerate_criterion(G, k, x, y, args.max_size))
    return out


def _cmd_compare(args):
    cov = _covariance(args)
    strategies = _strategies_for(args)
    if not strategies:
        raise IdSelectError("no strategies to compare")
    comp = compare_estimators(cov, args.n, strategies)
    warn = [w for r in comp.rows for w in _dataset_warnings(args, r)]
    ratios = [{"worse": v.worse, "better": v.better, "ratio": v.ratio} for v in comp.ratios]
    text = _table(_EST_HEADERS, [_est_row(r) for r in comp.rows])
    if comp.ratios:
        text += "\n\n" + _table(("worse", "better", "ratio"), [(v.worse, v.better, v.ratio) for v in comp.ratios])
    report = build_report(
        "compare",
        _inputs(args),
        estimates=[r.as_dict() for r in comp.rows],
        warnings=warn,
        result={"order": [r.label for r in comp.rows], "ratios": ratios},
    )
    return report, text


def _cmd_recommend(args):
    G = _graph(args)
    try:
        cov = _covariance(args)
    except (UsageError, IdSelectError):
        cov = None
    rec = recommend(G, args.treatment, args.outcome, args.max_size, cov=cov, n=args.n if cov else None)
    warn = list(rec.warnings)
    for s in rec.ranking:
        if s in rec.estimates:
            warn.extend(_dataset_warnings(args, rec.estimates[s]))
    rows = []
    for i, s in enumerate(rec.ranking, 1):
        e = rec.estimates.get(s)
        rows.append((i, s.label, e.n_times_avar if e else None))
    text = _table(("rank", "strategy", "n_times_avar"), rows) if rows else "not identifiable"
    if rec.verdicts:
        vrows = [(v.better.label, v.worse.label, v.basis.value + (" (equal)" if v.equivalent else "")) for v in rec.verdicts]
        text += "\n\n" + _table(("better", "worse", "basis"), vrows)
    report = build_report(
        "recommend",
        _inputs(args),
        certificates=[c.as_dict() for c in rec.certificates],
        estimates=[rec.estimates[s].as_dict() for s in rec.ranking if s in rec.estimates],
        dominance=[v.as_dict() for v in rec.verdicts],
        warnings=warn,
        result={"identifiable": rec.identifiable, "ranking": [s.label for s in rec.ranking]},
    )
    return report, text


def _cmd_simulate(args):
    x, y = args.treatment, args.outcome
    strategies = [Strategy.parse(t, x, y) for t in args.strategy]
    if getattr(args, "cov", None) or args.dataset:
        source = _covariance(args)
    else:
        source = _graph(args)
    seed = _seed(args)
    table = monte_carlo_variances(
        source,
        strategies,
        _sizes(args.sizes),
        replications=args.replications,
        seed=seed,
        workers=args.workers,
        keep_raw=bool(args.raw_out),
    )
    if args.raw_out:
        table.write_raw_csv(args.raw_out)
    cells = [c.as_dict() for c in table.cells]
    warn = [f"{c.strategy.label} at n={c.n}: {c.excluded} replications excluded" for c in table.cells if c.excluded]
    headers = ("strategy", "n", "empirical_var", "finite_var", "avar", "mean_tau", "mad", "excluded")
    rows = [
        (c.strategy.label, c.n, c.empirical_var, c.finite_var, c.avar, c.mean_tau, c.mad, c.excluded)
        for c in table.cells
    ]
    result = {"seed": seed, "replications": table.replications, "sizes": list(table.sizes), "cells": cells}
    return build_report("simulate", _inputs(args), warnings=warn, result=result), _table(headers, rows)


def _cmd_dataset(args):
    ds = embedded_dataset(args.name)
    if args.published:
        pub = published_report(args.name)
        text = _table(
            ("strategy", "quantity", "n", "published", "computed", "agrees"),
            [(f["strategy"], f["quantity"], f["n"], f["published"], f["computed"], f["agrees"]) for f in pub["figures"]],
        )
        if pub["orderings"]:
            text += "\n\n" + _table(
                ("better", "worse", "rule", "holds"),
                [(o["better"], o["worse"], o["rule"], o["holds"]) for o in pub["orderings"]],
            )
        return build_report("dataset", _inputs(args), warnings=pub["warnings"], result=pub), text
    body = {
        "name": ds.name,
        "labels": list(ds.covariance.labels),
        "entries": ds.covariance.entries.tolist(),
        "graph": format_path_diagram(ds.graph) if ds.graph is not None else None,
        "notes": ds.notes,
    }
    if args.format == "csv":
        text = format_covariance_csv(ds.covariance).rstrip("\n")
    elif args.format == "dag":
        if ds.graph is None:
            raise IdSelectError(f"dataset {ds.name} has no diagram")
        text = format_path_diagram(ds.graph).rstrip("\n")
    else:
        text = json.dumps(body, indent=2)
    return build_report("dataset", _inputs(args), result=body), text


_COMMANDS = {
    "dsep": _cmd_dsep,
    "check": _cmd_check,
    "enumerate": _cmd_enumerate,
    "estimate": _cmd_estimate,
    "compare": _cmd_compare,
    "recommend": _cmd_recommend,
    "simulate": _cmd_simulate,
    "dataset": _cmd_dataset,
}


def run_command(argv, stdout=None, stderr=None) -> tuple[int, dict | None]:
    """Run one invocation, writing to ``stdout``/``stderr``; returns (status, report)."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0), None
    try:
        with warnings.catch_warnings():
            # the same messages travel in the report's warnings list
            warnings.simplefilter("ignore", EstimationWarning)
            report, text = _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(stderr)
        print(f"idselect: error: {exc}", file=stderr)
        return 2, None
    except (IdSelectError, OSError) as exc:
        print(f"error: {exc}", file=stderr)
        return 1, None
    if args.json:
        stdout.write(dumps(report))
    else:
        stdout.write(text + "\n")
        for w in report["warnings"]:
            print(f"warning: {w}", file=stderr)
    return 0, report


def main(argv=None) -> int:
    status, _ = run_command(sys.argv[1:] if argv is None else argv)
    return status


if __name__ == "__main__":
    sys.exit(main())
