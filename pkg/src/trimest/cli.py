"""Command-line entry point: ``trimest analyze | simulate | diagnose``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import report
from .sim.runner import run_batch, summaries_to_csv, summaries_to_json
from .sim.scenarios import ScenarioError, load_batch, paper_suite
from .trial import TrialDataError, load_csv
from .trim import TrimError, TrimSpec, estimate

DEFAULT_SEED = 12345


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("TRIMEST_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"TRIMEST_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _alpha(text: str) -> TrimSpec:
    try:
        return TrimSpec.parse(text)
    except TrimError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _add_common(p, direction=True):
    p.add_argument("--input", required=True, type=Path, help="trial CSV")
    if direction:
        p.add_argument("--direction", required=True, choices=["worse-low", "worse-high"])
    p.add_argument("--alpha", type=_alpha, default=TrimSpec(), help="adaptive | fixed:F")
    p.add_argument("--seed", type=int, default=None, help="default: $TRIMEST_SEED or 12345")
    p.add_argument("--json", action="store_true", help="print JSON instead of text")
    p.add_argument("--out", type=Path, help="also write the JSON report here")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trimest", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate the treatment effect with several methods")
    _add_common(a)
    a.add_argument("--methods", default=",".join(report.METHODS),
                   help="comma list from trimmed, trimmed+mi, mi, complete-case")  # fmt: skip
    a.add_argument("--m", type=int, default=20, help="imputations")
    a.add_argument("--perms", type=int, default=1000, help="permutations")
    a.add_argument("--boot", type=int, default=500, help="bootstrap resamples for SEs")
    a.add_argument("--gamma", type=float, default=0.05)
    a.add_argument("--workers", type=int, default=1)
    g = a.add_mutually_exclusive_group()
    g.add_argument("--shift", type=float, help="shift for the KS check (default: trimmed estimate)")
    g.add_argument("--shift-from-trimmed", action="store_true")

    s = sub.add_parser("simulate", help="run Monte-Carlo scenarios")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenarios", type=Path, help="scenario batch JSON")
    src.add_argument("--paper-suite", action="store_true", help="the reference scenario cells")
    s.add_argument("--table", type=int, help="restrict --paper-suite to one table (1-10)")
    s.add_argument("--K", type=int, help="override replications per scenario")
    s.add_argument("--perms", type=int, help="override permutations per replication")
    s.add_argument("--m", type=int, help="override imputations")
    s.add_argument("--boot", type=int, help="override bootstrap resamples")
    s.add_argument("--gamma", type=float)
    s.add_argument("--seed", type=int, default=None, help="master seed")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", type=Path, default=Path("sim_results.csv"),
                   help="CSV path; JSON is written alongside with a .json suffix")  # fmt: skip
    s.add_argument("--json", action="store_true", help="print JSON summaries to stdout")

    d = sub.add_parser("diagnose", help="KS location-shift check")
    _add_common(d)
    g = d.add_mutually_exclusive_group(required=True)
    g.add_argument("--shift", type=float)
    g.add_argument("--shift-from-trimmed", action="store_true")
    return ap


def cmd_analyze(args) -> int:
    d = load_csv(args.input, args.direction)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    bad = [m for m in methods if m not in report.METHODS]
    if bad:
        raise ValueError(f"unknown method(s) {', '.join(bad)}; choose from {', '.join(report.METHODS)}")
    st = report.Settings(
        methods=methods,
        alpha=args.alpha,
        m=args.m,
        B=args.perms,
        B_boot=args.boot,
        gamma=args.gamma,
        seed=_seed(args),
        workers=args.workers,
        shift=args.shift,
    )
    rep = report.analyze(d, st)
    rep.manifest["input"] = str(args.input)
    rep.manifest["direction"] = d.direction.value
    if args.out:
        args.out.write_text(rep.to_json(), encoding="utf-8")
    sys.stdout.write(rep.to_json() + "\n" if args.json else rep.to_text())
    return 0


def cmd_diagnose(args) -> int:
    d = load_csv(args.input, args.direction)
    shift = estimate(d, args.alpha).diff if args.shift_from_trimmed else args.shift
    res = report.diagnose(d, shift)
    if args.out:
        args.out.write_text(json.dumps(res, indent=2), encoding="utf-8")
    sys.stdout.write(json.dumps(res, indent=2) + "\n" if args.json else report.diagnose_text(res))
    return 0


def cmd_simulate(args) -> int:
    overrides = {}
    if args.K is not None:
        overrides["K"] = args.K
    if args.perms is not None:
        overrides["B"] = args.perms
    if args.m is not None:
        overrides["m"] = args.m
    if args.boot is not None:
        overrides["B_boot"] = args.boot
    if args.gamma is not None:
        overrides["gamma"] = args.gamma
    seed = args.seed if args.seed is not None else os.environ.get("TRIMEST_SEED")
    if seed is not None:
        overrides["master_seed"] = int(seed)

    if args.paper_suite:
        specs = paper_suite(args.table, **overrides)
    else:
        if args.table is not None:
            raise ValueError("--table applies to --paper-suite only")
        specs = [s.replace(**overrides) if overrides else s for s in load_batch(args.scenarios)]

    def progress(i, n, spec):
        print(f"[{i}/{n}] {spec.name} done", file=sys.stderr, flush=True)

    summaries, aborted = run_batch(specs, workers=args.workers, progress=progress)
    csv_text = summaries_to_csv(summaries)
    json_text = summaries_to_json(summaries)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(csv_text, encoding="utf-8")
    args.out.with_suffix(".json").write_text(json_text, encoding="utf-8")
    sys.stdout.write(json_text + "\n" if args.json else csv_text)
    for msg in aborted:
        print(f"aborted: {msg}", file=sys.stderr)
    return 1 if aborted else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handlers = {"analyze": cmd_analyze, "simulate": cmd_simulate, "diagnose": cmd_diagnose}
    try:
        return handlers[args.command](args)
    except (TrialDataError, ScenarioError, TrimError, report.MethodError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
