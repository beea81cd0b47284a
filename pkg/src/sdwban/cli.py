"""Command-line entry point: ``sdwban run|validate|summarize|sweep``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from .engine import run
from .metrics import csv_row, report_text, rows_to_csv, summarize, to_csv
from .model import SdwbanError
from .scenario import build_scenario, load_document, with_overrides
from .trace import TraceError, atomic_write, read_trace

log = logging.getLogger("sdwban")


def _setup_logging() -> None:
    name = os.environ.get("SDWBAN_LOG_LEVEL", "WARNING").upper()
    level = getattr(logging, name, None)
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if not isinstance(level, int):
        log.warning("ignoring unknown SDWBAN_LOG_LEVEL %r", name)


def parse_seeds(text: str) -> list[int]:
    """``1..30`` (inclusive), ``3,5,8`` or a mix such as ``1..3,10``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            a, b = int(lo), int(hi)
            if b < a:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(a, b + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


def _read_doc(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SdwbanError(f"cannot read scenario {path}: {exc.strerror}") from None
    return load_document(text)


def _prepare(path: str, overrides: list[str], seed: Optional[int]):
    doc = with_overrides(_read_doc(path), overrides)
    if seed is not None:
        doc["seed"] = seed
    return build_scenario(doc)


def cmd_validate(args) -> int:
    sc = _prepare(args.scenario, args.override, None)
    print(f"{args.scenario}: ok ({sc.name}, N={sc.topology.n_patients}, J={sc.topology.j_controllers}, "
          f"{len(sc.sensors)} sensors, {sc.duration_s:g} s)")
    return 0


def cmd_run(args) -> int:
    sc = _prepare(args.scenario, args.override, args.seed)
    log.info("running %s seed=%d", sc.name, sc.seed)
    trace, rep = run(sc)
    out = Path(args.out)
    trace.write(out / "trace.jsonl")
    atomic_write(out / "metrics.csv", to_csv([rep]))
    atomic_write(out / "report.txt", report_text(rep))
    if not args.quiet:
        sys.stdout.write(report_text(rep))
    return 0


def cmd_summarize(args) -> int:
    rep = summarize(read_trace(args.trace))
    text = report_text(rep)
    if args.out:
        out = Path(args.out)
        atomic_write(out / "metrics.csv", to_csv([rep]))
        atomic_write(out / "report.txt", text)
    sys.stdout.write(text)
    return 0


def _sweep_job(job: tuple[dict, Optional[str]]) -> dict:
    doc, trace_path = job
    trace, rep = run(build_scenario(doc))
    if trace_path:
        trace.write(trace_path)
    return csv_row(rep)


def cmd_sweep(args) -> int:
    base = with_overrides(_read_doc(args.scenario), args.override)
    seeds = parse_seeds(args.seeds) if args.seeds else [base.get("seed", 0)]
    out = Path(args.out)
    jobs = []
    for seed in seeds:
        doc = dict(base, seed=seed)
        build_scenario(doc)  # fail fast, before any run starts
        jobs.append((doc, str(out / f"seed-{seed}" / "trace.jsonl") if args.keep_traces else None))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    atomic_write(out / "metrics.csv", rows_to_csv(rows))
    print(f"{len(rows)} runs -> {out / 'metrics.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdwban", description="SDN body-area network simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("--scenario", required=True, help="scenario YAML file")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path override, repeatable (link.loss_prob=0.1)")

    sp = sub.add_parser("run", help="execute one scenario and write trace, metrics and report")
    scenario_args(sp)
    sp.add_argument("--seed", type=int, help="override the scenario seed")
    sp.add_argument("--out", default="results", help="output directory")
    sp.add_argument("--quiet", action="store_true", help="do not print the report")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("validate", help="parse and validate a scenario")
    scenario_args(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("summarize", help="recompute metrics from a trace file")
    sp.add_argument("--trace", required=True)
    sp.add_argument("--out", help="also write metrics.csv and report.txt here")
    sp.set_defaults(func=cmd_summarize)

    sp = sub.add_parser("sweep", help="run a scenario over many seeds, one CSV row per run")
    scenario_args(sp)
    sp.add_argument("--seeds", help="seed list, e.g. 1..30 or 1,2,5")
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp.add_argument("--out", default="results", help="output directory")
    sp.add_argument("--keep-traces", action="store_true", help="also write one trace per seed")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SdwbanError, TraceError, ValueError) as exc:
        print(f"sdwban {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"sdwban {args.command}: error: {exc}", file=sys.stderr)
        return 1
