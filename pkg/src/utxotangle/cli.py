"""Command-line front end: ``utxotangle run|analyze|inspect|validate``.

Exit status is 0 on success, 1 for configuration and usage problems and 2 when
a simulation or analysis fails at runtime. Messages go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from .analysis import AnalysisError, analyze, load_trace, parse_theta
from .fixtures import FIXTURES, load_fixture
from .netsim import METRIC_COLUMNS, run
from .params import ConfigError
from .scenario import Scenario, bundled_scenarios, load_scenario, validate_scenario

log = logging.getLogger("utxotangle")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for runtime faults here
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load(spec: str, seed: int | None) -> Scenario:
    sc = load_scenario(spec)
    if seed is not None:
        sc = sc.with_seed(seed)
    validate_scenario(sc)
    return sc


def write_outputs(result, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.log").write_text(result.trace.text(), encoding="utf-8")
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(result.trace.metrics)
    (out / "summary.json").write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _run_one(sc: Scenario, out: str) -> str:
    result = run(sc)
    write_outputs(result, Path(out))
    return out


def cmd_run(args) -> int:
    try:
        scenarios = [_load(s, args.seed) for s in args.scenario]
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    base = Path(args.out)
    names = [sc.name for sc in scenarios]
    if len(scenarios) > 1 and len(set(names)) != len(names):
        print("config error: batch contains two scenarios with the same name", file=sys.stderr)
        return EXIT_CONFIG
    outs = [str(base / sc.name) if len(scenarios) > 1 else str(base) for sc in scenarios]
    try:
        if args.jobs > 1 and len(scenarios) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                done = list(pool.map(_run_one, scenarios, outs))
        else:
            done = [_run_one(sc, o) for sc, o in zip(scenarios, outs)]
    except Exception as e:  # noqa: BLE001
        log.debug("run failed", exc_info=True)
        print(f"runtime fault: {type(e).__name__}: {e}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return EXIT_RUNTIME
    for sc, o in zip(scenarios, done):
        print(f"{sc.name} seed={sc.seed} slots={sc.duration_slots} -> {o}")
    return EXIT_OK


def _trace_path(target: str) -> Path:
    p = Path(target)
    if p.is_dir():
        p = p / "trace.log"
    if not p.is_file():
        raise UsageError(f"no trace found at {target}")
    return p


def _num(x) -> str:
    return "-" if x is None else f"{x:.3f}"


def format_report(rep: dict) -> str:
    conv = rep["convergence"]
    lines = [
        f"scenario {rep['scenario']} seed {rep['seed']} theta {rep['theta']}",
        f"final branch        {conv['final_branch']}",
        f"single chain        {conv['single_chain']} (agreed through slot {conv['agreed_through_slot']})",
        f"settled within 3    {conv['within_settle_fraction']:.3f} of {conv['evaluated_slots']} slots, "
        f"mean {_num(conv['mean_slots_to_agreement'])}",
        f"reorgs              {len(conv['reorgs'])} (max depth {conv['max_reorg_depth']})",
        f"orphan branches     {conv['orphan_branches']}",
        f"supply audit        {'ok' if conv['supply_audit_ok'] else 'FAILED'}",
    ]
    fin = rep["finality"]
    if fin:
        lines += ["", f"{'tx':<16} {'tag':<10} {'final':<6} finality slot per node"]
        for tx, r in fin.items():
            slots = " ".join(f"{n}={'-' if s is None else s}" for n, s in r["final_slot"].items())
            flag = "yes" if r["in_final_chain"] else "no"
            if r["reverted"]:
                flag = "REVERTED"
            lines.append(f"{tx:<16} {r['tag']:<10} {flag:<6} {slots}")
    if rep["attack"]:
        a = rep["attack"]
        lines += ["", f"attack: victim kept={a['victim_in_final_chain']} double kept={a['double_in_final_chain']} "
                  f"reverted={a['reverted']}"]
    if rep["rejects"]:
        lines.append("")
        for node, rules in rep["rejects"].items():
            lines.append(f"rejects {node}: " + ", ".join(f"{k}={v}" for k, v in rules.items()))
    if rep["delays"]:
        lines.append("delays " + ", ".join(f"{k}={v}" for k, v in rep["delays"].items()))
    lines += ["", f"{'slot':>4} {'branches':>8} {'covered_ppm':>11} {'agree':>5} {'mu':>22}"]
    for row in conv["slots"]:
        agree = "-" if row["slots_to_agreement"] is None else row["slots_to_agreement"]
        mu = "-" if row["mu"] is None else row["mu"]
        lines.append(f"{row['slot']:>4} {row['branch_count']:>8} {row['covered_ppm']:>11} {agree:>5} {mu:>22}")
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    try:
        theta = parse_theta(args.theta)
        path = _trace_path(args.trace)
    except (AnalysisError, UsageError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rep = analyze(load_trace(path), theta)
    except (AnalysisError, ValueError, KeyError) as e:
        print(f"analysis failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(args.out) if args.out else path.parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "analysis.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    sys.stdout.write(format_report(rep))
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        fx = load_fixture(args.fixture)
    except KeyError as e:
        print(f"usage error: {e.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(fx.report())
    return EXIT_OK


def cmd_validate(args) -> int:
    status = EXIT_OK
    for spec in args.scenario:
        try:
            sc = _load(spec, args.seed)
        except ConfigError as e:
            print(f"{spec}: invalid: {e}", file=sys.stderr)
            status = EXIT_CONFIG
            continue
        print(f"{spec}: ok ({sc.name}, {len(sc.nodes)} nodes, {sc.duration_slots} slots, seed {sc.seed})")
    return status


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="utxotangle", description="UTXO tangle simulator and trace analyzer.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging and tracebacks")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    scen_help = f"scenario TOML path or bundled name ({', '.join(bundled_scenarios())}); repeatable"

    r = sub.add_parser("run", help="simulate scenarios and write trace.log, metrics.csv, summary.json")
    r.add_argument("--scenario", action="append", required=True, help=scen_help)
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--out", default="out", help="output directory (one subdirectory per scenario in a batch)")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes for a batch")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="finality and convergence report for a trace")
    a.add_argument("trace", help="run directory or trace.log")
    a.add_argument("--theta", default="2/3", help="finality parameter in (1/2, 1), e.g. 2/3 or 0.7")
    a.add_argument("--out", help="where to write analysis.json (default: next to the trace)")
    a.set_defaults(func=cmd_analyze)

    i = sub.add_parser("inspect", help="print DAG dump and coverage table of a built-in fixture")
    i.add_argument("fixture", help=f"one of: {', '.join(sorted(FIXTURES))}")
    i.set_defaults(func=cmd_inspect)

    v = sub.add_parser("validate", help="check scenario files without running them")
    v.add_argument("--scenario", action="append", required=True, help=scen_help)
    v.add_argument("--seed", type=int, help="override the scenario seed")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("usage error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
