"""Command-line entry point.

Exit codes: 0 success, 2 parse error, 3 invalid scenario, 4 runtime
failure, 5 a consistency audit failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import oracle
from .engine import EngineError, run
from .model import Policy, Scenario, ScenarioError, validate_scenario
from .runner import (
    SweepSpec,
    ScenarioParseError,
    make_row,
    metadata,
    oracle_values,
    parse_scenario,
    render,
    run_sweep,
    simulate,
)
from .stats import audit

log = logging.getLogger("handoffsim")

EXIT_PARSE, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_AUDIT = 2, 3, 4, 5


class _ParseFailure(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="scenario file (key=value lines)")
    p.add_argument("--seed", type=int, metavar="U64")
    p.add_argument("--replications", type=int, metavar="K")
    p.add_argument("--warmup", type=float, metavar="T")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", metavar="PATH", help="write here instead of stdout")
    p.add_argument("--policy", metavar="NAME", choices=[p.value for p in Policy])
    p.add_argument("--workers", type=int, default=1, help="processes for replications")
    p.add_argument("--level", type=float, default=0.95, help="confidence level")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="handoffsim", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="simulate one scenario")
    _common(p)
    p.add_argument("--trace", metavar="PATH", help="dump replication 0's event trace")
    p = sub.add_parser("analytic", help="oracle values only")
    _common(p)
    p = sub.add_parser("sweep", help="sweep one parameter across policies")
    _common(p)
    p.add_argument("--sweep", metavar="KEY=v1,v2,...", required=True)
    p.add_argument("--policies", metavar="A,B,...",
                   help="policies to compare (default: all, or --policy)")
    p = sub.add_parser("compare", help="simulation next to the oracle")
    _common(p)
    return ap


def load_scenario(args) -> Scenario:
    try:
        s = parse_scenario(args.config) if args.config else validate_scenario(Scenario())
    except OSError as exc:
        raise _ParseFailure(str(exc)) from exc
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.replications is not None:
        over["replications"] = args.replications
    if args.warmup is not None:
        over["warmup_time"] = args.warmup
    if args.policy is not None:
        over["policy"] = args.policy
    return s.with_(**over) if over else s


def parse_sweep(text: str) -> tuple[str, list[float]]:
    if "=" not in text:
        raise _ParseFailure(f"--sweep expects KEY=v1,v2,..., got {text!r}")
    key, vals = text.split("=", 1)
    try:
        return key.strip(), [float(v) for v in vals.split(",") if v.strip()]
    except ValueError:
        raise _ParseFailure(f"bad sweep values {vals!r}") from None


def _write(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_simulate(args, s: Scenario, with_oracle: bool) -> int:
    report = simulate(s, args.workers, args.level)
    findings = audit(report)
    orc = oracle_values(s) if with_oracle else None
    meta = metadata(s, command=args.command, replications=s.replications, seed=s.seed)
    _write(render([make_row(s.policy, None, report, orc)], args.format, meta), args.output)
    if getattr(args, "trace", None):
        tr = run(s, 0, record_events=True)
        Path(args.trace).write_text("".join(line + "\n" for line in tr.event_lines()))
    failed = [f for f in findings if not f.passed]
    for f in failed:
        log.error("audit failed: %s (%s)", f.check, f.detail)
    return EXIT_AUDIT if failed else 0


def _cmd_analytic(args, s: Scenario) -> int:
    orc = oracle.analytic_metrics(s)
    if orc is None:
        log.error("no analytic model for policy %s with this queue configuration", s.policy.value)
        return EXIT_RUNTIME
    meta = metadata(s, command="analytic")
    _write(render([make_row(s.policy, None, None, orc)], args.format, meta), args.output)
    return 0


def _cmd_sweep(args, s: Scenario) -> int:
    key, values = parse_sweep(args.sweep)
    if args.policies:
        policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    elif args.policy:
        policies = [args.policy]
    else:
        policies = [p.value for p in Policy]
    try:
        spec = SweepSpec(s, key, tuple(values), tuple(policies))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    result = run_sweep(spec, args.workers, args.level)
    meta = metadata(s, command="sweep", sweep_param=key, sweep_values=list(spec.values),
                    policies=[p.value for p in spec.policies], replications=s.replications, seed=s.seed)
    _write(render(result.rows, args.format, meta), args.output)
    if not result.audits_ok:
        log.error("at least one sweep point failed its audit")
        return EXIT_AUDIT
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        s = load_scenario(args)
        if args.command == "simulate":
            return _cmd_simulate(args, s, with_oracle=False)
        if args.command == "compare":
            return _cmd_simulate(args, s, with_oracle=True)
        if args.command == "analytic":
            return _cmd_analytic(args, s)
        return _cmd_sweep(args, s)
    except (ScenarioParseError, _ParseFailure) as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except ScenarioError as exc:
        log.error("invalid scenario: %s", exc)
        return EXIT_VALIDATION
    except (EngineError, oracle.OracleError, OSError, ValueError) as exc:
        log.error("run failed: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
