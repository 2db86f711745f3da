"""Command-line front end: configure a scenario, run it, report verdicts.

Exit codes: 0 = ran successfully, 1 = verdicts differ from an --expect
reference matrix, 2 = usage error or internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass

from .explorer import Bounds
from .goals import CHANGE_GOALS, GOAL_IDS, EvidenceCheckError, run_all
from .protocols import PROTOCOLS, build_protocol
from .report import (
    ReplayMismatchError,
    build_document,
    compare_with_reference,
    render_text,
    to_json,
)

USAGE_EXIT = 2
INTERNAL_EXIT = 2
MISMATCH_EXIT = 1


class ExpectFileError(RuntimeError):
    """The --expect reference matrix cannot be read."""


@dataclass(frozen=True)
class ScenarioConfig:
    protocol: str = "plain"
    goals: tuple = ()  # empty = all applicable
    change_enabled: bool = False
    reveals_enabled: bool = False
    bounds: Bounds = Bounds()
    n_vehicles: int = 1
    output: str = "text"
    trace_render: str = "none"
    deterministic: bool = False
    expect: str | None = None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _build_parser() -> _Parser:
    from . import __version__

    p = _Parser(prog="revlab", description=__doc__)
    p.add_argument("--version", action="version", version=f"revlab {__version__}")
    p.add_argument("--protocol", choices=PROTOCOLS, default=None)
    p.add_argument(
        "--goals",
        default=None,
        help="comma-separated goal ids (g1..g7) or 'all'",
    )
    p.add_argument("--change", action="store_true", default=None,
                   help="enable the pseudonym-change rule")
    p.add_argument("--reveals", action="store_true", default=None,
                   help="enable key-reveal rules")
    p.add_argument("--vehicles", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--max-changes", type=int, default=None)
    p.add_argument("--fresh-budget", type=int, default=None,
                   help="adversary fresh-name budget")
    p.add_argument("--synthesis-depth", type=int, default=None)
    p.add_argument("--max-sessions", type=int, default=None)
    p.add_argument("--output", choices=("text", "json"), default=None)
    p.add_argument("--trace", dest="trace_render", choices=("none", "msc"),
                   default=None)
    p.add_argument("--deterministic", action="store_true", default=None,
                   help="zero out timing so output is byte-reproducible")
    p.add_argument("--expect", default=None, metavar="FILE",
                   help="reference verdict matrix; exit 1 on mismatch")
    p.add_argument("--config", default=None, metavar="FILE",
                   help="JSON config file; explicit flags override it")
    return p


def parse_config(argv, parser: _Parser | None = None) -> ScenarioConfig:
    parser = parser or _build_parser()
    ns = parser.parse_args(argv)
    file_cfg: dict = {}
    if ns.config:
        try:
            with open(ns.config, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config file {ns.config}: {exc}")

    def pick(flag, key, default):
        if flag is not None:
            return flag
        return file_cfg.get(key, default)

    protocol = pick(ns.protocol, "protocol", "plain")
    if protocol not in PROTOCOLS:
        parser.error(f"invalid protocol {protocol!r}; choose from {', '.join(PROTOCOLS)}")
    change = bool(pick(ns.change, "change_enabled", False))
    reveals = bool(pick(ns.reveals, "reveals_enabled", False))
    goals_raw = pick(ns.goals, "goals", None)
    goals = _parse_goals(goals_raw, change, parser)
    file_bounds = file_cfg.get("bounds", {})
    defaults = Bounds()
    try:
        bounds = Bounds(
            max_steps=pick(ns.max_steps, None, file_bounds.get("max_steps", defaults.max_steps)),
            max_changes=pick(ns.max_changes, None, file_bounds.get("max_changes", defaults.max_changes)),
            adversary_fresh_budget=pick(
                ns.fresh_budget, None,
                file_bounds.get("adversary_fresh_budget", defaults.adversary_fresh_budget),
            ),
            synthesis_depth=pick(
                ns.synthesis_depth, None,
                file_bounds.get("synthesis_depth", defaults.synthesis_depth),
            ),
            max_sessions=pick(ns.max_sessions, None, file_bounds.get("max_sessions", defaults.max_sessions)),
        )
    except ValueError as exc:
        parser.error(str(exc))
    n_vehicles = pick(ns.vehicles, "n_vehicles", 1)
    if n_vehicles < 1:
        parser.error("--vehicles must be >= 1")
    return ScenarioConfig(
        protocol=protocol,
        goals=goals,
        change_enabled=change,
        reveals_enabled=reveals,
        bounds=bounds,
        n_vehicles=n_vehicles,
        output=pick(ns.output, "output", "text"),
        trace_render=pick(ns.trace_render, "trace_render", "none"),
        deterministic=bool(pick(ns.deterministic, "deterministic", False)),
        expect=ns.expect or file_cfg.get("expect"),
    )


def _parse_goals(raw, change_enabled: bool, parser: _Parser) -> tuple:
    if raw is None or raw == "all" or raw == "":
        return ()
    if isinstance(raw, str):
        wanted = tuple(g.strip().lower() for g in raw.split(",") if g.strip())
    else:
        wanted = tuple(str(g).lower() for g in raw)
    bad = [g for g in wanted if g not in GOAL_IDS]
    if bad:
        parser.error(
            f"invalid goal name(s): {', '.join(bad)}; valid: {', '.join(GOAL_IDS)}"
        )
    need_change = [g for g in wanted if g in CHANGE_GOALS]
    if need_change and not change_enabled:
        parser.error(
            f"goal(s) {', '.join(need_change)} require --change "
            "(pseudonym-change rule disabled)"
        )
    return wanted


def run(config: ScenarioConfig) -> tuple[dict, int]:
    """Execute a scenario; returns (report document, exit code)."""
    spec = build_protocol(
        config.protocol,
        change_enabled=config.change_enabled,
        reveals_enabled=config.reveals_enabled,
    )
    workers = int(os.environ.get("REVLAB_WORKERS", "1") or "1")
    started = time.monotonic()
    result = run_all(
        spec,
        config.bounds,
        goals=config.goals or None,
        n_vehicles=config.n_vehicles,
        workers=workers,
    )
    elapsed = time.monotonic() - started
    doc = build_document(
        result,
        elapsed,
        deterministic=config.deterministic,
        trace_render=config.trace_render,
    )
    code = 0
    if config.expect:
        try:
            with open(config.expect, "r", encoding="utf-8") as fh:
                reference = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ExpectFileError(f"cannot read reference matrix {config.expect}: {exc}")
        mismatches = compare_with_reference(doc, reference)
        if mismatches:
            doc["expect_mismatches"] = mismatches
            code = MISMATCH_EXIT
    return doc, code


def main(argv=None) -> int:
    config = parse_config(sys.argv[1:] if argv is None else argv)
    try:
        doc, code = run(config)
    except ExpectFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (EvidenceCheckError, ReplayMismatchError) as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return INTERNAL_EXIT
    if config.output == "json":
        sys.stdout.write(to_json(doc))
    else:
        sys.stdout.write(render_text(doc))
        for line in doc.get("expect_mismatches", []):
            print(f"expect mismatch: {line}")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
