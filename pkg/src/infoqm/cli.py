"""Command-line entry point: ``infoqm run|check-axioms|scan|verify-suite``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from infoqm.errors import InfoQMError, ScenarioError
from infoqm.runner import EXIT_ACCEPTANCE, EXIT_OK, EXIT_VALIDATION, load_scenario, run

log = logging.getLogger("infoqm")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="infoqm", description="Information-measure quantum dynamics toolkit.")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=True,
                      help="reject unknown scenario keys (default)")
    mode.add_argument("--lenient", dest="strict", action="store_false", help="ignore unknown scenario keys")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "execute a scenario file"),
        ("check-axioms", "classify the scenario's measure against the axiom list"),
        ("scan", "run a scenario's symmetry-breaking scan"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("scenario", type=Path)
    s = sub.add_parser("verify-suite", help="run every acceptance scenario in a directory")
    s.add_argument("directory", type=Path)
    return p


def _load(path: Path, strict: bool):
    try:
        return load_scenario(path, strict=strict)
    except ScenarioError as exc:
        for e in exc.errors:
            print(f"{path}: {e}", file=sys.stderr)
        return None
    except OSError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return None


def _report(rec) -> int:
    code = rec.exit_code
    if rec.error:
        print(f"error ({rec.error['code']}): {rec.error['message']}", file=sys.stderr)
    else:
        body = {k: v for k, v in rec.summary.items() if k not in ("task",)}
        print(json.dumps(body, indent=2, sort_keys=True, default=str))
    return code


def _cmd_single(args, force_kind=None) -> int:
    sc = _load(args.scenario, args.strict)
    if sc is None:
        return EXIT_VALIDATION
    kind = sc.task.get("kind")
    if force_kind == "Scan" and kind != "Scan":
        print(f"{args.scenario}: task.kind must be 'Scan' for the scan command", file=sys.stderr)
        return EXIT_VALIDATION
    if force_kind == "Axioms" and kind != "Axioms":
        sc.task = {"kind": "Axioms", "budget": 4, "probe": True}
    return _report(run(sc, args.out, args.seed))


def _cmd_verify(args) -> int:
    files = sorted(args.directory.glob("*.json"))
    if not files:
        print(f"{args.directory}: no scenario files", file=sys.stderr)
        return EXIT_VALIDATION
    worst = EXIT_OK
    base = args.out or Path("out") / "verify-suite"
    for path in files:
        sc = _load(path, args.strict)
        if sc is None:
            worst = max(worst, EXIT_VALIDATION)
            continue
        rec = run(sc, base / path.stem, args.seed)
        acc = rec.summary.get("acceptance")
        if rec.error:
            print(f"[FAIL] {path.name}: {rec.error['code']}: {rec.error['message']}")
        elif acc is not None:
            status = "PASS" if acc["passed"] else "FAIL"
            print(f"[{status}] {path.name}: criterion {acc['criterion']} {acc['name']} "
                  f"({acc['seconds']:.1f}s) {json.dumps(acc['values'], default=str)}")
            if acc.get("note"):
                print(f"       note: {acc['note']}")
        else:
            print(f"[PASS] {path.name}: {sc.task.get('kind')} completed")
        code = rec.exit_code
        if code == EXIT_OK:
            continue
        worst = EXIT_ACCEPTANCE if code == EXIT_ACCEPTANCE or worst == EXIT_ACCEPTANCE else max(worst, code)
    return worst


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return _cmd_single(args)
        if args.command == "check-axioms":
            return _cmd_single(args, "Axioms")
        if args.command == "scan":
            return _cmd_single(args, "Scan")
        return _cmd_verify(args)
    except InfoQMError as exc:
        print(f"error ({exc.code}): {exc}", file=sys.stderr)
        return EXIT_VALIDATION if exc.code == "validation" else 3


if __name__ == "__main__":
    sys.exit(main())
