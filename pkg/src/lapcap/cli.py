"""Command-line entry point: validate | run | suite.

Exit codes: 0 all checks pass, 1 some check failed, 2 usage or execution
error (including unreadable or invalid scenarios and empty corpora).
"""
from __future__ import annotations

import argparse
import os
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .errors import LapcapError, SchemaError
from .report import canonical_json, run, write
from .scenario import load, validate_scenario

OUT_ENV = "LAPCAP_OUT"
DEFAULT_OUT = "lapcap-out"
EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def bundled_corpus() -> Path:
    return Path(str(resources.files("lapcap") / "corpus"))


def _tolerance(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {key!r}: {value!r} is not a number") from None


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lapcap", description="Run structural diagnostics scenarios.")
    p.add_argument("--version", action="version", version=f"lapcap {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="schema-check scenario files")
    v.add_argument("paths", nargs="+", type=Path)

    def common(q):
        q.add_argument("--seed", type=int, help="override the scenario seed")
        q.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        q.add_argument("--format", choices=("json", "csv"), default="json")
        q.add_argument("--tolerance", type=_tolerance, action="append", default=[], metavar="KEY=VALUE",
                       help="override a check threshold by check name (repeatable)")

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("path", type=Path)
    common(r)

    s = sub.add_parser("suite", help="run every scenario in a directory")
    s.add_argument("corpus", nargs="?", type=Path, help="scenario directory (default: bundled corpus)")
    common(s)
    return p


def _out_dir(args) -> Path:
    return args.out or Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _err(msg: str) -> None:
    print(f"lapcap: {msg}", file=sys.stderr)


def cmd_validate(args) -> int:
    bad = 0
    for path in args.paths:
        res = validate_scenario(path)
        if res.ok:
            print(f"{path}: valid")
        else:
            bad += 1
            for e in res.errors:
                print(f"{path}: {e}")
    return EXIT_ERROR if bad else EXIT_PASS


def run_one(path: Path, out: Path, seed, fmt: str, overrides: dict) -> tuple[int, dict | None]:
    try:
        sc = load(path)
        rep = run(sc, seed, overrides)
        write(rep, out, fmt)
    except SchemaError as exc:
        _err(str(exc))
        return EXIT_ERROR, None
    except (LapcapError, OSError, ValueError, ArithmeticError) as exc:
        _err(f"{path}: {type(exc).__name__}: {exc}")
        return EXIT_ERROR, None
    failed = [c["name"] for c in rep.document["checks"] if c["verdict"] == "fail"]
    line = f"{sc.id}: {rep.document['verdict']} ({len(rep.document['checks']) - len(failed)}/{len(rep.document['checks'])})"
    print(line + (f" failed: {', '.join(failed)}" if failed else ""))
    return (EXIT_PASS if not failed else EXIT_FAIL), rep.document


def cmd_run(args) -> int:
    code, _ = run_one(args.path, _out_dir(args), args.seed, args.format, dict(args.tolerance))
    return code


def cmd_suite(args) -> int:
    corpus = args.corpus or bundled_corpus()
    if not corpus.is_dir():
        _err(f"{corpus}: not a directory")
        return EXIT_ERROR
    paths = sorted(corpus.glob("*.json"))
    if not paths:
        _err(f"{corpus}: no scenario files")
        return EXIT_ERROR
    out = _out_dir(args)
    rows, worst = [], EXIT_PASS
    for path in paths:
        code, doc = run_one(path, out, args.seed, args.format, dict(args.tolerance))
        worst = max(worst, code)
        rows.append({
            "file": path.name,
            "scenario": doc["scenario"]["id"] if doc else None,
            "verdict": doc["verdict"] if doc else "error",
            "failed_checks": [c["name"] for c in doc["checks"] if c["verdict"] == "fail"] if doc else [],
        })
    summary = {
        "toolkit_version": __version__,
        "scenarios": rows,
        "passed": sum(r["verdict"] == "pass" for r in rows),
        "failed": sum(r["verdict"] == "fail" for r in rows),
        "errors": sum(r["verdict"] == "error" for r in rows),
        "total": len(rows),
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(canonical_json(summary) + "\n", encoding="utf-8")
    print(f"suite: {summary['passed']}/{summary['total']} passed, {summary['failed']} failed, {summary['errors']} errors")
    return worst


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"validate": cmd_validate, "run": cmd_run, "suite": cmd_suite}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
