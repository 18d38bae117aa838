"""Check evaluation and report serialization.

Reports are canonical JSON: sorted keys, two-space indent, floats written
with 17 significant digits so they round-trip exactly. Wall-clock timing
goes to a sidecar file so the report itself stays byte-stable.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .kernels import BACKEND
from .runner import RUNNERS, RunResult
from .scenario import Scenario

REPORT_SCHEMA_VERSION = 1

# neutral descriptions of what each metric family witnesses
ANCHORS = (
    ("joint_tv", "equivalent models induce one observational joint"),
    ("do_gap", "interventional answers separate observationally equivalent models"),
    ("do.", "interventional query under surgery"),
    ("observational_gap", "surgery families agree on observational data"),
    ("posterior_gap", "conditioning cannot tell surgery families apart"),
    ("degenerate", "demo separates interventional answers"),
    ("lap.max_locality", "non-descendants insensitive to shifts of the source state"),
    ("lap.max_autonomy", "non-descendant mechanisms insensitive to the source's parameters"),
    ("lap.min_leak_residual", "declared cross-mechanism leaks are visible"),
    ("leak.", "declared cross-mechanism leak"),
    ("identity.", "overlap minus countersupport equals the confirmation gap"),
    ("eps_loc", "non-use gradient bound"),
    ("eps_aut", "cross-block mechanism sensitivity"),
    ("c_est", "certified local Jacobian bound"),
    ("lemma.", "block locality bounds cross-task gradient alignment"),
    ("multistep.", "multi-step forgetting bound from logged alignments"),
    ("max_abs_inner", "disjoint usage gives orthogonal task gradients"),
    ("max_abs_delta_ra", "disjoint usage leaves the old task's risk unchanged"),
    ("forgetting", "old-task risk change after training on the new task"),
    ("mean_cosine", "time-averaged gradient alignment"),
    ("first_order.", "one-step change matches the first-order prediction"),
    ("diverged", "training stayed finite"),
)
KIND_ANCHORS = {
    "cap-audit": "translation commutes with composition; laws and locality persist",
    "epistemics": "episode-log score or probability decomposition",
    "scm-diagnostics": "mechanism separability witness",
}


def anchor_for(kind: str, metric: str) -> str:
    if kind != "epistemics" or metric.startswith("identity."):
        for prefix, text in ANCHORS:
            if metric.startswith(prefix):
                return text
    return KIND_ANCHORS.get(kind, "scenario metric")


_CMP = {
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "==": lambda a, b: a == b,
}


def verdict(measured: float, comparator: str, threshold: float) -> str:
    if measured is None or not math.isfinite(measured):
        return "fail"
    return "pass" if _CMP[comparator](measured, threshold) else "fail"


@dataclass(frozen=True)
class Report:
    document: dict
    tables: dict[str, list[dict]]
    elapsed: float

    @property
    def passed(self) -> bool:
        return self.document["verdict"] == "pass"


def evaluate_checks(sc: Scenario, res: RunResult, kind: str, overrides: Mapping[str, float]) -> list[dict]:
    out = []
    for chk in sc.checks:
        name = chk["name"]
        threshold = float(overrides.get(name, sc.tolerances.get(name, chk["threshold"])))
        value = res.metrics.get(chk["metric"])
        rec: dict[str, Any] = {
            "name": name,
            "metric": chk["metric"],
            "anchor": chk.get("anchor") or anchor_for(kind, chk["metric"]),
            "comparator": chk["comparator"],
            "threshold": threshold,
        }
        if value is None:
            rec.update(measured=None, verdict="fail", note="metric not produced")
        elif "target" in chk:
            rec.update(value=value, target=float(chk["target"]), measured=abs(value - float(chk["target"])))
        else:
            rec["measured"] = value
        if "verdict" not in rec:
            rec["verdict"] = verdict(rec["measured"], chk["comparator"], threshold)
        out.append(rec)
    return out


def run(sc: Scenario, seed: int | None = None, overrides: Mapping[str, float] | None = None) -> Report:
    seed = sc.seed if seed is None else int(seed)
    overrides = dict(overrides or {})
    start = time.perf_counter()
    res = RUNNERS[sc.kind](sc, seed)
    elapsed = time.perf_counter() - start
    checks = evaluate_checks(sc, res, sc.kind, overrides)
    doc = {
        "report_schema": REPORT_SCHEMA_VERSION,
        "toolkit_version": __version__,
        "backend": BACKEND,
        "scenario": {"id": sc.id, "kind": sc.kind, "sha256": sc.sha256},
        "seed": seed,
        "tolerance_overrides": {k: float(v) for k, v in sorted(overrides.items())},
        "flags": list(res.flags),
        "metrics": dict(sorted(res.metrics.items())),
        "checks": checks,
        "summary": {"checks": len(checks), "failed": sum(c["verdict"] == "fail" for c in checks)},
        "verdict": "pass" if all(c["verdict"] == "pass" for c in checks) else "fail",
    }
    doc["tables"] = res.tables
    return Report(doc, res.tables, elapsed)


# --- serialization ---------------------------------------------------------------


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _scalar(x) -> str:
    if x is None or isinstance(x, (bool, str)):
        return json.dumps(x)
    if isinstance(x, int):
        return str(x)
    if hasattr(x, "item"):
        return _scalar(x.item())
    return _fmt_float(float(x))


def canonical_json(obj, indent: int = 0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [f'{inner}{_scalar(str(k))}: {canonical_json(obj[k], indent + 1)}' for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(inner + canonical_json(v, indent + 1) for v in obj) + "\n" + pad + "]"
    return _scalar(obj)


def report_bytes(rep: Report) -> bytes:
    return (canonical_json(rep.document) + "\n").encode("utf-8")


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = sorted({k for r in rows for k in r})
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".17g")
    return x


def write(rep: Report, out_dir: str | Path, fmt: str = "json") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sid = rep.document["scenario"]["id"]
    written = []
    if fmt == "json":
        p = out / f"{sid}.report.json"
        p.write_bytes(report_bytes(rep))
        written.append(p)
    elif fmt == "csv":
        p = out / f"{sid}.checks.csv"
        p.write_text(_csv(rep.document["checks"]), encoding="utf-8")
        written.append(p)
        for name, rows in sorted(rep.tables.items()):
            if rows:
                q = out / f"{sid}.{name}.csv"
                q.write_text(_csv(rows), encoding="utf-8")
                written.append(q)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    t = out / f"{sid}.timing.json"
    t.write_text(canonical_json({"scenario": sid, "seconds": rep.elapsed}) + "\n", encoding="utf-8")
    return written
