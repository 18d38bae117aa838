"""Scenario files: parsing, schema validation and object construction.

A scenario is one JSON document with a ``kind``, a kind-specific
``payload``, a seed, and a list of checks. Each check names a metric the
kind's runner produces, a comparator and a threshold; ``tolerances`` in the
file (or on the command line) override thresholds by check name.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from jsonschema import Draft202012Validator

from .cap import IMPLS, AffinePhi, AnalogyMap, BoxCarrier, DomainInterpretation, FiniteCarrier, FinitePhi, Law
from .errors import LapcapError, SchemaError
from .forgetting import BlockModel, Layer, Task
from .mechanisms import PRIMITIVES
from .rng import make_rng
from .scm import ParametricScm, validate
from .terms import PrimitiveDecl, Signature, parse_term

SCHEMA_VERSION = 1
KINDS = ("scm-diagnostics", "obs-equivalence", "bayes-surgery", "cap-audit", "forgetting", "epistemics")
COMPARATORS = ("<=", ">=", "<", ">", "==")
PROBE_TYPES = ("analogy_residual", "locality", "law_residual", "generalization", "stochastic", "spurious", "nonuse", "drift")

_num = {"type": "number"}
_nums = {"type": "array", "items": _num}
_str = {"type": "string"}

_check = {
    "type": "object",
    "required": ["name", "metric", "comparator", "threshold"],
    "properties": {
        "name": _str, "metric": _str, "comparator": {"enum": list(COMPARATORS)}, "threshold": _num,
        "target": _num, "anchor": _str,
    },
    "additionalProperties": False,
}

_mechanism = {
    "type": "object",
    "required": ["node", "primitive"],
    "properties": {
        "node": _str,
        "parents": {"type": "array", "items": _str},
        "primitive": {"enum": sorted(PRIMITIVES)},
        "params": _nums,
        "noise": {"type": "array", "prefixItems": [{"enum": ["bernoulli", "point", "uniform", "gaussian", "categorical"]}]},
        "config": {"type": "object"},
        "leaks": {"type": "array", "items": {"type": "array", "prefixItems": [_str, _num], "minItems": 2, "maxItems": 2}},
    },
    "additionalProperties": False,
}

_scm = {
    "type": "object",
    "required": ["mechanisms"],
    "properties": {
        "nodes": {"type": "array", "items": _str},
        "mode": {"enum": ["markovian", "semi-markovian"]},
        "mechanisms": {"type": "array", "items": _mechanism, "minItems": 1},
        "noise_coupling": {"type": "object", "required": ["latent", "members"]},
        "domains": {"type": "object", "additionalProperties": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
    },
    "additionalProperties": False,
}

_carrier = {
    "oneOf": [
        {"type": "object", "required": ["finite"], "properties": {"finite": {"type": "array", "minItems": 1}},
         "additionalProperties": False},
        {"type": "object", "required": ["box"], "properties": {"box": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
         "additionalProperties": False},
    ]
}

_domain = {
    "type": "object",
    "required": ["carriers"],
    "properties": {
        "carriers": {"type": "object", "additionalProperties": _carrier},
        "params": {"type": "object", "additionalProperties": _nums},
        "relations": {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "array"}}},
        "ties": {"type": "object", "additionalProperties": _str},
    },
    "additionalProperties": False,
}

_signature = {
    "type": "object",
    "required": ["sorts", "primitives"],
    "properties": {
        "sorts": {"type": "array", "items": _str},
        "primitives": {"type": "object", "additionalProperties": {
            "type": "object",
            "required": ["inputs", "output", "kind", "impl"],
            "properties": {
                "inputs": {"type": "array", "items": _str}, "output": _str,
                "kind": {"enum": ["function", "predicate"]}, "impl": {"enum": sorted(IMPLS)},
                "param_arity": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        }},
    },
    "additionalProperties": False,
}

_phi = {
    "oneOf": [
        {"type": "object", "required": ["affine"], "properties": {"affine": {"type": "array", "items": _num, "minItems": 1, "maxItems": 2}},
         "additionalProperties": False},
        {"type": "object", "required": ["table"], "properties": {"table": {"type": "object"}}, "additionalProperties": False},
    ]
}

_cap = {
    "type": "object",
    "required": ["signature", "domains", "analogy"],
    "properties": {
        "signature": _signature,
        "target_signature": _signature,
        "domains": {"type": "object", "required": ["A", "B"], "properties": {"A": _domain, "B": _domain},
                    "additionalProperties": False},
        "analogy": {
            "type": "object",
            "required": ["phi", "correspondence"],
            "properties": {
                "phi": {"type": "object", "additionalProperties": _phi},
                "correspondence": {"type": "object", "additionalProperties": _str},
                "sort_map": {"type": "object", "additionalProperties": _str},
                "bilipschitz": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
            },
            "additionalProperties": False,
        },
        "laws": {"type": "array", "items": {
            "type": "object", "required": ["name", "left", "right"],
            "properties": {"name": _str, "left": _str, "right": _str, "weight": _num}, "additionalProperties": False,
        }},
        "n_inputs": {"type": "integer", "minimum": 1},
        "probes": {"type": "array", "items": {
            "type": "object", "required": ["id", "type"],
            "properties": {"id": _str, "type": {"enum": list(PROBE_TYPES)}},
        }},
    },
    "additionalProperties": False,
}

_layer = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["linear", "affine", "relu", "tanh"]},
        "block": _str,
        "shape": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
        "leaks": {"type": "array", "items": {"type": "array", "prefixItems": [_str, _num], "minItems": 2, "maxItems": 2}},
    },
    "additionalProperties": False,
}

_task = {
    "type": "object",
    "properties": {
        "loss": {"enum": ["squared-error", "logistic"]},
        "inputs": {"type": "array"},
        "targets": {"type": "array"},
        "sampler": {
            "type": "object",
            "required": ["kind", "n", "slope"],
            "properties": {"kind": {"const": "line"}, "n": {"type": "integer", "minimum": 1}, "slope": _num,
                           "dim": {"type": "integer", "minimum": 1}, "seed": {"type": "integer"}},
            "additionalProperties": False,
        },
    },
    "oneOf": [{"required": ["inputs", "targets"]}, {"required": ["sampler"]}],
    "additionalProperties": False,
}

_forgetting = {
    "type": "object",
    "required": ["model", "tasks", "theta0", "schedule", "probe_box"],
    "properties": {
        "model": {
            "type": "object",
            "required": ["blocks", "heads", "usage"],
            "properties": {
                "blocks": {"type": "array", "items": {"type": "array", "prefixItems": [_str, {"type": "integer", "minimum": 1}],
                                                      "minItems": 2, "maxItems": 2}},
                "heads": {"type": "object", "additionalProperties": {"type": "array", "items": _layer}},
                "usage": {"type": "object", "additionalProperties": {"type": "array", "items": _str}},
            },
            "additionalProperties": False,
        },
        "tasks": {"type": "object", "required": ["A", "B"], "properties": {"A": _task, "B": _task},
                  "additionalProperties": False},
        "theta0": _nums,
        "schedule": {"type": "object", "required": ["steps", "eta", "batch"],
                     "properties": {"steps": {"type": "integer", "minimum": 1}, "eta": {"type": "number", "minimum": 0},
                                    "batch": {"type": "integer", "minimum": 1}},
                     "additionalProperties": False},
        "probe_box": {"type": "array", "items": _nums, "minItems": 2, "maxItems": 2},
        "probe_points": {"type": "integer", "minimum": 2},
        "first_order_etas": _nums,
    },
    "additionalProperties": False,
}

_episode = {
    "type": "object",
    "required": ["cost", "resources"],
    "properties": {
        "cost": {"type": "number", "exclusiveMinimum": 0},
        "resources": {"type": "array", "items": _str, "minItems": 1},
        "conjectures": {"type": "array", "items": {
            "type": "object", "required": ["name", "novel", "tests", "changes_do_law"],
            "properties": {"name": _str, "novel": {"type": "boolean"}, "changes_do_law": {"type": "boolean"},
                           "tests": {"type": "array", "items": {
                               "type": "object", "required": ["severity", "survived"],
                               "properties": {"severity": {"type": "number", "minimum": 0, "maximum": 1},
                                              "survived": {"type": "boolean"}},
                               "additionalProperties": False}}},
            "additionalProperties": False}},
        "queries": {"type": "array", "items": {
            "type": "object", "required": ["name", "weight", "answerable_before", "answerable_after", "validated"],
            "properties": {"name": _str, "weight": {"type": "number", "minimum": 0},
                           "answerable_before": {"type": "boolean"}, "answerable_after": {"type": "boolean"},
                           "validated": {"type": "boolean"}},
            "additionalProperties": False}},
        "edits": {"type": "array", "items": {
            "type": "object", "required": ["name", "fail", "hold"],
            "properties": {"name": _str, "fail": {"type": "integer", "minimum": 0}, "hold": {"type": "boolean"}},
            "additionalProperties": False}},
    },
    "additionalProperties": False,
}

_epistemics = {
    "type": "object",
    "properties": {
        "decompositions": {"type": "array", "items": {
            "type": "object", "required": ["id", "probabilities", "H", "E"],
            "properties": {"id": _str, "probabilities": {"type": "object", "additionalProperties": _num},
                           "H": {"type": "array"}, "E": {"type": "array"}},
            "additionalProperties": False}},
        "episodes": {"type": "array", "items": {
            "type": "object", "required": ["id", "log", "alpha", "beta"],
            "properties": {"id": _str, "log": _episode, "alpha": {"type": "number", "exclusiveMinimum": 0},
                           "beta": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False}},
        "random_identity_cases": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

PAYLOADS = {
    "scm-diagnostics": {
        "type": "object",
        "required": ["model"],
        "properties": {
            "model": _scm,
            "probe_size": {"type": "integer", "minimum": 1},
            "declared_leaks": {"type": "array", "items": {
                "type": "object", "required": ["source", "target", "gain"],
                "properties": {"source": _str, "target": _str, "gain": _num}, "additionalProperties": False}},
            "icm": {"type": "array", "items": {
                "type": "object", "required": ["id", "node"],
                "properties": {"id": _str, "node": _str, "n": {"type": "integer", "minimum": 100}},
                "additionalProperties": False}},
            "interventions": {"type": "array", "items": {
                "type": "object", "required": ["id", "do", "query"],
                "properties": {"id": _str, "do": {"type": "object", "additionalProperties": _num},
                               "query": {"type": "object", "additionalProperties": _num}},
                "additionalProperties": False}},
        },
        "additionalProperties": False,
    },
    "obs-equivalence": {
        "type": "object",
        "properties": {"flip": {"type": "number", "minimum": 0, "maximum": 1}, "do_value": _num, "gap": _num},
        "additionalProperties": False,
    },
    "bayes-surgery": {
        "type": "object",
        "required": ["hypotheses", "prior", "families", "data"],
        "properties": {
            "hypotheses": {"type": "object", "additionalProperties": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
            "prior": {"type": "object", "additionalProperties": _num},
            "families": {"type": "array", "items": {"enum": ["cut-parent", "cut-child"]}, "minItems": 2, "maxItems": 2},
            "data": {"type": "object", "required": ["n", "p_x", "flip"],
                     "properties": {"n": {"type": "integer", "minimum": 0}, "p_x": _num, "flip": _num},
                     "additionalProperties": False},
            "do_value": _num,
            "gap": _num,
        },
        "additionalProperties": False,
    },
    "cap-audit": _cap,
    "forgetting": _forgetting,
    "epistemics": _epistemics,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "id", "kind", "seed", "payload", "checks"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "id": {"type": "string", "pattern": "^[a-z0-9][a-z0-9-]*$"},
        "description": _str,
        "kind": {"enum": list(KINDS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "tolerances": {"type": "object", "additionalProperties": _num},
        "payload": {"type": "object"},
        "checks": {"type": "array", "items": _check, "minItems": 1},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class Scenario:
    id: str
    kind: str
    seed: int
    payload: Mapping[str, Any]
    checks: tuple[Mapping[str, Any], ...]
    tolerances: Mapping[str, float]
    sha256: str
    description: str = ""
    source: str = field(default="", compare=False)


@dataclass(frozen=True)
class ValidationResult:
    path: str
    errors: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.errors


def _field_path(err) -> str:
    out = ""
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def parse_bytes(raw: bytes, source: str = "<bytes>") -> dict:
    try:
        doc = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{source}: not UTF-8 text ({exc.reason})") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{source}: top level must be an object", line=1, column=1)
    return doc


def schema_errors(doc: Mapping) -> list[str]:
    """Every schema violation as ``field.path: message``, in a stable order."""
    errs = []
    for err in Draft202012Validator(SCHEMA).iter_errors(doc):
        errs.append((_field_path(err), err.message))
    kind = doc.get("kind")
    if kind in PAYLOADS and isinstance(doc.get("payload"), dict):
        for err in Draft202012Validator(PAYLOADS[kind]).iter_errors(doc["payload"]):
            path = _field_path(err)
            if path == "<root>":
                errs.append(("payload", f"{err.message} (payload does not match kind {kind!r})"))
            else:
                errs.append(("payload" + ("." + path if not path.startswith("[") else path), err.message))
    return [f"{p}: {m}" for p, m in sorted(errs)]


def semantic_errors(doc: Mapping) -> list[str]:
    """Errors only visible after building the payload's objects."""
    kind, payload = doc["kind"], doc["payload"]
    out = []
    names = [c["name"] for c in doc["checks"]]
    if len(set(names)) != len(names):
        out.append("checks: check names must be unique")
    for key in doc.get("tolerances", {}):
        if key not in names:
            out.append(f"tolerances.{key}: no check with this name")
    try:
        if kind == "scm-diagnostics":
            rep = validate(ParametricScm.from_dict(payload["model"]))
            out += [f"payload.model: {code}: {msg}" for code, msg in rep.violations]
        elif kind == "cap-audit":
            build_cap(payload)
        elif kind == "forgetting":
            build_forgetting(payload, doc["seed"])
        elif kind == "bayes-surgery":
            if set(payload["prior"]) != set(payload["hypotheses"]):
                out.append("payload.prior: keys must match payload.hypotheses")
    except LapcapError as exc:
        out.append(f"payload: {exc}")
    except (KeyError, TypeError, ValueError) as exc:
        out.append(f"payload: malformed ({type(exc).__name__}: {exc})")
    return out


def load(path: str | Path) -> Scenario:
    """Parse and fully validate; raises SchemaError listing every problem."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise SchemaError(f"{path}: {exc.strerror or exc}") from None
    return load_bytes(raw, str(path))


def load_bytes(raw: bytes, source: str = "<bytes>") -> Scenario:
    doc = parse_bytes(raw, source)
    errs = schema_errors(doc)
    if not errs:
        errs = semantic_errors(doc)
    if errs:
        err = SchemaError(f"{source}: " + "; ".join(errs), path=errs[0].split(":")[0])
        err.errors = errs
        raise err
    return Scenario(doc["id"], doc["kind"], int(doc["seed"]), doc["payload"], tuple(doc["checks"]),
                    dict(doc.get("tolerances", {})), hashlib.sha256(raw).hexdigest(), doc.get("description", ""), source)


def validate_scenario(path: str | Path) -> ValidationResult:
    try:
        load(path)
    except SchemaError as exc:
        return ValidationResult(str(path), tuple(getattr(exc, "errors", [str(exc)])))
    return ValidationResult(str(path), ())


# --- builders -----------------------------------------------------------------


def build_signature(d: Mapping) -> Signature:
    return Signature.build(d["sorts"], {
        name: PrimitiveDecl(p["inputs"], p["output"], p["kind"], p["impl"], p.get("param_arity", 0))
        for name, p in d["primitives"].items()
    })


def _carrier(d):
    if "finite" in d:
        return FiniteCarrier(d["finite"])
    return BoxCarrier(*d["box"])


def build_domain(sig: Signature, d: Mapping) -> DomainInterpretation:
    return DomainInterpretation(
        sig,
        {s: _carrier(c) for s, c in d["carriers"].items()},
        {k: tuple(v) for k, v in d.get("params", {}).items()},
        {k: frozenset(tuple(p) for p in v) for k, v in d.get("relations", {}).items()},
        dict(d.get("ties", {})),
    )


def build_analogy(d: Mapping) -> AnalogyMap:
    phi = {}
    for sort, spec in d["phi"].items():
        phi[sort] = AffinePhi(*spec["affine"]) if "affine" in spec else FinitePhi(dict(spec["table"]))
    bil = tuple(d["bilipschitz"]) if "bilipschitz" in d else None
    return AnalogyMap(phi, dict(d["correspondence"]), dict(d.get("sort_map", {})), bil)


@dataclass(frozen=True)
class CapSetup:
    sig_a: Signature
    sig_b: Signature
    dom_a: DomainInterpretation
    dom_b: DomainInterpretation
    analogy: AnalogyMap
    laws: tuple[Law, ...]


def build_cap(payload: Mapping) -> CapSetup:
    sig_a = build_signature(payload["signature"])
    sig_b = build_signature(payload.get("target_signature", payload["signature"]))
    laws = tuple(Law(l["name"], parse_term(l["left"]), parse_term(l["right"]), l.get("weight", 1.0))
                 for l in payload.get("laws", ()))
    for law in laws:
        law.check(sig_a)
    return CapSetup(sig_a, sig_b, build_domain(sig_a, payload["domains"]["A"]), build_domain(sig_b, payload["domains"]["B"]),
                    build_analogy(payload["analogy"]), laws)


def _task(name: str, d: Mapping, seed: int) -> Task:
    loss = d.get("loss", "squared-error")
    if "sampler" in d:
        s = d["sampler"]
        x = make_rng(s.get("seed", seed), "data", name).uniform(-1.0, 1.0, (s["n"], s.get("dim", 1)))
        return Task(name, x, s["slope"] * x.sum(axis=1, keepdims=True), loss)
    return Task(name, np.asarray(d["inputs"], dtype=float), np.asarray(d["targets"], dtype=float), loss)


@dataclass(frozen=True)
class ForgettingSetup:
    model: BlockModel
    task_a: Task
    task_b: Task
    theta0: np.ndarray
    grid: np.ndarray
    box: tuple[np.ndarray, np.ndarray]


def build_forgetting(payload: Mapping, seed: int) -> ForgettingSetup:
    m = payload["model"]
    heads = {t: tuple(Layer(l["kind"], l.get("block"), tuple(l["shape"]) if "shape" in l else None,
                            tuple(tuple(x) for x in l.get("leaks", ()))) for l in layers)
             for t, layers in m["heads"].items()}
    for t in ("A", "B"):
        if t not in heads:
            raise SchemaError(f"payload.model.heads: missing head for task {t}", path="payload.model.heads")
    model = BlockModel(tuple(tuple(b) for b in m["blocks"]), heads, {t: frozenset(u) for t, u in m["usage"].items()})
    theta0 = np.asarray(payload["theta0"], dtype=float)
    model.split(theta0)
    lo, hi = (np.asarray(v, dtype=float) for v in payload["probe_box"])
    k = payload.get("probe_points", 9)
    axes = [np.linspace(a, b, k) for a, b in zip(lo, hi)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    return ForgettingSetup(model, _task("A", payload["tasks"]["A"], seed), _task("B", payload["tasks"]["B"], seed),
                           theta0, grid, (lo, hi))
