"""Parametric structural causal models.

Construction and validation, ancestral sampling, exact enumeration of finite
models, and do-surgery. Models are immutable; every operation returns a new
object.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import CapacityError, UnsupportedModelError, ValidationError
from .mechanisms import PRIMITIVES, NoiseSpec
from .rng import make_rng

MAX_JOINT_SUPPORT = 10**6
LATENT = "__latent__"


def _freeze(value):
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, dict):
        return tuple(sorted((k, _freeze(v)) for k, v in value.items()))
    return value


def _thaw(value):
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    return value


@dataclass(frozen=True)
class MechanismSpec:
    """Structural assignment ``X_node = f(X_parents, U_node; theta)``.

    ``leaks`` lists ``(source, weight)`` pairs: the effective parameters of
    this mechanism are its own plus ``weight`` times the source node's own
    parameters (added to the leading entries). A weight of 1 on a zero own
    vector is full weight tying.
    """

    node: str
    parents: tuple[str, ...]
    primitive: str
    params: tuple[float, ...]
    noise: NoiseSpec = NoiseSpec("point", (0.0,))
    config: tuple = ()
    leaks: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        cfg = self.config if isinstance(self.config, tuple) else _freeze(dict(self.config))
        object.__setattr__(self, "config", cfg)
        object.__setattr__(self, "leaks", tuple((str(s), float(w)) for s, w in self.leaks))

    @property
    def cfg(self) -> dict:
        return {k: _thaw(v) for k, v in self.config}

    @property
    def kind(self) -> str:
        if self.primitive == "cpt":
            return "table"
        if self.primitive == "affine":
            return "linear-gaussian-free"
        return "library-primitive"

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "parents": list(self.parents),
            "primitive": self.primitive,
            "params": list(self.params),
            "noise": self.noise.to_list(),
            "config": self.cfg,
            "leaks": [[s, w] for s, w in self.leaks],
        }

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_dict(cls, d: Mapping) -> "MechanismSpec":
        noise = d.get("noise", ["point", 0.0])
        return cls(
            node=d["node"],
            parents=tuple(d.get("parents", ())),
            primitive=d["primitive"],
            params=tuple(d.get("params", ())),
            noise=NoiseSpec(noise[0], tuple(noise[1:])),
            config=d.get("config", {}),
            leaks=tuple(tuple(x) for x in d.get("leaks", ())),
        )


@dataclass(frozen=True)
class SharedLatent:
    """Discrete latent whose value is added to the noise of every member node."""

    noise: NoiseSpec
    members: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))


@dataclass(frozen=True)
class ParametricScm:
    nodes: tuple[str, ...]
    mechanisms: tuple[MechanismSpec, ...]
    mode: str = "markovian"
    noise_coupling: SharedLatent | None = None
    domains: tuple[tuple[str, float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))
        object.__setattr__(self, "domains", tuple((n, float(lo), float(hi)) for n, lo, hi in self.domains))

    @classmethod
    def from_mechanisms(cls, mechanisms: Sequence[MechanismSpec], **kwargs) -> "ParametricScm":
        return cls(tuple(m.node for m in mechanisms), tuple(mechanisms), **kwargs)

    def mechanism(self, node: str) -> MechanismSpec:
        for m in self.mechanisms:
            if m.node == node:
                return m
        raise ValidationError(f"unknown node {node!r}")

    def parents(self, node: str) -> tuple[str, ...]:
        return self.mechanism(node).parents

    def children(self, node: str) -> list[str]:
        return [m.node for m in self.mechanisms if node in m.parents]

    def descendants(self, node: str) -> set[str]:
        """Descendants of ``node``, including the node itself."""
        self.mechanism(node)
        seen, stack = {node}, [node]
        while stack:
            for c in self.children(stack.pop()):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def topological_order(self) -> list[str]:
        indeg = {n: 0 for n in self.nodes}
        for m in self.mechanisms:
            indeg[m.node] = sum(1 for p in m.parents if p in indeg)
        ready = [n for n in self.nodes if indeg[n] == 0]
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for c in self.children(n):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != len(self.nodes):
            raise ValidationError("graph contains a cycle", [("cycle", sorted(set(self.nodes) - set(order)))])
        return order

    def domain(self, node: str) -> tuple[float, float] | None:
        for n, lo, hi in self.domains:
            if n == node:
                return lo, hi
        return None

    def effective_params(self, node: str, overrides: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
        """Own parameters plus weighted leaks from other nodes' own parameters."""
        overrides = overrides or {}

        def own(n):
            return np.asarray(overrides[n], dtype=float) if n in overrides else np.asarray(self.mechanism(n).params)

        theta = own(node).copy()
        for src, w in self.mechanism(node).leaks:
            s = own(src)
            theta[: len(s)] += w * s
        return theta

    def replace_mechanism(self, spec: MechanismSpec) -> "ParametricScm":
        mechs = tuple(spec if m.node == spec.node else m for m in self.mechanisms)
        return replace(self, mechanisms=mechs)

    def to_dict(self) -> dict:
        d = {"nodes": list(self.nodes), "mode": self.mode, "mechanisms": [m.to_dict() for m in self.mechanisms]}
        if self.noise_coupling is not None:
            d["noise_coupling"] = {"latent": self.noise_coupling.noise.to_list(), "members": list(self.noise_coupling.members)}
        if self.domains:
            d["domains"] = {n: [lo, hi] for n, lo, hi in self.domains}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ParametricScm":
        mechs = tuple(MechanismSpec.from_dict(m) for m in d["mechanisms"])
        coupling = None
        if d.get("noise_coupling"):
            c = d["noise_coupling"]
            coupling = SharedLatent(NoiseSpec(c["latent"][0], tuple(c["latent"][1:])), tuple(c["members"]))
        nodes = tuple(d.get("nodes") or [m.node for m in mechs])
        domains = tuple((n, lo, hi) for n, (lo, hi) in sorted(d.get("domains", {}).items()))
        return cls(nodes, mechs, d.get("mode", "markovian"), coupling, domains)


# --- validation -----------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[tuple[str, str], ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {c for c, _ in self.violations}


def validate(scm: ParametricScm) -> ValidationReport:
    """List structural violations; never raises."""
    out: list[tuple[str, str]] = []
    names = list(scm.nodes)
    if len(set(names)) != len(names):
        out.append(("duplicate-node", "node names must be unique"))
    if [m.node for m in scm.mechanisms] != names:
        out.append(("mechanism-mismatch", "exactly one mechanism per node, in node order"))
    if scm.mode not in ("markovian", "semi-markovian"):
        out.append(("mode", f"unknown mode {scm.mode!r}"))
    declared = set(names)
    for m in scm.mechanisms:
        for p in m.parents:
            if p not in declared:
                out.append(("missing-parent", f"{m.node}: parent {p!r} is not a declared node"))
        prim = PRIMITIVES.get(m.primitive)
        if prim is None:
            out.append(("unknown-primitive", f"{m.node}: unknown primitive {m.primitive!r}"))
            continue
        for msg in prim.check_config(len(m.parents), m.cfg):
            out.append(("config", f"{m.node}: {msg}"))
        want = prim.param_count(len(m.parents), m.cfg)
        if want < 0 or len(m.params) != want:
            out.append(("arity", f"{m.node}: {m.primitive} expects {want} parameter(s), got {len(m.params)}"))
        for msg in m.noise.problems():
            out.append(("noise", f"{m.node}: {msg}"))
        if prim.law is not None and m.noise != NoiseSpec("uniform", (0.0, 1.0)):
            out.append(("noise", f"{m.node}: logistic_gate draws its bit from uniform(0, 1) noise"))
        for src, _ in m.leaks:
            if src not in declared or src == m.node:
                out.append(("leak", f"{m.node}: leak source {src!r} must be another declared node"))
            elif len(scm.mechanism(src).params) > len(m.params):
                out.append(("leak", f"{m.node}: leak source {src!r} has more parameters than the target"))
    if not any(c in ("missing-parent", "duplicate-node", "mechanism-mismatch") for c, _ in out):
        try:
            scm.topological_order()
        except ValidationError:
            out.append(("cycle", "cyclic graphs are not supported; markovian models must be acyclic"))
    c = scm.noise_coupling
    if c is not None:
        if scm.mode == "markovian":
            out.append(("coupling", "markovian models require mutually independent noises"))
        if not c.noise.is_finite or c.noise.problems():
            out.append(("coupling", "the shared latent must be a valid finite noise law"))
        for n in c.members:
            if n not in declared:
                out.append(("coupling", f"coupling member {n!r} is not a declared node"))
            elif PRIMITIVES.get(scm.mechanism(n).primitive, PRIMITIVES["affine"]).law is not None:
                out.append(("coupling", f"{n}: logistic_gate nodes cannot share a latent"))
    return ValidationReport(tuple(out))


def require_valid(scm: ParametricScm) -> None:
    report = validate(scm)
    if not report.ok:
        raise ValidationError("invalid model: " + "; ".join(m for _, m in report.violations), report.violations)


# --- evaluation ------------------------------------------------------------


def mechanism_output(scm: ParametricScm, node: str, parent_values: Sequence[np.ndarray], noise: np.ndarray,
                     theta: np.ndarray | None = None) -> np.ndarray:
    """Output of node's mechanism at given parent states and noise.

    Bernoulli gates report their success probability.
    """
    spec = scm.mechanism(node)
    prim = PRIMITIVES[spec.primitive]
    theta = scm.effective_params(node) if theta is None else theta
    if prim.law is not None:
        probs = prim.law(theta, list(parent_values), spec.cfg)[1][1]
        return np.broadcast_to(np.asarray(probs, dtype=float), np.shape(noise)).copy()
    return np.asarray(prim.apply(theta, list(parent_values), noise, spec.cfg), dtype=float)


def sample_noise(scm: ParametricScm, n: int, seed: int) -> dict[str, np.ndarray]:
    """Draw exogenous noise per node (own stream per node) plus the shared latent."""
    out = {node: scm.mechanism(node).noise.sample(make_rng(seed, "noise", node), n) for node in scm.nodes}
    if scm.noise_coupling is not None:
        out[LATENT] = scm.noise_coupling.noise.sample(make_rng(seed, "noise", LATENT), n)
    return out


def solve(scm: ParametricScm, noise: Mapping[str, np.ndarray], shifts: Mapping[str, float] | None = None,
          param_overrides: Mapping[str, np.ndarray] | None = None,
          only: set[str] | None = None) -> dict[str, np.ndarray]:
    """Evaluate states from noise in topological order.

    ``shifts`` adds a constant to a node's state after its mechanism runs; it
    realizes the state flow of that node with every parameter held fixed.
    ``only`` restricts evaluation to an ancestrally closed node set.
    """
    shifts = shifts or {}
    members = set(scm.noise_coupling.members) if scm.noise_coupling else set()
    values: dict[str, np.ndarray] = {}
    for node in scm.topological_order():
        if only is not None and node not in only:
            continue
        spec = scm.mechanism(node)
        prim = PRIMITIVES[spec.primitive]
        u = np.asarray(noise[node], dtype=float)
        if node in members:
            u = u + noise[LATENT]
        theta = scm.effective_params(node, param_overrides)
        x = np.asarray(prim.apply(theta, [values[p] for p in spec.parents], u, spec.cfg), dtype=float)
        x = np.broadcast_to(x, u.shape).astype(float)
        if node in shifts:
            x = x + shifts[node]
        values[node] = x
    return values


@dataclass(frozen=True)
class SampleTable:
    columns: tuple[str, ...]
    data: np.ndarray = field(repr=False)

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def __len__(self):
        return self.data.shape[0]


def simulate(scm: ParametricScm, n: int, seed: int) -> SampleTable:
    """Ancestral sampling; identical tables for identical (model, n, seed)."""
    require_valid(scm)
    if n < 1:
        raise ValueError("n must be positive")
    values = solve(scm, sample_noise(scm, n, seed))
    return SampleTable(scm.nodes, np.column_stack([values[v] for v in scm.nodes]))


# --- exact distributions ---------------------------------------------------


@dataclass(frozen=True)
class DistributionTable:
    """Exact joint law over finitely supported variables."""

    variables: tuple[str, ...]
    support: tuple[tuple[float, ...], ...]
    probabilities: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != tuple(len(s) for s in self.support):
            raise ValueError("probability array does not match the support grid")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def from_atoms(cls, variables: Sequence[str], values: np.ndarray, probs: np.ndarray) -> "DistributionTable":
        values = np.asarray(values, dtype=float).reshape(len(probs), len(variables))
        support, index = [], []
        for j in range(len(variables)):
            s, inv = np.unique(values[:, j], return_inverse=True)
            support.append(tuple(float(v) for v in s))
            index.append(inv.reshape(-1))
        arr = np.zeros(tuple(len(s) for s in support))
        np.add.at(arr, tuple(index), probs)
        return cls(tuple(variables), tuple(support), arr)

    def marginal(self, variables: Sequence[str]) -> "DistributionTable":
        keep = [self.variables.index(v) for v in variables]
        drop = tuple(i for i in range(len(self.variables)) if i not in keep)
        p = self.probabilities.sum(axis=drop) if drop else self.probabilities
        order = sorted(keep)
        p = np.transpose(p, [order.index(i) for i in keep])
        return DistributionTable(tuple(variables), tuple(self.support[i] for i in keep), p)

    def prob(self, assignment: Mapping[str, float]) -> float:
        """Probability of a (partial) assignment."""
        t = self.marginal(list(assignment))
        idx = []
        for v in t.variables:
            val = float(assignment[v])
            if val not in t.support[t.variables.index(v)]:
                return 0.0
            idx.append(t.support[t.variables.index(v)].index(val))
        return float(t.probabilities[tuple(idx)])

    def atoms(self) -> list[tuple[tuple[float, ...], float]]:
        out = []
        for idx in np.ndindex(*self.probabilities.shape):
            out.append((tuple(self.support[j][i] for j, i in enumerate(idx)), float(self.probabilities[idx])))
        return out

    def total_variation(self, other: "DistributionTable") -> float:
        if set(self.variables) != set(other.variables):
            raise ValueError("tables range over different variables")
        other = other.marginal(self.variables)
        mine, theirs = dict(self.atoms()), dict(other.atoms())
        keys = set(mine) | set(theirs)
        return 0.5 * float(sum(abs(mine.get(k, 0.0) - theirs.get(k, 0.0)) for k in keys))


def _branches(scm: ParametricScm, node: str) -> int:
    spec = scm.mechanism(node)
    prim = PRIMITIVES[spec.primitive]
    if prim.law is not None:
        return 2
    if not prim.uses_noise:
        return 1
    if not spec.noise.is_finite:
        raise UnsupportedModelError(f"{node}: {spec.noise.kind} noise has no finite support")
    return len(spec.noise.support()[0])


def enumerate_joint(scm: ParametricScm) -> DistributionTable:
    """Exact observational joint by summing over all noise configurations."""
    require_valid(scm)
    order = scm.topological_order()
    coupling = scm.noise_coupling
    bound = math.prod(_branches(scm, n) for n in order)
    if coupling is not None:
        bound *= len(coupling.noise.support()[0])
    if bound > MAX_JOINT_SUPPORT:
        raise CapacityError(f"joint support bound {bound} exceeds {MAX_JOINT_SUPPORT}")

    cols: list[str] = []
    if coupling is not None:
        lv, lp = coupling.noise.support()
        atoms, probs = np.asarray(lv, dtype=float).reshape(-1, 1), np.asarray(lp, dtype=float)
        cols.append(LATENT)
    else:
        atoms, probs = np.zeros((1, 0)), np.ones(1)
    members = set(coupling.members) if coupling else set()

    for node in order:
        spec = scm.mechanism(node)
        prim = PRIMITIVES[spec.primitive]
        theta = scm.effective_params(node)
        parents = [atoms[:, cols.index(p)] for p in spec.parents]
        m = len(probs)
        if prim.law is not None:
            vals, ps = prim.law(theta, parents, spec.cfg)
            new_vals = [np.full(m, v) for v in vals]
            new_ps = [np.broadcast_to(np.asarray(p, dtype=float), (m,)) for p in ps]
        elif not prim.uses_noise:
            new_vals = [np.broadcast_to(prim.apply(theta, parents, np.zeros(m), spec.cfg), (m,))]
            new_ps = [np.ones(m)]
        else:
            uv, up = spec.noise.support()
            new_vals, new_ps = [], []
            for u, q in zip(uv, up):
                uu = np.full(m, u)
                if node in members:
                    uu = uu + atoms[:, cols.index(LATENT)]
                new_vals.append(np.broadcast_to(prim.apply(theta, parents, uu, spec.cfg), (m,)))
                new_ps.append(np.full(m, q))
        stacked = np.concatenate([np.column_stack([atoms, v]) for v in new_vals])
        weights = np.concatenate([probs * p for p in new_ps])
        keep = weights > 0
        stacked, weights = stacked[keep], weights[keep]
        uniq, inv = np.unique(stacked, axis=0, return_inverse=True)
        probs = np.bincount(inv.reshape(-1), weights=weights, minlength=len(uniq))
        atoms = uniq
        cols.append(node)

    idx = [cols.index(v) for v in scm.nodes]
    return DistributionTable.from_atoms(scm.nodes, atoms[:, idx], probs)


# --- interventions ---------------------------------------------------------


@dataclass(frozen=True)
class Intervention:
    """Map from node to a fixed value or a replacement mechanism."""

    assignments: tuple[tuple[str, object], ...]

    def __post_init__(self):
        items = self.assignments.items() if isinstance(self.assignments, Mapping) else self.assignments
        object.__setattr__(self, "assignments", tuple(sorted(items, key=lambda kv: kv[0])))

    @classmethod
    def do(cls, **values) -> "Intervention":
        return cls(tuple(values.items()))


def point_mechanism(node: str, value: float) -> MechanismSpec:
    return MechanismSpec(node, (), "constant", (float(value),), NoiseSpec("point", (0.0,)))


def intervene(scm: ParametricScm, iv: Intervention) -> ParametricScm:
    """Surgery: replace targeted mechanisms, keep every other spec untouched."""
    require_valid(scm)
    out = scm
    for node, target in iv.assignments:
        if node not in scm.nodes:
            raise ValidationError(f"intervention targets unknown node {node!r}")
        if isinstance(target, MechanismSpec):
            if target.node != node:
                raise ValidationError(f"replacement mechanism for {node!r} is declared for {target.node!r}")
            spec = target
        else:
            spec = point_mechanism(node, float(target))
        out = out.replace_mechanism(spec)
    require_valid(out)
    return out


def interventional_distribution(scm: ParametricScm, iv: Intervention, query: Sequence[str]) -> DistributionTable:
    return enumerate_joint(intervene(scm, iv)).marginal(list(query))
