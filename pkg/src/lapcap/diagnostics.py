"""Locality/autonomy and independent-mechanism witnesses for parametric SCMs,
plus the observational-equivalence and surgery-family demonstrations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .calculus import DiffScheme, MetricEstimate, VectorField, constant_field, fisher_estimate, jacobian, lie_bracket
from .errors import NumericalDomainError, PreconditionError, UnsupportedModelError, ValidationError
from .mechanisms import PRIMITIVES, NoiseSpec
from .scm import (
    LATENT,
    DistributionTable,
    Intervention,
    MechanismSpec,
    ParametricScm,
    enumerate_joint,
    interventional_distribution,
    mechanism_output,
    require_valid,
    sample_noise,
    simulate,
    solve,
)

STRUCTURAL_TOL = 1e-6
FISHER_TOL = 0.05
PROBE_COUNT = 16

ProbeGrid = Mapping[str, np.ndarray]


def default_probe_grid(scm: ParametricScm, seed: int, size: int = PROBE_COUNT) -> dict[str, np.ndarray]:
    """Noise probe points drawn from each node's own noise law."""
    return sample_noise(scm, size, seed)


def _ancestors(scm: ParametricScm, node: str) -> set[str]:
    out, stack = set(), [node]
    while stack:
        for p in scm.parents(stack.pop()):
            if p not in out:
                out.add(p)
                stack.append(p)
    return out


def _check_grid(scm: ParametricScm, states: Mapping[str, np.ndarray]):
    for node, lo, hi in scm.domains:
        if node in states:
            v = states[node]
            if np.any(v < lo) or np.any(v > hi):
                raise NumericalDomainError(f"probe state of {node} leaves its declared domain [{lo}, {hi}]")


def _target_output(scm: ParametricScm, target: str, noise: ProbeGrid, shifts=None, overrides=None) -> np.ndarray:
    """Mechanism output of ``target`` with states solved on its ancestral subgraph."""
    states = solve(scm, noise, shifts, overrides, only=_ancestors(scm, target) | {target})
    spec = scm.mechanism(target)
    theta = scm.effective_params(target, overrides)
    u = np.asarray(noise[target], dtype=float)
    if scm.noise_coupling is not None and target in scm.noise_coupling.members:
        u = u + noise[LATENT]
    return mechanism_output(scm, target, [states[p] for p in spec.parents], u, theta), states


def _known(scm: ParametricScm, *nodes: str):
    for n in nodes:
        if n not in scm.nodes:
            raise ValidationError(f"unknown node {n!r}")


@dataclass(frozen=True)
class LapReport:
    source: str
    target: str
    locality_residual: float | None
    autonomy_residual: float | None
    descendant: bool
    tolerance: float = STRUCTURAL_TOL
    note: str = ""

    @property
    def verdict(self) -> str:
        if self.descendant:
            return "pass"
        ok = all(r is not None and r <= self.tolerance for r in (self.locality_residual, self.autonomy_residual))
        return "pass" if ok else "fail"


def locality_witness(scm: ParametricScm, source: str, target: str, probe_grid: ProbeGrid | None = None,
                     seed: int = 0, scheme: DiffScheme | None = None, tolerance: float = STRUCTURAL_TOL) -> LapReport:
    """Sup over the grid of |d M_target / ds| where s shifts the state of ``source``."""
    require_valid(scm)
    _known(scm, source, target)
    grid = probe_grid if probe_grid is not None else default_probe_grid(scm, seed)
    desc = target in scm.descendants(source)
    _check_grid(scm, _target_output(scm, target, grid)[1])
    if source not in _ancestors(scm, target):
        residual = 0.0
    else:
        jac = jacobian(lambda s: _target_output(scm, target, grid, {source: float(s[0])})[0], [0.0], scheme)
        residual = float(np.max(np.abs(jac)))
    return LapReport(source, target, residual, None, desc, tolerance)


def autonomy_witness(scm: ParametricScm, source: str, target: str, probe_grid: ProbeGrid | None = None,
                     seed: int = 0, scheme: DiffScheme | None = None, tolerance: float = STRUCTURAL_TOL) -> LapReport:
    """Sup over the grid of ||d M_target / d theta_source|| with states held fixed."""
    require_valid(scm)
    _known(scm, source, target)
    grid = probe_grid if probe_grid is not None else default_probe_grid(scm, seed)
    desc = target in scm.descendants(source)
    own = np.asarray(scm.mechanism(source).params)
    if own.size == 0:
        return LapReport(source, target, None, 0.0, desc, tolerance)
    states = _target_output(scm, target, grid)[1]
    _check_grid(scm, states)
    spec = scm.mechanism(target)
    parents = [states[p] for p in spec.parents]
    u = np.asarray(grid[target], dtype=float)
    if scm.noise_coupling is not None and target in scm.noise_coupling.members:
        u = u + grid[LATENT]

    def f(theta_src):
        theta = scm.effective_params(target, {source: theta_src})
        return mechanism_output(scm, target, parents, u, theta)

    jac = jacobian(f, own, scheme)
    residual = float(np.max(np.linalg.norm(jac, axis=1))) if jac.size else 0.0
    return LapReport(source, target, None, residual, desc, tolerance)


def lap_witness(scm: ParametricScm, source: str, target: str, probe_grid: ProbeGrid | None = None,
                seed: int = 0, tolerance: float = STRUCTURAL_TOL) -> LapReport:
    """Both witnesses for one ordered pair.

    Descendant pairs whose path runs through a non-differentiable mechanism get
    ``locality_residual=None``; they are exempt from the verdict anyway.
    """
    grid = probe_grid if probe_grid is not None else default_probe_grid(scm, seed)
    note = ""
    try:
        loc = locality_witness(scm, source, target, grid, tolerance=tolerance).locality_residual
    except NumericalDomainError as exc:
        if target not in scm.descendants(source):
            raise
        loc, note = None, f"locality not differentiable: {exc}"
    aut = autonomy_witness(scm, source, target, grid, tolerance=tolerance)
    return LapReport(source, target, loc, aut.autonomy_residual, aut.descendant, tolerance, note)


def lap_battery(scm: ParametricScm, probe_grid: ProbeGrid | None = None, seed: int = 0,
                tolerance: float = STRUCTURAL_TOL) -> list[LapReport]:
    grid = probe_grid if probe_grid is not None else default_probe_grid(scm, seed)
    return [lap_witness(scm, a, i, grid, tolerance=tolerance) for a in scm.nodes for i in scm.nodes if a != i]


# --- independent mechanisms -------------------------------------------------


def conditional_log_density(scm: ParametricScm, node: str, states: Mapping[str, np.ndarray],
                            theta: np.ndarray) -> np.ndarray:
    """log P(x_node | parents) under the node's mechanism with parameters ``theta``."""
    spec = scm.mechanism(node)
    prim = PRIMITIVES[spec.primitive]
    parents = [states[p] for p in spec.parents]
    x = np.asarray(states[node], dtype=float)
    with np.errstate(divide="ignore"):
        if prim.law is not None:
            vals, probs = prim.law(theta, parents, spec.cfg)
            mass = np.zeros_like(x)
            for v, p in zip(vals, probs):
                mass = mass + np.where(x == v, p, 0.0)
            return np.log(mass)
        if not prim.uses_noise:
            return np.where(prim.apply(theta, parents, np.zeros_like(x), spec.cfg) == x, 0.0, -np.inf)
        if prim.additive:
            mean = prim.apply(theta, parents, np.zeros_like(x), spec.cfg)
            return spec.noise.log_density(x - mean)
        if spec.noise.is_finite:
            mass = np.zeros_like(x)
            for u, q in zip(*spec.noise.support()):
                mass = mass + np.where(prim.apply(theta, parents, np.full_like(x, u), spec.cfg) == x, q, 0.0)
            return np.log(mass)
    raise UnsupportedModelError(f"{node}: no closed-form conditional density for {spec.primitive}")


@dataclass
class ScmSampler:
    """Adapter exposing an SCM's joint likelihood in a chosen parameter block."""

    scm: ParametricScm
    blocks: tuple[str, ...]

    def __post_init__(self):
        if self.scm.noise_coupling is not None:
            raise UnsupportedModelError("likelihood of a shared-latent model is not available in closed form")
        self.sizes = [len(self.scm.mechanism(b).params) for b in self.blocks]

    def split(self, theta) -> dict[str, np.ndarray]:
        out, pos = {}, 0
        for b, k in zip(self.blocks, self.sizes):
            out[b] = np.asarray(theta[pos: pos + k], dtype=float)
            pos += k
        return out

    def theta0(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.scm.mechanism(b).params) for b in self.blocks])

    def sample(self, theta, n, rng):
        seed = int(rng.integers(0, 2**63 - 1))
        states = solve(self.scm, sample_noise(self.scm, n, seed), param_overrides=self.split(theta))
        return np.column_stack([states[v] for v in self.scm.nodes])

    def log_density(self, theta, samples):
        overrides = self.split(theta)
        states = {v: samples[:, j] for j, v in enumerate(self.scm.nodes)}
        total = np.zeros(samples.shape[0])
        for node in self.scm.nodes:
            total = total + conditional_log_density(self.scm, node, states, self.scm.effective_params(node, overrides))
        return total


@dataclass(frozen=True)
class IcmReport:
    node: str
    structural_residual: float
    offblock_ratio: float
    bracket_witness: float
    split: int
    sample_count: int
    chart_offblock_ratio: float | None = None
    metric: MetricEstimate | None = field(default=None, repr=False, compare=False)


def icm_witness(scm: ParametricScm, node: str, metric: MetricEstimate | None = None, probe_grid: ProbeGrid | None = None,
                n: int = 100_000, seed: int = 0, parent_flows: Sequence[VectorField] | None = None,
                child_flows: Sequence[VectorField] | None = None, chart_jacobian=None,
                scheme: DiffScheme | None = None) -> IcmReport:
    """Three separability witnesses in the model's given coordinates.

    The parameter vector is (own params of each parent, own params of node);
    a supplied ``metric`` must be expressed in that order. Flows default to
    the coordinate axes of each block. ``chart_jacobian`` (d theta / d phi)
    re-evaluates the metric witness in a user chart.
    """
    require_valid(scm)
    _known(scm, node)
    parents = scm.parents(node)
    if not parents:
        raise ValidationError(f"{node} is a root; the parent/child split is empty")
    grid = probe_grid if probe_grid is not None else default_probe_grid(scm, seed)

    structural = 0.0
    for p in dict.fromkeys(parents):
        if scm.mechanism(p).params:
            structural = max(structural, autonomy_witness(scm, p, node, grid, scheme=scheme).autonomy_residual)

    blocks = tuple(dict.fromkeys(parents)) + (node,)
    sampler = ScmSampler(scm, blocks)
    theta = sampler.theta0()
    split = int(sum(sampler.sizes[:-1]))
    if metric is None:
        metric = fisher_estimate(sampler, theta, n, seed, scheme)
    if metric.matrix.shape != (theta.size, theta.size):
        raise ValidationError("metric dimension does not match the parent/child parameter blocks")
    ratio = metric.offblock_ratio(split)

    dim = theta.size
    if parent_flows is None:
        parent_flows = [constant_field(np.eye(dim)[j]) for j in range(split)]
    if child_flows is None:
        child_flows = [constant_field(np.eye(dim)[j]) for j in range(split, dim)]
    bracket = 0.0
    for X in parent_flows:
        for Y in child_flows:
            bracket = max(bracket, float(np.linalg.norm(lie_bracket(X, Y, theta, scheme))))

    chart = None
    if chart_jacobian is not None:
        chart = metric.reparametrized(chart_jacobian).offblock_ratio(split)
    return IcmReport(node, structural, ratio, bracket, split, metric.sample_count, chart, metric)


# --- observational equivalence ----------------------------------------------


def _bern(p):
    return NoiseSpec("bernoulli", (p,))


def coin(name: str, p: float) -> MechanismSpec:
    return MechanismSpec(name, (), "xor_noise", (), _bern(p))


def noisy_copy(name: str, parent: str, flip: float) -> MechanismSpec:
    return MechanismSpec(name, (parent,), "xor_noise", (), _bern(flip))


def equivalent_triple(flip: float) -> dict[str, ParametricScm]:
    """Causal, anticausal and confounded binary pairs sharing one joint."""
    return {
        "causal": ParametricScm.from_mechanisms([coin("X", 0.5), noisy_copy("Y", "X", flip)]),
        "anticausal": ParametricScm(("X", "Y"), (noisy_copy("X", "Y", flip), coin("Y", 0.5))),
        "confounded": ParametricScm(
            ("C", "X", "Y"),
            (coin("C", 0.5), noisy_copy("X", "C", 0.0), noisy_copy("Y", "C", flip)),
        ),
    }


@dataclass(frozen=True)
class ObsEquivalenceResult:
    joints: dict[str, DistributionTable]
    max_tv: float
    do_answers: dict[str, float]
    max_gap: float
    gap_threshold: float

    @property
    def degenerate(self) -> bool:
        return self.max_gap < self.gap_threshold


def obs_equivalence_demo(flip: float = 0.1, do_value: float = 1.0, gap: float = 0.1) -> ObsEquivalenceResult:
    models = equivalent_triple(flip)
    joints = {k: enumerate_joint(m).marginal(["X", "Y"]) for k, m in models.items()}
    names = list(joints)
    tv = max(joints[a].total_variation(joints[b]) for i, a in enumerate(names) for b in names[i + 1:])
    answers = {k: interventional_distribution(m, Intervention.do(X=do_value), ["Y"]).prob({"Y": 1}) for k, m in models.items()}
    vals = list(answers.values())
    return ObsEquivalenceResult(joints, tv, answers, max(vals) - min(vals), gap)


# --- surgery families ---------------------------------------------------------


def causal_pair(p_x: float, flip: float) -> ParametricScm:
    """X ~ Bern(p_x), Y = X xor Bern(flip)."""
    return ParametricScm.from_mechanisms([coin("X", p_x), noisy_copy("Y", "X", flip)])


def reversed_pair(joint: DistributionTable) -> ParametricScm:
    """Y -> X model reproducing a binary joint over (X, Y) with clamp gates."""
    p = {(x, y): joint.prob({"X": x, "Y": y}) for x in (0, 1) for y in (0, 1)}
    py1 = p[0, 1] + p[1, 1]
    if not 0.0 < py1 < 1.0:
        raise PreconditionError("reversal needs 0 < P(Y=1) < 1")
    base = p[1, 0] / (1.0 - py1)
    slope = p[1, 1] / py1 - base
    uniform = NoiseSpec("uniform", (0.0, 1.0))
    return ParametricScm(("X", "Y"), (
        MechanismSpec("X", ("Y",), "logistic_gate", (base, slope), uniform, {"link": "clamp"}),
        MechanismSpec("Y", (), "logistic_gate", (py1,), uniform, {"link": "clamp"}),
    ))


SURGERY_FAMILIES: dict[str, Callable[[float, float], ParametricScm]] = {
    "cut-parent": causal_pair,
    "cut-child": lambda p_x, flip: reversed_pair(enumerate_joint(causal_pair(p_x, flip))),
}


@dataclass(frozen=True)
class BayesSurgeryResult:
    posteriors: dict[str, dict[str, float]]
    max_posterior_gap: float
    observational_gap: float
    do_answers: dict[str, float]
    do_gap: float
    gap_threshold: float

    @property
    def uninformative(self) -> bool:
        return self.do_gap < self.gap_threshold


def _posterior(tables: Mapping[str, DistributionTable], prior: Mapping[str, float], data: np.ndarray) -> dict[str, float]:
    logs = {}
    for h, t in tables.items():
        lp = math.log(prior[h]) if prior[h] > 0 else -math.inf
        for (x, y), cnt in zip(*np.unique(data, axis=0, return_counts=True)) if len(data) else []:
            q = t.prob({"X": x, "Y": y})
            lp += cnt * math.log(q) if q > 0 else -math.inf
        logs[h] = lp
    top = max(logs.values())
    w = {h: math.exp(v - top) if v > -math.inf else 0.0 for h, v in logs.items()}
    z = sum(w.values())
    return {h: v / z for h, v in w.items()}


def bayes_surgery_demo(hypotheses: Mapping[str, tuple[float, float]], prior: Mapping[str, float],
                       families: Mapping[str, Mapping[str, ParametricScm]], data: np.ndarray,
                       do_value: float = 1.0, gap: float = 0.1) -> BayesSurgeryResult:
    """Condition on observational rows under two surgery families.

    ``families`` maps a family name to per-hypothesis models. Both families
    must induce the same observational law for every hypothesis; the
    posteriors then coincide while the do-answers need not.
    """
    if len(families) != 2:
        raise ValidationError("exactly two surgery families are compared")
    if set(prior) != set(hypotheses) or abs(sum(prior.values()) - 1.0) > 1e-12 or min(prior.values()) < 0:
        raise ValidationError("prior must be a probability vector over the hypotheses")
    names = list(families)
    tables = {f: {h: enumerate_joint(families[f][h]).marginal(["X", "Y"]) for h in hypotheses} for f in names}
    obs_gap = max(tables[names[0]][h].total_variation(tables[names[1]][h]) for h in hypotheses)
    if obs_gap > 1e-12:
        raise PreconditionError(f"surgery families disagree observationally (TV {obs_gap:.3g})")
    data = np.asarray(data, dtype=float).reshape(-1, 2)
    post = {f: _posterior(tables[f], prior, data) for f in names}
    post_gap = max(abs(post[names[0]][h] - post[names[1]][h]) for h in hypotheses)
    answers = {}
    for f in names:
        answers[f] = sum(post[f][h] * interventional_distribution(families[f][h], Intervention.do(X=do_value), ["Y"]).prob({"Y": 1})
                         for h in hypotheses)
    do_gap = abs(answers[names[0]] - answers[names[1]])
    return BayesSurgeryResult(post, post_gap, obs_gap, answers, do_gap, gap)


def build_families(hypotheses: Mapping[str, tuple[float, float]], kinds: Sequence[str]) -> dict[str, dict[str, ParametricScm]]:
    out = {}
    for i, kind in enumerate(kinds):
        if kind not in SURGERY_FAMILIES:
            raise ValidationError(f"unknown surgery family {kind!r}")
        label = kind if kind not in out else f"{kind}#{i}"
        out[label] = {h: SURGERY_FAMILIES[kind](*hp) for h, hp in hypotheses.items()}
    return out


def sample_pairs(p_x: float, flip: float, n: int, seed: int) -> np.ndarray:
    if n == 0:
        return np.zeros((0, 2))
    t = simulate(causal_pair(p_x, flip), n, seed)
    return np.column_stack([t.column("X"), t.column("Y")])
