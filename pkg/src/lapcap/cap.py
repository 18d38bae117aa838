"""Domain interpretations of term algebras and the compositional-autonomy
diagnostics: non-use Jacobians, law residuals, analogy residuals, composite
bounds, distributional residuals and the three failure-mode detectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import CoverageError, PreconditionError, TypeMismatchError, ValidationError
from .kernels import median_bandwidth, mmd2_unbiased
from .rng import make_rng
from .terms import (
    BOOL,
    App,
    Rel,
    RelCompose,
    Signature,
    Term,
    Var,
    depth,
    map_term,
    sort_of,
    symbols,
)

FD_STEP = 1e-5
EQ_TOL = 1e-12


# --- primitive implementations -------------------------------------------


@dataclass(frozen=True)
class CapImpl:
    """Library implementation of a signature primitive.

    ``fn(args, theta, rng)`` receives equal-length arrays and returns one.
    """

    n_params: int
    fn: Callable
    stochastic: bool = False


def _flip(args, theta, rng):
    bits = np.rint(args[0]).astype(np.int64)
    return (bits ^ (rng.random(bits.shape) < theta[0])).astype(float)


def _gaussian(args, theta, rng):
    return args[0] + theta[0] * rng.standard_normal(np.shape(args[0]))


def _mul_f32(args, theta, rng):
    return (np.asarray(args[0], dtype=np.float32) * np.asarray(args[1], dtype=np.float32)).astype(float)


IMPLS: dict[str, CapImpl] = {
    "relation": CapImpl(0, None),
    "mul": CapImpl(1, lambda a, t, r: t[0] * a[0] * a[1]),
    "discount": CapImpl(1, lambda a, t, r: a[0] * (1.0 - t[0] * a[1])),
    "add": CapImpl(0, lambda a, t, r: a[0] + a[1]),
    "scale": CapImpl(1, lambda a, t, r: t[0] * a[0]),
    "affine": CapImpl(2, lambda a, t, r: t[0] * a[0] + t[1]),
    "average": CapImpl(0, lambda a, t, r: 0.5 * (a[0] + a[1])),
    "rounded_mul": CapImpl(0, _mul_f32),
    "flip": CapImpl(1, _flip, stochastic=True),
    "gaussian_noise": CapImpl(1, _gaussian, stochastic=True),
}


# --- carriers and interpretations ----------------------------------------


@dataclass(frozen=True)
class FiniteCarrier:
    entities: tuple

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        if not self.entities:
            raise ValidationError("carriers must be nonempty")

    def sample(self, rng, n):
        return np.asarray(self.entities, dtype=object)[rng.integers(0, len(self.entities), n)]


@dataclass(frozen=True)
class BoxCarrier:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValidationError("box carrier needs lower <= upper")

    def sample(self, rng, n):
        return rng.uniform(self.lower, self.upper, n)


Carrier = FiniteCarrier | BoxCarrier


@dataclass(frozen=True)
class DomainInterpretation:
    """Carriers per sort, parameters per symbol, relation tables and ties.

    ``ties`` maps a symbol to another symbol whose parameter vector it reads
    (weight tying); the tied symbol's own entry is then ignored.
    """

    signature: Signature
    carriers: Mapping[str, Carrier]
    params: Mapping[str, tuple[float, ...]]
    relations: Mapping[str, frozenset] = field(default_factory=dict)
    ties: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name, decl in self.signature.primitives:
            if decl.impl not in IMPLS:
                raise ValidationError(f"{name}: unknown implementation {decl.impl!r}")
            if decl.impl == "relation":
                if name not in self.relations:
                    raise ValidationError(f"{name}: relation table missing")
                for s in decl.inputs:
                    if not isinstance(self.carriers.get(s), FiniteCarrier):
                        raise ValidationError(f"{name}: relations need finite carriers")
                continue
            want = IMPLS[decl.impl].n_params
            if decl.param_arity != want:
                raise ValidationError(f"{name}: {decl.impl} takes {want} parameter(s), declared {decl.param_arity}")
            if len(self.params.get(name, ())) != want:
                raise ValidationError(f"{name}: expected {want} parameter(s)")
        for s in self.signature.sorts - {BOOL}:
            if s not in self.carriers:
                raise ValidationError(f"sort {s!r} has no carrier")
        for a, b in self.ties.items():
            if a not in self.params or b not in self.params:
                raise ValidationError(f"tie {a}->{b} references unknown symbols")

    def theta(self, symbol: str, overrides: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
        src = self.ties.get(symbol, symbol)
        if overrides and src in overrides:
            return np.asarray(overrides[src], dtype=float)
        return np.asarray(self.params.get(src, ()), dtype=float)

    def with_params(self, params: Mapping[str, Sequence[float]]) -> "DomainInterpretation":
        merged = dict(self.params)
        merged.update({k: tuple(float(x) for x in v) for k, v in params.items()})
        return replace(self, params=merged)

    def relation_matrix(self, symbol: str) -> np.ndarray:
        a, b = self.signature.decl(symbol).inputs
        ea, eb = self.carriers[a].entities, self.carriers[b].entities
        m = np.zeros((len(ea), len(eb)))
        ia, ib = {e: i for i, e in enumerate(ea)}, {e: i for i, e in enumerate(eb)}
        for pair in self.relations[symbol]:
            x, y = pair[0], pair[1]
            m[ia[x], ib[y]] = float(pair[2]) if len(pair) > 2 else 1.0
        return m


def _is_stochastic(t: Term, dom: DomainInterpretation) -> bool:
    return any(IMPLS[dom.signature.decl(s).impl].stochastic for s in symbols(t))


def _rel_matrix(t, dom):
    if isinstance(t, Rel):
        return dom.relation_matrix(t.symbol)
    left, right = _rel_matrix(t.left, dom), _rel_matrix(t.right, dom)
    # max-min composition over the middle carrier
    return np.max(np.minimum(left[:, :, None], right[None, :, :]), axis=1)


def evaluate_batch(t: Term, dom: DomainInterpretation, columns: Sequence[np.ndarray],
                   rng: np.random.Generator | None = None, overrides: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
    """Vectorized realized map: column j holds the values of variable j."""
    ins, _ = sort_of(t, dom.signature)
    if len(columns) != len(ins):
        raise TypeMismatchError(f"term takes {len(ins)} input(s), got {len(columns)}")
    if isinstance(t, (Rel, RelCompose)):
        m = _rel_matrix(t, dom)
        idx = []
        for col, s in zip(columns, ins):
            pos = {e: i for i, e in enumerate(dom.carriers[s].entities)}
            try:
                idx.append(np.array([pos[v] for v in col], dtype=np.int64))
            except KeyError as exc:
                raise TypeMismatchError(f"{exc.args[0]!r} is not an entity of sort {s!r}") from None
        return m[idx[0], idx[1]]
    rng = rng if rng is not None else make_rng(0, "evaluate")

    def ev(u):
        if isinstance(u, Var):
            return np.asarray(columns[u.index], dtype=float)
        decl = dom.signature.decl(u.symbol)
        impl = IMPLS[decl.impl]
        return np.asarray(impl.fn([ev(a) for a in u.args], dom.theta(u.symbol, overrides), rng), dtype=float)

    for s in ins:
        car = dom.carriers[s]
        if isinstance(car, FiniteCarrier) and not all(isinstance(e, (int, float)) for e in car.entities):
            raise TypeMismatchError(f"sort {s!r} holds named entities; function terms need numeric inputs")
    return ev(t)


def evaluate(t: Term, dom: DomainInterpretation, inputs: Sequence, seed: int = 0):
    """Realized map at one input tuple."""
    cols = [np.asarray([v], dtype=object if isinstance(v, str) else float) for v in inputs]
    out = evaluate_batch(t, dom, cols, make_rng(seed, "evaluate"))
    return out[0].item()


def input_columns(t: Term, dom: DomainInterpretation, n_inputs: int, seed: int) -> list[np.ndarray]:
    """Evaluation inputs: every tuple when the finite grid fits, else uniform samples."""
    ins, _ = sort_of(t, dom.signature)
    carriers = [dom.carriers[s] for s in ins]
    if all(isinstance(c, FiniteCarrier) for c in carriers):
        total = math.prod(len(c.entities) for c in carriers)
        if total <= n_inputs:
            grids = np.meshgrid(*[np.arange(len(c.entities)) for c in carriers], indexing="ij")
            return [np.asarray(c.entities, dtype=object)[g.reshape(-1)] for c, g in zip(carriers, grids)]
    return [c.sample(make_rng(seed, "inputs", j), n_inputs) for j, c in enumerate(carriers)]


# --- analogy maps ------------------------------------------------------------


@dataclass(frozen=True)
class FinitePhi:
    table: Mapping

    def __call__(self, col):
        try:
            return np.asarray([self.table[v] for v in col], dtype=object)
        except KeyError as exc:
            raise CoverageError(f"entity {exc.args[0]!r} has no image under the translator") from None

    def problems(self):
        vals = list(self.table.values())
        return [] if len(set(vals)) == len(vals) else ["translator is not injective"]


@dataclass(frozen=True)
class AffinePhi:
    slope: float
    intercept: float = 0.0

    def __call__(self, col):
        return self.slope * np.asarray(col, dtype=float) + self.intercept

    def problems(self):
        return [] if self.slope != 0 else ["affine translator with zero slope is not injective"]


@dataclass(frozen=True)
class CallablePhi:
    fn: Callable

    def __call__(self, col):
        return np.asarray(self.fn(np.asarray(col, dtype=float)), dtype=float)

    def problems(self):
        return []


@dataclass(frozen=True)
class AnalogyMap:
    phi: Mapping[str, object]
    correspondence: Mapping[str, str]
    sort_map: Mapping[str, str] = field(default_factory=dict)
    bilipschitz: tuple[float, float] | None = None

    def translate(self, sort: str, col):
        if sort == BOOL:
            return col
        if sort not in self.phi:
            raise CoverageError(f"no translator for sort {sort!r}")
        return self.phi[sort](col)

    def map_term(self, t: Term) -> Term:
        return map_term(self.correspondence, t, self.sort_map)

    def check(self, dom_a: DomainInterpretation, seed: int = 0, pairs: int = 1000) -> list[str]:
        """Injectivity and the declared bi-Lipschitz bounds, spot-checked."""
        out = []
        for sort, phi in self.phi.items():
            out += [f"{sort}: {p}" for p in phi.problems()]
            if self.bilipschitz is None or not isinstance(dom_a.carriers.get(sort), BoxCarrier):
                continue
            c, C = self.bilipschitz
            if isinstance(phi, AffinePhi):
                ratios = np.array([abs(phi.slope)])
            else:
                car = dom_a.carriers[sort]
                x = car.sample(make_rng(seed, "bilip", sort, 0), pairs)
                y = car.sample(make_rng(seed, "bilip", sort, 1), pairs)
                keep = x != y
                ratios = np.abs(phi(x[keep]) - phi(y[keep])) / np.abs(x[keep] - y[keep])
            if ratios.min() < c * (1 - 1e-12) or ratios.max() > C * (1 + 1e-12):
                out.append(f"{sort}: bi-Lipschitz bounds ({c}, {C}) violated")
        return out


def check_correspondence(analogy: AnalogyMap, sig_a: Signature, sig_b: Signature) -> None:
    """F must preserve kind, arity and sorts (through the sort map)."""
    for a, b in analogy.correspondence.items():
        da, db = sig_a.decl(a), sig_b.decl(b)
        sm = lambda s: analogy.sort_map.get(s, s)
        if da.kind != db.kind or tuple(map(sm, da.inputs)) != db.inputs or sm(da.output) != db.output:
            raise TypeMismatchError(f"correspondence {a} -> {b} does not preserve sorts and kind")


# --- distances -----------------------------------------------------------------


def distance(sort: str, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Per-input distance: disagreement for truth values, absolute gap otherwise."""
    if sort == BOOL:
        return (np.abs(np.asarray(u, dtype=float) - np.asarray(v, dtype=float)) > EQ_TOL).astype(float)
    if np.asarray(u).dtype == object:
        return (np.asarray(u) != np.asarray(v)).astype(float)
    d = np.abs(np.asarray(u, dtype=float) - np.asarray(v, dtype=float))
    return np.where(d <= EQ_TOL, 0.0, d)


# --- locality ----------------------------------------------------------------------


@dataclass(frozen=True)
class LocalityResult:
    sigma: str
    per_term: dict[str, float]
    aggregate: float
    vacuous: bool
    skipped: tuple[str, ...] = ()


def _param_jacobian_sq(t, dom, cols, sigma, seed):
    theta = np.asarray(dom.params.get(sigma, ()), dtype=float)
    if theta.size == 0:
        return np.zeros(len(cols[0]) if cols else 1)
    total = 0.0
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = FD_STEP
        hi = evaluate_batch(t, dom, cols, make_rng(seed, "loc"), {sigma: theta + e})
        lo = evaluate_batch(t, dom, cols, make_rng(seed, "loc"), {sigma: theta - e})
        total = total + ((hi - lo) / (2 * FD_STEP)) ** 2
    return total


def locality_diagnostic(sigma: str, terms: Sequence[Term], dom: DomainInterpretation, n_inputs: int = 256,
                        seed: int = 0) -> LocalityResult:
    """Mean squared non-use Jacobian of each term w.r.t. theta_sigma; max over terms."""
    dom.signature.decl(sigma)
    per, skipped = {}, []
    for t in terms:
        if sigma in symbols(t):
            skipped.append(str(t))
            continue
        if isinstance(t, (Rel, RelCompose)):
            per[str(t)] = 0.0  # relation tables carry no parameters
            continue
        cols = input_columns(t, dom, n_inputs, seed)
        per[str(t)] = float(np.mean(_param_jacobian_sq(t, dom, cols, sigma, seed)))
    agg = max(per.values(), default=0.0)
    return LocalityResult(sigma, per, agg, not per, tuple(skipped))


# --- laws --------------------------------------------------------------------------


@dataclass(frozen=True)
class Law:
    name: str
    left: Term
    right: Term
    weight: float = 1.0

    def check(self, sig: Signature):
        if sort_of(self.left, sig) != sort_of(self.right, sig):
            raise TypeMismatchError(f"law {self.name}: sides differ in sorts or arity")
        if not self.weight > 0:
            raise ValidationError(f"law {self.name}: weight must be positive")


@dataclass(frozen=True)
class LawResult:
    residuals: dict[str, float]
    total: float
    insensitivity: dict[tuple[str, str], float]


def _law_value(law, dom, cols, seed, overrides=None):
    _, out = sort_of(law.left, dom.signature)
    l = evaluate_batch(law.left, dom, cols, make_rng(seed, "law", 0), overrides)
    r = evaluate_batch(law.right, dom, cols, make_rng(seed, "law", 0), overrides)
    return float(np.mean(distance(out, l, r)))


def law_residual(laws: Sequence[Law], dom: DomainInterpretation, n_inputs: int = 256, seed: int = 0) -> LawResult:
    """Per-law residual, weighted quadratic total, and |dE/dtheta_sigma| for absent sigma."""
    res, ins = {}, {}
    for law in laws:
        law.check(dom.signature)
        cols = input_columns(law.left, dom, n_inputs, seed)
        res[law.name] = _law_value(law, dom, cols, seed)
        present = symbols(law.left) | symbols(law.right)
        for sigma in dom.signature.symbols:
            theta = np.asarray(dom.params.get(sigma, ()), dtype=float)
            if sigma in present or theta.size == 0:
                continue
            grad = []
            for j in range(theta.size):
                e = np.zeros_like(theta)
                e[j] = FD_STEP
                hi = _law_value(law, dom, cols, seed, {sigma: theta + e})
                lo = _law_value(law, dom, cols, seed, {sigma: theta - e})
                grad.append((hi - lo) / (2 * FD_STEP))
            ins[law.name, sigma] = float(np.linalg.norm(grad))
    total = float(sum(l.weight * res[l.name] ** 2 for l in laws))
    return LawResult(res, total, ins)


# --- analogy residual --------------------------------------------------------------


def analogy_residual(t: Term, analogy: AnalogyMap, dom_a: DomainInterpretation, dom_b: DomainInterpretation,
                     n_inputs: int = 256, seed: int = 0, inputs: Sequence[np.ndarray] | None = None,
                     per_input: bool = False):
    """Mean distance between map-then-compose and compose-then-map."""
    ins, out = sort_of(t, dom_a.signature)
    tb = analogy.map_term(t)
    sort_of(tb, dom_b.signature)
    cols = list(inputs) if inputs is not None else input_columns(t, dom_a, n_inputs, seed)
    a_out = evaluate_batch(t, dom_a, cols, make_rng(seed, "analogy", "A"))
    mapped_in = [analogy.translate(s, c) for s, c in zip(ins, cols)]
    b_out = evaluate_batch(tb, dom_b, mapped_in, make_rng(seed, "analogy", "B"))
    d = distance(out, analogy.translate(out, a_out), b_out)
    return d if per_input else float(np.mean(d))


# --- generalization ----------------------------------------------------------------


@dataclass(frozen=True)
class CompositeRecord:
    term: str
    depth: int
    measured: float
    bound: float
    ok: bool


@dataclass(frozen=True)
class BoundReport:
    records: tuple[CompositeRecord, ...]
    constant_rule: str
    epsilon: float
    max_lipschitz: float
    k_max: int
    lipschitz_observed: dict[str, float]
    inconsistent: tuple[str, ...]

    @property
    def verdict(self) -> str:
        return "pass" if all(r.ok for r in self.records) and not self.inconsistent else "fail"


# absolute slack for composites whose bound is exactly zero (exact analogies)
ROUNDING_FLOOR = 1e-9


def bound_constant(depth_: int, max_l: float, k_max: int) -> float:
    """max((L k)^d, sum_{j<d} (L k)^j).

    The power alone undercounts when L k <= 1: each nesting level adds its
    own primitive residual on top of the propagated one.
    """
    g = max_l * k_max
    return max(g ** depth_, math.fsum(g ** j for j in range(depth_)))


def empirical_lipschitz(symbol: str, dom: DomainInterpretation, pairs: int = 1000, seed: int = 0) -> float | None:
    """Largest observed |f(x)-f(y)| / ||x-y|| over sampled input pairs (numeric inputs only)."""
    decl = dom.signature.decl(symbol)
    if decl.impl == "relation" or any(isinstance(dom.carriers[s], FiniteCarrier) for s in decl.inputs):
        return None
    if IMPLS[decl.impl].stochastic:
        return None
    t = App(symbol, tuple(Var(i, s) for i, s in enumerate(decl.inputs)))
    xs = [dom.carriers[s].sample(make_rng(seed, "lip", symbol, 0, j), pairs) for j, s in enumerate(decl.inputs)]
    ys = [dom.carriers[s].sample(make_rng(seed, "lip", symbol, 1, j), pairs) for j, s in enumerate(decl.inputs)]
    fx, fy = evaluate_batch(t, dom, xs), evaluate_batch(t, dom, ys)
    dist = np.sqrt(sum((x - y) ** 2 for x, y in zip(xs, ys)))
    keep = dist > 0
    return float(np.max(np.abs(fx - fy)[keep] / dist[keep])) if keep.any() else 0.0


def generalization_check(residuals: tuple[float, float, float], lipschitz: Mapping[str, float],
                         composites: Sequence[Term], analogy: AnalogyMap, dom_a: DomainInterpretation,
                         dom_b: DomainInterpretation, seed: int = 0, n_inputs: int = 256,
                         audit_pairs: int = 1000) -> BoundReport:
    """Measured composite residuals against bound_constant(d, max L, k_max) * sum(eps)."""
    used = set()
    for t in composites:
        used |= symbols(t)
    missing = sorted(used - set(lipschitz))
    if missing:
        raise ValidationError(f"missing Lipschitz constants for {missing}")
    eps = float(sum(residuals))
    max_l = max((lipschitz[s] for s in used), default=1.0)
    k_max = max(dom_a.signature.max_arity, 1)
    records = []
    for t in composites:
        d = depth(t)
        measured = analogy_residual(t, analogy, dom_a, dom_b, n_inputs, seed)
        bound = bound_constant(d, max_l, k_max) * eps
        records.append(CompositeRecord(str(t), d, measured, bound, measured <= bound + ROUNDING_FLOOR))
    observed, bad = {}, []
    for s in sorted(used):
        obs = empirical_lipschitz(s, dom_a, audit_pairs, seed)
        if obs is None:
            continue
        observed[s] = obs
        if lipschitz[s] < obs * (1 - 1e-9):
            bad.append(s)
    return BoundReport(tuple(records), "max((L k_max)^d, sum_{j<d} (L k_max)^j), L = max_sigma L_sigma", eps, max_l, k_max, observed, tuple(bad))


# --- stochastic residual --------------------------------------------------------


@dataclass(frozen=True)
class StochasticResidual:
    estimate: float
    standard_error: float
    per_input: np.ndarray = field(repr=False)
    n_samples: int = 0


def stochastic_residual(t: Term, analogy: AnalogyMap, dom_a: DomainInterpretation, dom_b: DomainInterpretation,
                        n_inputs: int = 32, n_samples: int = 200, seed: int = 0) -> StochasticResidual:
    """Unbiased squared MMD between the translated A-output law and the B-output law, per input."""
    if n_samples < 50:
        raise PreconditionError("stochastic_residual needs n_samples >= 50")
    if not _is_stochastic(t, dom_a):
        raise PreconditionError("term has no stochastic primitive")
    ins, out = sort_of(t, dom_a.signature)
    tb = analogy.map_term(t)
    cols = input_columns(t, dom_a, n_inputs, seed)
    if len(cols[0]) < n_inputs:
        # small finite grids are replicated; each replicate draws fresh outputs
        reps = -(-n_inputs // len(cols[0]))
        cols = [np.tile(c, reps)[:n_inputs] for c in cols]
    m = len(cols[0])
    est = np.empty(m)
    for i in range(m):
        xa = [np.repeat(c[i: i + 1], n_samples) for c in cols]
        xb = [analogy.translate(s, c) for s, c in zip(ins, xa)]
        ya = analogy.translate(out, evaluate_batch(t, dom_a, xa, make_rng(seed, "mmd", i, "A")))
        yb = evaluate_batch(tb, dom_b, xb, make_rng(seed, "mmd", i, "B"))
        ya, yb = np.asarray(ya, dtype=float), np.asarray(yb, dtype=float)
        bw = median_bandwidth(np.concatenate([ya, yb]))
        est[i] = mmd2_unbiased(ya, yb, bw)
    se = float(est.std(ddof=1) / math.sqrt(m)) if m > 1 else float("nan")
    return StochasticResidual(float(est.mean()), se, est, n_samples)


# --- failure modes ----------------------------------------------------------------


@dataclass(frozen=True)
class SpuriousAnalogy:
    law_total: float
    primitive_residual: float
    detected: bool


def detect_spurious_analogy(laws: Sequence[Law], primitives: Sequence[Term], analogy: AnalogyMap,
                            dom_a: DomainInterpretation, dom_b: DomainInterpretation, eps_law: float,
                            eps_ana: float, n_inputs: int = 256, seed: int = 0) -> SpuriousAnalogy:
    """Surface alignment (small primitive residuals) while declared laws fail in B."""
    law_b = law_residual([Law(l.name, analogy.map_term(l.left), analogy.map_term(l.right), l.weight) for l in laws],
                         dom_b, n_inputs, seed).total
    law_a = law_residual(laws, dom_a, n_inputs, seed).total
    total = max(law_a, law_b)
    h = max((analogy_residual(p, analogy, dom_a, dom_b, n_inputs, seed) for p in primitives), default=0.0)
    return SpuriousAnalogy(total, h, total > eps_law and h <= eps_ana)


@dataclass(frozen=True)
class NonUseCoupling:
    scores: dict[str, float]
    detected: bool


def detect_nonuse_coupling(terms: Sequence[Term], dom: DomainInterpretation, eps_loc: float, n_inputs: int = 256,
                           seed: int = 0) -> NonUseCoupling:
    scores = {s: locality_diagnostic(s, terms, dom, n_inputs, seed).aggregate for s in dom.signature.symbols}
    return NonUseCoupling(scores, max(scores.values(), default=0.0) > eps_loc)


@dataclass(frozen=True)
class DriftReplay:
    residuals: tuple[float, ...]
    losses: tuple[float, ...]
    detected: bool


def drift_replay(snapshots: Sequence[Mapping[str, Sequence[float]]], task: Term, watch: Term, analogy: AnalogyMap,
                 dom_a: DomainInterpretation, dom_b: DomainInterpretation, loss_tol: float, rise_tol: float,
                 n_inputs: int = 256, seed: int = 0) -> DriftReplay:
    """Replay recorded A-side parameter snapshots.

    In-domain loss is the mean squared change of the task term against the
    first snapshot. Drift is flagged when the watched analogy residual rises
    by more than ``rise_tol`` without ever decreasing while the loss stays
    within ``loss_tol``.
    """
    if len(snapshots) < 2:
        raise PreconditionError("drift replay needs at least two snapshots")
    cols = input_columns(task, dom_a, n_inputs, seed)
    ref = evaluate_batch(task, dom_a.with_params(snapshots[0]), cols)
    res, losses = [], []
    for snap in snapshots:
        d = dom_a.with_params(snap)
        losses.append(float(np.mean((evaluate_batch(task, d, cols) - ref) ** 2)))
        res.append(analogy_residual(watch, analogy, d, dom_b, n_inputs, seed))
    rising = res[-1] - res[0] > rise_tol and all(b >= a - 1e-12 for a, b in zip(res, res[1:]))
    return DriftReplay(tuple(res), tuple(losses), rising and max(losses) <= loss_tol)
