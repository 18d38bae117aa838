"""Two-task gradient-interference lab on block-partitioned toy networks.

A model holds named parameter blocks and one head per task. A head is a
stack of layers; a parametric layer owns one block and may read other
blocks through weighted leaks, which is how cross-block coupling is
injected on purpose. Gradients are exact backprop; central differences are
only used to audit them and to probe curvature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import NumericalDomainError, PreconditionError, ValidationError
from .rng import make_rng

DIVERGENCE = 1e12
PARAMETRIC = ("linear", "affine")
ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class Layer:
    kind: str
    block: str | None = None
    shape: tuple[int, int] | None = None  # (out, in) for parametric layers
    leaks: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.kind not in PARAMETRIC + ACTIVATIONS:
            raise ValidationError(f"unknown layer kind {self.kind!r}")
        if self.kind in PARAMETRIC and (self.block is None or self.shape is None):
            raise ValidationError(f"{self.kind} layer needs a block and a shape")
        object.__setattr__(self, "leaks", tuple((str(b), float(w)) for b, w in self.leaks))
        if self.shape is not None:
            object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    @property
    def size(self) -> int:
        out, inp = self.shape
        return out * inp + (out if self.kind == "affine" else 0)


@dataclass(frozen=True)
class Task:
    name: str
    inputs: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    loss: str = "squared-error"

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if x.shape[0] == 0 or x.size == 0:
            raise ValidationError(f"task {self.name}: dataset is empty")
        y = np.asarray(self.targets, dtype=float).reshape(x.shape[0], -1)
        if self.loss not in ("squared-error", "logistic"):
            raise ValidationError(f"task {self.name}: unknown loss {self.loss!r}")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)


@dataclass(frozen=True)
class BlockModel:
    """Named parameter blocks, one head per task and declared block usage."""

    blocks: tuple[tuple[str, int], ...]
    heads: Mapping[str, tuple[Layer, ...]]
    usage: Mapping[str, frozenset[str]]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple((str(n), int(k)) for n, k in self.blocks))
        names = dict(self.blocks)
        for task, layers in self.heads.items():
            for layer in layers:
                if layer.kind not in PARAMETRIC:
                    continue
                if layer.block not in names:
                    raise ValidationError(f"head {task}: unknown block {layer.block!r}")
                if names[layer.block] != layer.size:
                    raise ValidationError(f"block {layer.block} has size {names[layer.block]}, layer needs {layer.size}")
                for src, _ in layer.leaks:
                    if src not in names or names[src] > layer.size:
                        raise ValidationError(f"leak source {src!r} must be a block no larger than {layer.block}")
        for task, used in self.usage.items():
            if not set(used) <= set(names):
                raise ValidationError(f"usage of {task} names unknown blocks")

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.blocks]

    @property
    def dimension(self) -> int:
        return sum(k for _, k in self.blocks)

    def slices(self) -> dict[str, slice]:
        out, pos = {}, 0
        for n, k in self.blocks:
            out[n] = slice(pos, pos + k)
            pos += k
        return out

    def split(self, theta) -> dict[str, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dimension,):
            raise ValidationError(f"theta must have {self.dimension} entries")
        return {n: theta[s] for n, s in self.slices().items()}

    def effective(self, layer: Layer, parts: Mapping[str, np.ndarray]) -> np.ndarray:
        w = parts[layer.block].copy()
        for src, lam in layer.leaks:
            w[: parts[src].size] += lam * parts[src]
        return w

    def structural_usage(self, task: str) -> set[str]:
        out = set()
        for layer in self.heads[task]:
            if layer.kind in PARAMETRIC:
                out.add(layer.block)
                out.update(s for s, lam in layer.leaks if lam != 0)
        return out


def _unpack(layer: Layer, w: np.ndarray):
    out, inp = layer.shape
    mat = w[: out * inp].reshape(out, inp)
    bias = w[out * inp:] if layer.kind == "affine" else None
    return mat, bias


def forward(model: BlockModel, task: str, theta, x: np.ndarray, cache: bool = False):
    parts = model.split(theta)
    h = np.atleast_2d(np.asarray(x, dtype=float))
    trace = []
    for layer in model.heads[task]:
        trace.append(h)
        if layer.kind in PARAMETRIC:
            mat, bias = _unpack(layer, model.effective(layer, parts))
            h = h @ mat.T + (bias if bias is not None else 0.0)
        elif layer.kind == "relu":
            h = np.maximum(h, 0.0)
        else:
            h = np.tanh(h)
    return (h, trace) if cache else h


def _loss_and_grad(task: Task, pred: np.ndarray):
    n = pred.shape[0]
    if task.loss == "squared-error":
        r = pred - task.targets
        return float(np.sum(r * r) / n), 2.0 * r / n
    z, y = pred, task.targets
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    return loss, (1.0 / (1.0 + np.exp(-z)) - y) / n


def _subset(task: Task, idx) -> Task:
    return Task(task.name, task.inputs[idx], task.targets[idx], task.loss)


def risk(model: BlockModel, theta, task: Task) -> float:
    loss, _ = _loss_and_grad(task, forward(model, task.name, theta, task.inputs))
    if not math.isfinite(loss):
        raise NumericalDomainError(f"non-finite risk on task {task.name}")
    return loss


def gradient(model: BlockModel, theta, task: Task) -> tuple[float, np.ndarray]:
    """Risk and its exact full-batch gradient by backpropagation."""
    theta = np.asarray(theta, dtype=float)
    parts = model.split(theta)
    pred, trace = forward(model, task.name, theta, task.inputs, cache=True)
    loss, delta = _loss_and_grad(task, pred)
    if not math.isfinite(loss):
        raise NumericalDomainError(f"non-finite risk on task {task.name}")
    grads = {n: np.zeros(k) for n, k in model.blocks}
    layers = model.heads[task.name]
    for layer, h_in in zip(reversed(layers), reversed(trace)):
        if layer.kind in PARAMETRIC:
            mat, bias = _unpack(layer, model.effective(layer, parts))
            g = (delta.T @ h_in).reshape(-1)
            if bias is not None:
                g = np.concatenate([g, delta.sum(axis=0)])
            grads[layer.block] += g
            for src, lam in layer.leaks:
                grads[src] += lam * g[: grads[src].size]
            delta = delta @ mat
        elif layer.kind == "relu":
            delta = delta * (h_in > 0)
        else:
            delta = delta * (1.0 - np.tanh(h_in) ** 2)
    return loss, np.concatenate([grads[n] for n in model.names])


def fd_gradient(model: BlockModel, theta, task: Task, step: float = 1e-6) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    out = np.empty_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = step
        out[j] = (risk(model, theta + e, task) - risk(model, theta - e, task)) / (2 * step)
    return out


# --- alignment -----------------------------------------------------------------


@dataclass(frozen=True)
class Alignment:
    g_a: np.ndarray = field(repr=False)
    g_b: np.ndarray = field(repr=False)
    inner: float
    per_block: dict[str, float]
    cosine: float


def _align(model, ga, gb) -> Alignment:
    per = {n: float(ga[s] @ gb[s]) for n, s in model.slices().items()}
    inner = float(ga @ gb)
    na, nb = np.linalg.norm(ga), np.linalg.norm(gb)
    cos = inner / (na * nb) if na > 0 and nb > 0 else 0.0
    return Alignment(ga, gb, inner, per, float(cos))


def gradient_alignment(model: BlockModel, theta, task_a: Task, task_b: Task) -> Alignment:
    _, ga = gradient(model, theta, task_a)
    _, gb = gradient(model, theta, task_b)
    return _align(model, ga, gb)


def audit_usage(model: BlockModel, theta, task: Task, tol: float = 1e-12) -> list[str]:
    """Blocks outside the declared usage that still receive gradient."""
    _, g = gradient(model, theta, task)
    declared = model.usage.get(task.name, frozenset())
    return [n for n, s in model.slices().items() if n not in declared and np.linalg.norm(g[s]) > tol]


# --- LAP constants ---------------------------------------------------------------


@dataclass(frozen=True)
class LapConstants:
    eps_loc: float
    eps_aut: float
    c_est: float


def _layer_inputs(model, task, theta, x):
    return forward(model, task, theta, x, cache=True)[1]


def _interval_forward(model: BlockModel, task: str, parts, lo, hi):
    """Per-layer input boxes, propagated by interval arithmetic."""
    boxes = []
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    for layer in model.heads[task]:
        boxes.append((lo, hi))
        if layer.kind in PARAMETRIC:
            mat, bias = _unpack(layer, model.effective(layer, parts))
            c, r = (lo + hi) / 2, (hi - lo) / 2
            c, r = mat @ c + (bias if bias is not None else 0.0), np.abs(mat) @ r
            lo, hi = c - r, c + r
        elif layer.kind == "relu":
            lo, hi = np.maximum(lo, 0), np.maximum(hi, 0)
        else:
            lo, hi = np.tanh(lo), np.tanh(hi)
    return boxes


def lap_constants(model: BlockModel, theta, tasks: Sequence[Task], probe_grid: np.ndarray,
                  box: tuple[Sequence[float], Sequence[float]] | None = None) -> LapConstants:
    """Suprema of non-use and cross-block sensitivities, plus a certified C.

    eps_loc: sup over the grid of ||d head_T(x) / d theta_i|| for blocks
    outside T's declared usage. eps_aut: sup of ||d layer_j / d theta_i|| at
    the layer's own input for blocks i other than the layer's own. c_est:
    product over each head of max(1, ||W||_2) * max(1, sup ||layer input||),
    with input norms bounded by interval propagation of ``box``.
    """
    theta = np.asarray(theta, dtype=float)
    grid = np.atleast_2d(np.asarray(probe_grid, dtype=float))
    if box is not None:
        lo, hi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)
        if np.any(grid < lo) or np.any(grid > hi):
            raise NumericalDomainError("probe grid leaves the declared box")
    else:
        lo, hi = grid.min(axis=0), grid.max(axis=0)
    parts = model.split(theta)
    sl = model.slices()
    eps_loc = eps_aut = 0.0
    c_est = 1.0
    for task in tasks:
        head = model.heads[task.name]
        declared = model.usage.get(task.name, frozenset())
        for name in model.names:
            if name in declared:
                continue
            for x in grid:
                jac = _param_jacobian(lambda th: forward(model, task.name, th, x[None, :])[0], theta, sl[name])
                eps_loc = max(eps_loc, float(np.linalg.norm(jac)))
        inputs = _layer_inputs(model, task.name, theta, grid)
        for layer, h in zip(head, inputs):
            if layer.kind not in PARAMETRIC:
                continue
            for src, lam in layer.leaks:
                if src == layer.block or lam == 0:
                    continue
                # d(W_eff h)/d theta_src = lam * d(W h)/dW restricted to the leaked entries
                k = parts[src].size
                out, inp = layer.shape
                for row in h:
                    dense = np.zeros((out, out * inp + (out if layer.kind == "affine" else 0)))
                    for o in range(out):
                        dense[o, o * inp:(o + 1) * inp] = row
                        if layer.kind == "affine":
                            dense[o, out * inp + o] = 1.0
                    eps_aut = max(eps_aut, float(abs(lam) * np.linalg.norm(dense[:, :k])))
        prod = 1.0
        for layer, (blo, bhi) in zip(head, _interval_forward(model, task.name, parts, lo, hi)):
            if layer.kind not in PARAMETRIC:
                continue
            mat, _ = _unpack(layer, model.effective(layer, parts))
            sup_in = float(np.linalg.norm(np.maximum(np.abs(blo), np.abs(bhi))))
            prod *= max(1.0, np.linalg.norm(mat, 2)) * max(1.0, sup_in)
        c_est = max(c_est, prod)
    return LapConstants(eps_loc, eps_aut, c_est)


def _param_jacobian(f, theta, sl: slice, step: float = 1e-6) -> np.ndarray:
    cols = []
    for j in range(sl.start, sl.stop):
        e = np.zeros_like(theta)
        e[j] = step
        cols.append((f(theta + e) - f(theta - e)) / (2 * step))
    return np.column_stack(cols) if cols else np.zeros((1, 0))


def lemma_bound(model: BlockModel, align: Alignment, usage_a: set, usage_b: set, consts: LapConstants) -> float:
    """Right-hand side of the cross-task alignment bound."""
    sl = model.slices()
    overlap = sum(np.linalg.norm(align.g_a[sl[i]]) * np.linalg.norm(align.g_b[sl[i]]) for i in usage_a & usage_b)
    return float(consts.c_est * overlap
                 + consts.c_est * (consts.eps_loc + consts.eps_aut) * np.linalg.norm(align.g_a) * np.linalg.norm(align.g_b))


# --- one-step forgetting ---------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    eta: float
    delta_ra: float
    predicted: float
    remainder_ratio: float


@dataclass(frozen=True)
class FirstOrderReport:
    records: tuple[StepRecord, ...]
    ratio_spread: float
    stable: bool
    disjoint: bool
    kappa: float | None
    curvature_ok: bool | None


def first_order_forgetting_check(model: BlockModel, theta, tasks: tuple[Task, Task], etas: Sequence[float],
                                 seed: int = 0, spread_tol: float = 0.10) -> FirstOrderReport:
    """Measured one-step change of R_A against -eta <g_A, g_B>.

    The remainder divided by eta**2 must settle as eta shrinks. For disjoint
    usage the change itself must stay below kappa * eta**2, kappa being half
    the curvature estimate of R_A at theta.
    """
    etas = [float(e) for e in etas]
    if len(etas) < 3 or any(not b < a for a, b in zip(etas, etas[1:])) or min(etas) <= 0:
        raise PreconditionError("etas must be positive, strictly decreasing, at least three values")
    task_a, task_b = tasks
    theta = np.asarray(theta, dtype=float)
    align = gradient_alignment(model, theta, task_a, task_b)
    r0 = risk(model, theta, task_a)
    recs = []
    for eta in etas:
        d = risk(model, theta - eta * align.g_b, task_a) - r0
        pred = -eta * align.inner
        recs.append(StepRecord(eta, d, pred, abs(d - pred) / eta**2))
    ratios = np.array([r.remainder_ratio for r in recs])
    top = ratios.max()
    spread = float((top - ratios.min()) / top) if top > 1e-12 else 0.0
    sa, sb = model.usage.get(task_a.name, frozenset()), model.usage.get(task_b.name, frozenset())
    disjoint = not (set(sa) & set(sb))
    kappa = ok = None
    if disjoint:
        kappa = 0.5 * smoothness_probe(model, task_a, theta, make_rng(seed, "kappa"), [align.g_b])
        ok = all(abs(r.delta_ra) <= kappa * r.eta**2 + 1e-15 for r in recs)
    return FirstOrderReport(tuple(recs), spread, spread <= spread_tol, disjoint, kappa, ok)


def smoothness_probe(model: BlockModel, task: Task, theta, rng, directions=(), n_random: int = 16,
                     radius: float = 1e-3) -> float:
    """max ||g(theta + d) - g(theta)|| / ||d|| over random and given directions."""
    theta = np.asarray(theta, dtype=float)
    _, g0 = gradient(model, theta, task)
    dirs = [rng.standard_normal(theta.size) for _ in range(n_random)] + [np.asarray(d, dtype=float) for d in directions]
    best = 0.0
    for d in dirs:
        n = np.linalg.norm(d)
        if n == 0:
            continue
        d = d * (radius / n)
        _, g1 = gradient(model, theta + d, task)
        best = max(best, float(np.linalg.norm(g1 - g0) / radius))
    return best


# --- training ---------------------------------------------------------------------


@dataclass(frozen=True)
class LogStep:
    t: int
    theta: np.ndarray = field(repr=False)
    risk_a: float
    risk_b: float
    g_a: np.ndarray = field(repr=False)
    g_b: np.ndarray = field(repr=False)
    g_b_hat: np.ndarray = field(repr=False)
    inner: float
    inner_hat: float
    per_block: dict[str, float]
    cosine: float
    eta: float


@dataclass(frozen=True)
class TrajectoryLog:
    steps: tuple[LogStep, ...]
    eta: float
    diverged: bool
    smoothness_estimate: float

    @property
    def mean_cosine(self) -> float:
        return float(np.mean([s.cosine for s in self.steps[:-1]])) if len(self.steps) > 1 else 0.0

    @property
    def forgetting(self) -> float:
        return self.steps[-1].risk_a - self.steps[0].risk_a


def train_two_task(model: BlockModel, theta0, task_a: Task, task_b: Task, steps: int, eta: float, batch: int,
                   seed: int, curvature_every: int = 1) -> TrajectoryLog:
    """Minibatch SGD on task B alone, logging both risks and alignments.

    Record t holds the state before update t; the last record is the final
    state and carries no update. The curvature probe (16 random directions
    plus the step direction) runs every ``curvature_every`` steps.
    """
    if steps < 1:
        raise PreconditionError("steps must be at least 1")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    theta = np.asarray(theta0, dtype=float).copy()
    n_b = task_b.inputs.shape[0]
    records: list[LogStep] = []
    diverged = False
    smooth = 0.0
    probe_rng = make_rng(seed, "smoothness")
    for t in range(steps + 1):
        ra, ga = gradient(model, theta, task_a)
        rb, gb = gradient(model, theta, task_b)
        if t < steps:
            if batch >= n_b:
                gh = gb
            else:
                idx = make_rng(seed, "sgd", t).choice(n_b, size=batch, replace=False)
                gh = gradient(model, theta, _subset(task_b, np.sort(idx)))[1]
            if t % curvature_every == 0:
                smooth = max(smooth, smoothness_probe(model, task_a, theta, probe_rng, [gh]))
        else:
            gh = np.zeros_like(theta)
        al = _align(model, ga, gb)
        records.append(LogStep(t, theta.copy(), ra, rb, ga, gb, gh, al.inner, float(ga @ gh), al.per_block, al.cosine, eta))
        if max(ra, rb) > DIVERGENCE or not np.all(np.isfinite(theta)):
            diverged = True
            break
        if t < steps:
            theta = theta - eta * gh
    return TrajectoryLog(tuple(records), eta, diverged, smooth)


@dataclass(frozen=True)
class MultiStepReport:
    measured: float
    first_order: float
    curvature: float
    bound: float
    smoothness: float
    slack: float
    holds: bool
    caveat: str = "smoothness is an empirical lower bound on L; the check uses twice the estimate"


def multistep_bound_check(log: TrajectoryLog, smoothness: float | None = None) -> MultiStepReport:
    """R_A(theta_T) - R_A(theta_0) <= -eta sum <g_A, g_B_hat> + (L/2) eta^2 sum ||g_B_hat||^2."""
    if not log.steps or any(s.g_b_hat is None for s in log.steps):
        raise ValidationError("trajectory log is missing gradient records")
    L = 2.0 * (log.smoothness_estimate if smoothness is None else smoothness)
    upd = log.steps[:-1]
    eta = log.eta
    measured = log.steps[-1].risk_a - log.steps[0].risk_a
    first = -eta * sum(s.inner_hat for s in upd)
    curv = 0.5 * L * eta**2 * sum(float(s.g_b_hat @ s.g_b_hat) for s in upd)
    bound = first + curv
    return MultiStepReport(measured, first, curv, bound, L, bound - measured, measured <= bound + 1e-12)


def lemma_check(model: BlockModel, log: TrajectoryLog, task_a: Task, task_b: Task, probe_grid: np.ndarray,
                box=None) -> list[tuple[int, float, float]]:
    """(t, |<g_A, g_B>|, bound) at every logged step."""
    sa, sb = set(model.usage.get(task_a.name, ())), set(model.usage.get(task_b.name, ()))
    out = []
    for s in log.steps:
        consts = lap_constants(model, s.theta, (task_a, task_b), probe_grid, box)
        al = _align(model, s.g_a, s.g_b)
        out.append((s.t, abs(al.inner), lemma_bound(model, al, sa, sb, consts)))
    return out


# --- bundled toy models ------------------------------------------------------------


def scalar_task(name: str, target: float) -> Task:
    return Task(name, np.ones((1, 1)), np.array([[target]]))


def disjoint_toy() -> tuple[BlockModel, Task, Task, np.ndarray]:
    """R_A = (theta_1 - 1)^2, R_B = (theta_2 + 2)^2."""
    model = BlockModel((("w1", 1), ("w2", 1)),
                       {"A": (Layer("linear", "w1", (1, 1)),), "B": (Layer("linear", "w2", (1, 1)),)},
                       {"A": frozenset({"w1"}), "B": frozenset({"w2"})})
    return model, scalar_task("A", 1.0), scalar_task("B", -2.0), np.zeros(2)


def shared_scalar_toy() -> tuple[BlockModel, Task, Task, np.ndarray]:
    """R_A = (theta - 1)^2, R_B = (theta + 1)^2."""
    layer = Layer("linear", "w", (1, 1))
    model = BlockModel((("w", 1),), {"A": (layer,), "B": (layer,)}, {"A": frozenset({"w"}), "B": frozenset({"w"})})
    return model, scalar_task("A", 1.0), scalar_task("B", -1.0), np.zeros(1)


def _line_task(name, slope, n, seed, dim=1):
    x = make_rng(seed, "data", name).uniform(-1.0, 1.0, (n, dim))
    return Task(name, x, slope * x.sum(axis=1, keepdims=True))


def leak_toy(lam: float, n: int = 32, seed: int = 0) -> tuple[BlockModel, Task, Task, np.ndarray]:
    """Separate heads; B's weight reads lam * w1 on top of its own block."""
    model = BlockModel((("w1", 1), ("w2", 1)), {
        "A": (Layer("linear", "w1", (1, 1)),),
        "B": (Layer("linear", "w2", (1, 1), (("w1", lam),)),),
    }, {"A": frozenset({"w1"}), "B": frozenset({"w2"})})
    return model, _line_task("A", 1.0, n, seed), _line_task("B", -1.0, n, seed), np.array([1.0, 0.0])


def entangled_toy(n: int = 32, seed: int = 0) -> tuple[BlockModel, Task, Task, np.ndarray]:
    """y_A = a * w * x and y_B = b * w * x share the feature weight w."""
    feat = Layer("linear", "w", (1, 1))
    model = BlockModel((("w", 1), ("a", 1), ("b", 1)), {
        "A": (feat, Layer("linear", "a", (1, 1))),
        "B": (feat, Layer("linear", "b", (1, 1))),
    }, {"A": frozenset({"w", "a"}), "B": frozenset({"w", "b"})})
    return model, _line_task("A", 1.0, n, seed), _line_task("B", -1.0, n, seed), np.array([1.5, 1.0, -0.2])


TOYS = {
    "disjoint": disjoint_toy,
    "shared-scalar": shared_scalar_toy,
    "entangled": entangled_toy,
}
