"""Finite-difference calculus shared by every witness.

Jacobians, Lie brackets of vector fields, fixed-step RK4 flows, and Monte Carlo
Fisher information. All routines are pure functions of their inputs and seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import NumericalDomainError, PreconditionError, ShapeError
from .rng import make_rng

RK4_SUBSTEPS_PER_UNIT = 16

_METHODS = {
    "central": "central",
    "central-difference": "central",
    "forward": "forward",
    "forward-difference": "forward",
}


@dataclass(frozen=True)
class DiffScheme:
    method: str = "central"
    step: float = 1e-5
    richardson: bool = False

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown difference method {self.method!r}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        object.__setattr__(self, "method", _METHODS[self.method])


DEFAULT_SCHEME = DiffScheme()


@dataclass(frozen=True)
class Box:
    """Axis-aligned domain box; probes outside it are errors, never clamped."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) != len(self.upper):
            raise ShapeError("box bounds differ in length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box lower bound exceeds upper bound")

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))

    def check(self, point, what="probe point"):
        if not self.contains(point):
            raise NumericalDomainError(f"{what} {np.asarray(point).tolist()} outside declared box")


@dataclass(frozen=True)
class VectorField:
    dimension: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    domain: Box | None = None

    def __call__(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        if p.shape != (self.dimension,):
            raise ShapeError(f"expected point of dimension {self.dimension}, got shape {p.shape}")
        if self.domain is not None:
            self.domain.check(p)
        v = np.asarray(self.evaluate(p), dtype=float).reshape(-1)
        if v.shape != (self.dimension,):
            raise ShapeError("vector field output dimension differs from input dimension")
        if not np.all(np.isfinite(v)):
            raise NumericalDomainError(f"non-finite field value at {p.tolist()}")
        return v


def constant_field(vector) -> VectorField:
    v = np.asarray(vector, dtype=float)
    return VectorField(len(v), lambda p: v)


def _eval(f, p, domain):
    if domain is not None:
        domain.check(p)
    out = np.atleast_1d(np.asarray(f(p), dtype=float)).reshape(-1)
    if not np.all(np.isfinite(out)):
        raise NumericalDomainError(f"non-finite output at probe {p.tolist()}")
    return out


def _difference_jacobian(f, p, h, method, domain):
    f0 = _eval(f, p, domain) if method == "forward" else None
    cols = []
    for j in range(p.size):
        e = np.zeros_like(p)
        e[j] = h
        if method == "central":
            cols.append((_eval(f, p + e, domain) - _eval(f, p - e, domain)) / (2.0 * h))
        else:
            cols.append((_eval(f, p + e, domain) - f0) / h)
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def jacobian(f, point, scheme: DiffScheme | None = None, domain: Box | None = None) -> np.ndarray:
    """Finite-difference Jacobian of ``f`` at ``point``.

    Rows index outputs and columns index inputs. With ``scheme.richardson`` the
    estimate at step h is combined with the one at h/2 to cancel the leading
    error term.

    Raises:
        NumericalDomainError: if ``f`` is non-finite at any probe or a probe
            leaves ``domain``.
    """
    scheme = scheme or DEFAULT_SCHEME
    p = np.atleast_1d(np.asarray(point, dtype=float)).copy()
    if domain is not None:
        domain.check(p)
    coarse = _difference_jacobian(f, p, scheme.step, scheme.method, domain)
    if not scheme.richardson:
        return coarse
    fine = _difference_jacobian(f, p, scheme.step / 2.0, scheme.method, domain)
    order = 2 if scheme.method == "central" else 1
    k = 2.0**order
    return (k * fine - coarse) / (k - 1.0)


def lie_bracket(X: VectorField, Y: VectorField, point, scheme: DiffScheme | None = None) -> np.ndarray:
    """[X, Y](p) = J_Y(p) X(p) - J_X(p) Y(p)."""
    if X.dimension != Y.dimension:
        raise ShapeError(f"field dimensions differ: {X.dimension} vs {Y.dimension}")
    p = np.asarray(point, dtype=float)
    if p.shape != (X.dimension,):
        raise ShapeError(f"point has shape {p.shape}, fields have dimension {X.dimension}")
    jx = jacobian(X, p, scheme)
    jy = jacobian(Y, p, scheme)
    return jy @ X(p) - jx @ Y(p)


def flow(field_: VectorField, point, t: float, substeps_per_unit: int = RK4_SUBSTEPS_PER_UNIT) -> np.ndarray:
    """Integrate ``field_`` for time ``t`` (may be negative) with fixed-step RK4."""
    x = np.asarray(point, dtype=float).copy()
    n = max(1, math.ceil(substeps_per_unit * abs(t)))
    h = t / n
    for _ in range(n):
        k1 = field_(x)
        k2 = field_(x + 0.5 * h * k1)
        k3 = field_(x + 0.5 * h * k2)
        k4 = field_(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if field_.domain is not None and not field_.domain.contains(x):
            raise NumericalDomainError(f"flow left the declared domain at {x.tolist()}")
    return x


def flow_commutator_witness(X: VectorField, Y: VectorField, point, t: float) -> float:
    """Norm of the flow commutator loop displacement divided by t**2.

    Tends to the norm of the Lie bracket as t -> 0.
    """
    if X.dimension != Y.dimension:
        raise ShapeError(f"field dimensions differ: {X.dimension} vs {Y.dimension}")
    if not t > 0:
        raise ValueError("t must be positive")
    p = np.asarray(point, dtype=float)
    q = flow(X, p, t)
    q = flow(Y, q, t)
    q = flow(X, q, -t)
    q = flow(Y, q, -t)
    return float(np.linalg.norm(q - p) / (t * t))


class ParametricSampler(Protocol):
    def sample(self, theta: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray: ...

    def log_density(self, theta: np.ndarray, samples: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class MetricEstimate:
    """Empirical metric on parameter space with per-entry standard errors."""

    matrix: np.ndarray
    sample_count: int
    standard_error: np.ndarray
    scores: np.ndarray | None = field(default=None, repr=False, compare=False)

    def offblock_ratio(self, split: int) -> float:
        """Frobenius mass of the two off-diagonal blocks over the total.

        The first ``split`` coordinates form one block, the rest the other.
        """
        m = self.matrix
        total = np.linalg.norm(m)
        if total == 0.0:
            return 0.0
        off = math.sqrt(np.sum(m[:split, split:] ** 2) + np.sum(m[split:, :split] ** 2))
        return float(off / total)

    def reparametrized(self, chart_jacobian) -> "MetricEstimate":
        """Pull the metric back through a chart with Jacobian d(theta)/d(phi)."""
        jac = np.asarray(chart_jacobian, dtype=float)
        if self.scores is None:
            m = jac.T @ self.matrix @ jac
            return MetricEstimate(m, self.sample_count, np.full_like(m, np.nan))
        return metric_from_scores(self.scores @ jac)


def metric_from_scores(scores) -> MetricEstimate:
    s = np.asarray(scores, dtype=float)
    n = s.shape[0]
    products = s[:, :, None] * s[:, None, :]
    matrix = products.mean(axis=0)
    se = products.std(axis=0, ddof=1) / math.sqrt(n)
    return MetricEstimate(matrix, n, se, s)


def score_matrix(log_density, theta, samples, scheme: DiffScheme | None = None) -> np.ndarray:
    """Per-sample central-difference scores, shape (n, len(theta))."""
    scheme = scheme or DEFAULT_SCHEME
    theta = np.asarray(theta, dtype=float)

    def ld(t):
        v = np.asarray(log_density(t, samples), dtype=float)
        if not np.all(np.isfinite(v)):
            raise NumericalDomainError("degenerate density: a sample has zero probability")
        return v

    ld(theta)
    cols = []
    h = scheme.step
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        cols.append((ld(theta + e) - ld(theta - e)) / (2.0 * h))
    return np.column_stack(cols)


def fisher_estimate(model: ParametricSampler, theta, n: int, seed: int,
                    scheme: DiffScheme | None = None) -> MetricEstimate:
    """Empirical Fisher information: mean outer product of the score."""
    if n < 100:
        raise PreconditionError("fisher_estimate needs n >= 100 samples")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    samples = model.sample(theta, n, make_rng(seed, "fisher"))
    return metric_from_scores(score_matrix(model.log_density, theta, samples, scheme))
