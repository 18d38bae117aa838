"""Library of parametric mechanism primitives and exogenous noise laws.

Every primitive is vectorized: parents arrive as a list of equal-length float
arrays and the noise as one more array. Scenario files can only name entries
of ``PRIMITIVES``, so no user code runs inside a model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalDomainError


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class Primitive:
    """A named parametric map ``f(parents, noise; theta)``.

    ``law`` is set for Bernoulli gates whose conditional distribution given
    the parents is known in closed form; for them the mechanism output used by
    the witnesses is the success probability rather than the sampled bit.
    ``additive`` marks maps of the form ``g(parents) + noise``.
    """

    name: str
    param_count: Callable[[int, dict], int]
    apply: Callable
    additive: bool = False
    law: Callable | None = None
    uses_noise: bool = True

    def check_config(self, n_parents: int, config: dict) -> list[str]:
        return []


def _affine(theta, parents, noise, config):
    out = np.full_like(noise, theta[-1], dtype=float)
    for w, pa in zip(theta[:-1], parents):
        out = out + w * pa
    return out + noise


def _constant(theta, parents, noise, config):
    return np.full(np.shape(noise), float(theta[0]))


def _as_bits(values, what):
    v = np.asarray(values, dtype=float)
    r = np.rint(v)
    if np.any((r != 0) & (r != 1)) or np.any(np.abs(v - r) > 1e-9):
        raise NumericalDomainError(f"{what} must be 0/1 valued for xor_noise")
    return r.astype(np.int64)


def _xor_noise(theta, parents, noise, config):
    acc = _as_bits(noise, "noise")
    for pa in parents:
        acc = acc ^ _as_bits(pa, "parent")
    return acc.astype(float)


def _gate_probability(theta, parents, config):
    z = np.asarray(theta[0], dtype=float)
    for w, pa in zip(theta[1:], parents):
        z = z + w * np.asarray(pa, dtype=float)
    if config.get("link", "logistic") == "clamp":
        return np.clip(z, 0.0, 1.0)
    return _sigmoid(z)


def _gate(theta, parents, noise, config):
    p = _gate_probability(theta, parents, config)
    return (np.asarray(noise) < p).astype(float)


def _gate_law(theta, parents, config):
    p = _gate_probability(theta, parents, config)
    return (0.0, 1.0), (1.0 - p, p)


def _cpt_index(parents, noise, levels):
    inputs = list(parents) + [noise]
    idx = np.zeros(np.shape(noise), dtype=np.int64)
    for v, lvl in zip(inputs, levels):
        iv = np.rint(np.asarray(v, dtype=float)).astype(np.int64)
        if np.any(iv < 0) or np.any(iv >= lvl):
            raise NumericalDomainError(f"table input outside 0..{lvl - 1}")
        idx = idx * lvl + iv
    return idx


def _cpt(theta, parents, noise, config):
    return np.asarray(theta, dtype=float)[_cpt_index(parents, noise, config["levels"])]


def _cpt_count(k, config):
    levels = config.get("levels", ())
    return int(np.prod(levels)) if len(levels) == k + 1 else -1


def _polynomial(theta, parents, noise, config):
    deg = int(config.get("degree", 1))
    out = np.full_like(noise, theta[0], dtype=float)
    pos = 1
    for pa in parents:
        for d in range(1, deg + 1):
            out = out + theta[pos] * np.asarray(pa, dtype=float) ** d
            pos += 1
    return out + noise


def _mlp_count(k, config):
    width = int(config.get("width", 0))
    return width * (k + 2) + 1 if width > 0 else -1


def _relu_mlp(theta, parents, noise, config):
    width = int(config["width"])
    k = len(parents)
    theta = np.asarray(theta, dtype=float)
    w1 = theta[: width * k].reshape(width, k)
    b1 = theta[width * k: width * (k + 1)]
    w2 = theta[width * (k + 1): width * (k + 2)]
    b2 = theta[-1]
    x = np.stack([np.asarray(p, dtype=float) for p in parents], axis=-1) if k else np.zeros(np.shape(noise) + (0,))
    hidden = np.maximum(x @ w1.T + b1, 0.0)
    return hidden @ w2 + b2 + noise


class _Gate(Primitive):
    def check_config(self, n_parents, config):
        if config.get("link", "logistic") not in ("logistic", "clamp"):
            return [f"logistic_gate link must be 'logistic' or 'clamp', got {config.get('link')!r}"]
        return []


class _Table(Primitive):
    def check_config(self, n_parents, config):
        levels = config.get("levels")
        if not levels or len(levels) != n_parents + 1 or any(int(v) < 1 for v in levels):
            return [f"cpt needs 'levels' with one positive cardinality per parent plus the noise slot"]
        return []


class _Poly(Primitive):
    def check_config(self, n_parents, config):
        if int(config.get("degree", 1)) not in (1, 2, 3):
            return ["polynomial degree must be 1, 2 or 3"]
        return []


class _Mlp(Primitive):
    def check_config(self, n_parents, config):
        if int(config.get("width", 0)) < 1:
            return ["relu_mlp needs a positive 'width'"]
        return []


PRIMITIVES: dict[str, Primitive] = {
    "constant": Primitive("constant", lambda k, c: 1 if k == 0 else -1, _constant, uses_noise=False),
    "affine": Primitive("affine", lambda k, c: k + 1, _affine, additive=True),
    "xor_noise": Primitive("xor_noise", lambda k, c: 0, _xor_noise),
    "logistic_gate": _Gate("logistic_gate", lambda k, c: k + 1, _gate, law=_gate_law),
    "cpt": _Table("cpt", _cpt_count, _cpt),
    "polynomial": _Poly("polynomial", lambda k, c: 1 + k * int(c.get("degree", 1)), _polynomial, additive=True),
    "relu_mlp": _Mlp("relu_mlp", _mlp_count, _relu_mlp, additive=True),
}


# --- noise laws -------------------------------------------------------------

NOISE_ARITY = {"bernoulli": 1, "point": 1, "uniform": 2, "gaussian": 2}


@dataclass(frozen=True)
class NoiseSpec:
    """Exogenous noise law.

    Kinds: ``bernoulli(p)``, ``point(v)``, ``uniform(a, b)``,
    ``gaussian(mean, sd)`` and ``categorical(v1..vk, p1..pk)``.
    """

    kind: str
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def problems(self) -> list[str]:
        k, p = self.kind, self.params
        if k == "categorical":
            if len(p) < 2 or len(p) % 2:
                return ["categorical noise needs values followed by matching probabilities"]
            probs = p[len(p) // 2:]
            if any(q < 0 for q in probs) or abs(sum(probs) - 1.0) > 1e-12:
                return ["categorical probabilities must be nonnegative and sum to 1"]
            return []
        if k not in NOISE_ARITY:
            return [f"unknown noise kind {k!r}"]
        if len(p) != NOISE_ARITY[k]:
            return [f"{k} noise takes {NOISE_ARITY[k]} parameter(s), got {len(p)}"]
        if k == "bernoulli" and not 0.0 <= p[0] <= 1.0:
            return ["bernoulli probability outside [0, 1]"]
        if k == "uniform" and not p[0] < p[1]:
            return ["uniform noise needs a < b"]
        if k == "gaussian" and not p[1] > 0:
            return ["gaussian noise needs sd > 0"]
        return []

    @property
    def is_finite(self) -> bool:
        return self.kind in ("bernoulli", "point", "categorical")

    def support(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """Atoms and their probabilities; zero-probability atoms are dropped."""
        if self.kind == "point":
            return (self.params[0],), (1.0,)
        if self.kind == "bernoulli":
            atoms = [(0.0, 1.0 - self.params[0]), (1.0, self.params[0])]
        elif self.kind == "categorical":
            half = len(self.params) // 2
            atoms = list(zip(self.params[:half], self.params[half:]))
        else:
            raise ValueError(f"{self.kind} noise has no finite support")
        atoms = [(v, q) for v, q in atoms if q > 0]
        return tuple(v for v, _ in atoms), tuple(q for _, q in atoms)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        k, p = self.kind, self.params
        if k == "point":
            return np.full(n, p[0])
        if k == "bernoulli":
            return (rng.random(n) < p[0]).astype(float)
        if k == "uniform":
            return rng.uniform(p[0], p[1], n)
        if k == "gaussian":
            return rng.normal(p[0], p[1], n)
        values, probs = self.support()
        return np.asarray(values)[rng.choice(len(values), size=n, p=probs)]

    def log_density(self, u) -> np.ndarray:
        """Log density (continuous kinds) or log mass (finite kinds) at ``u``."""
        u = np.asarray(u, dtype=float)
        k, p = self.kind, self.params
        with np.errstate(divide="ignore"):
            if k == "gaussian":
                z = (u - p[0]) / p[1]
                return -0.5 * z * z - math.log(p[1]) - 0.5 * math.log(2 * math.pi)
            if k == "uniform":
                inside = (u >= p[0]) & (u <= p[1])
                return np.where(inside, -math.log(p[1] - p[0]), -np.inf)
            values, probs = self.support()
            out = np.full(u.shape, -np.inf)
            for v, q in zip(values, probs):
                out = np.where(u == v, math.log(q), out)
            return out

    def to_list(self) -> list:
        return [self.kind, *self.params]
