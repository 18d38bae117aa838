"""Popper-Miller decomposition on finite spaces and episode-log scores.

The three scores (ECR, CRX, SEY) evaluate declared episodes. Nothing here
decides whether a conjecture is novel or a query validated; those arrive
as flags in the log.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import PreconditionError, ValidationError

SUM_TOL = 1e-12


@dataclass(frozen=True)
class FiniteProbabilitySpace:
    probabilities: Mapping[str, float]
    events: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        probs = {str(k): float(v) for k, v in self.probabilities.items()}
        if not probs:
            raise ValidationError("probability space has no outcomes")
        if any(p < 0 or not math.isfinite(p) for p in probs.values()):
            raise ValidationError("probabilities must be finite and nonnegative")
        if abs(math.fsum(probs.values()) - 1.0) > SUM_TOL:
            raise ValidationError(f"probabilities sum to {math.fsum(probs.values())!r}, not 1")
        events = {str(k): frozenset(v) for k, v in self.events.items()}
        for name, ev in events.items():
            if not ev <= probs.keys():
                raise ValidationError(f"event {name} names unknown outcomes: {sorted(ev - probs.keys())}")
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "events", events)

    @classmethod
    def uniform(cls, outcomes: Iterable, events: Mapping[str, Iterable] | None = None) -> "FiniteProbabilitySpace":
        outs = [str(o) for o in outcomes]
        return cls({o: 1.0 / len(outs) for o in outs},
                   {k: frozenset(str(o) for o in v) for k, v in (events or {}).items()})

    def event(self, ev) -> frozenset[str]:
        if isinstance(ev, str):
            if ev not in self.events:
                raise ValidationError(f"unknown event {ev!r}")
            return self.events[ev]
        out = frozenset(str(o) for o in ev)
        if not out <= self.probabilities.keys():
            raise ValidationError(f"event names unknown outcomes: {sorted(out - self.probabilities.keys())}")
        return out

    def prob(self, ev) -> float:
        return math.fsum(self.probabilities[o] for o in self.event(ev))


@dataclass(frozen=True)
class PopperMiller:
    delta: float
    overlap: float
    countersupport: float
    identity_residual: float


def popper_miller_decompose(space: FiniteProbabilitySpace, h, e) -> PopperMiller:
    """Split P(H|E) - P(H) into overlap P(H&E)P(~E)/P(E) minus countersupport P(H&~E)."""
    hs, es = space.event(h), space.event(e)
    pe = space.prob(es)
    if not 0.0 < pe < 1.0:
        raise PreconditionError(f"P(E) = {pe!r} must lie strictly between 0 and 1")
    everything = frozenset(space.probabilities)
    p_he = space.prob(hs & es)
    p_hne = space.prob(hs - es)
    p_ne = space.prob(everything - es)
    delta = p_he / pe - space.prob(hs)
    overlap = p_he * p_ne / pe
    return PopperMiller(delta, overlap, p_hne, delta - (overlap - p_hne))


# --- episode logs ------------------------------------------------------------------


@dataclass(frozen=True)
class Trial:
    severity: float
    survived: bool


@dataclass(frozen=True)
class Conjecture:
    name: str
    novel: bool
    tests: tuple[Trial, ...]
    changes_do_law: bool


@dataclass(frozen=True)
class Query:
    name: str
    weight: float
    answerable_before: bool
    answerable_after: bool
    validated: bool


@dataclass(frozen=True)
class Edit:
    name: str
    fail: int
    hold: bool


@dataclass(frozen=True)
class EpisodeLog:
    cost: float
    resources: tuple[str, ...] = ()
    conjectures: tuple[Conjecture, ...] = ()
    queries: tuple[Query, ...] = ()
    edits: tuple[Edit, ...] = ()

    def __post_init__(self):
        if not (self.cost > 0 and math.isfinite(self.cost)):
            raise ValidationError(f"cost must be positive, got {self.cost!r}")
        for c in self.conjectures:
            for t in c.tests:
                if not 0.0 <= t.severity <= 1.0:
                    raise ValidationError(f"conjecture {c.name}: severity {t.severity!r} outside [0, 1]")
        for q in self.queries:
            if q.weight < 0:
                raise ValidationError(f"query {q.name}: negative weight")
        for ed in self.edits:
            if ed.fail < 0:
                raise ValidationError(f"edit {ed.name}: negative Fail count")

    @property
    def retractions(self) -> list[str]:
        """Queries answerable before but not after."""
        return [q.name for q in self.queries if q.answerable_before and not q.answerable_after]

    @classmethod
    def from_dict(cls, d: Mapping) -> "EpisodeLog":
        return cls(
            cost=float(d["cost"]),
            resources=tuple(d.get("resources", ())),
            conjectures=tuple(Conjecture(c["name"], bool(c["novel"]),
                                         tuple(Trial(float(t["severity"]), bool(t["survived"])) for t in c["tests"]),
                                         bool(c["changes_do_law"])) for c in d.get("conjectures", ())),
            queries=tuple(Query(q["name"], float(q["weight"]), bool(q["answerable_before"]),
                                bool(q["answerable_after"]), bool(q["validated"])) for q in d.get("queries", ())),
            edits=tuple(Edit(e["name"], int(e["fail"]), bool(e["hold"])) for e in d.get("edits", ())),
        )


def ecr(log: EpisodeLog) -> float:
    total = math.fsum(
        math.fsum(t.severity for t in c.tests if t.survived)
        for c in log.conjectures if c.novel and c.changes_do_law
    )
    return total / log.cost


def crx(log: EpisodeLog) -> float:
    total = math.fsum(q.weight for q in log.queries
                      if q.answerable_after and not q.answerable_before and q.validated)
    return total / log.cost


def sey(log: EpisodeLog, alpha: float, beta: float) -> float:
    if not (alpha > 0 and beta > 0):
        raise PreconditionError("alpha and beta must be positive")
    total = math.fsum(alpha * e.fail + beta * (1.0 if e.hold else 0.0) for e in log.edits)
    return total / log.cost


def scores(log: EpisodeLog, alpha: float, beta: float) -> dict[str, float]:
    return {"ecr": ecr(log), "crx": crx(log), "sey": sey(log, alpha, beta)}


def random_space(rng, max_outcomes: int = 8) -> tuple[FiniteProbabilitySpace, frozenset, frozenset]:
    """Random space with an evidence event of probability strictly inside (0, 1)."""
    n = int(rng.integers(2, max_outcomes + 1))
    w = rng.dirichlet(rng.uniform(0.2, 2.0, n))
    w = w / math.fsum(w)
    w[-1] = 1.0 - math.fsum(w[:-1])
    outs = [f"w{i}" for i in range(n)]
    space = FiniteProbabilitySpace(dict(zip(outs, w)))
    while True:
        e = frozenset(o for o in outs if rng.random() < 0.5)
        if 0.0 < space.prob(e) < 1.0:
            break
    h = frozenset(o for o in outs if rng.random() < 0.5)
    return space, h, e
