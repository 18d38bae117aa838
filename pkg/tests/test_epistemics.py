from dataclasses import replace
from fractions import Fraction

import pytest

from lapcap.epistemics import (
    Conjecture, Edit, EpisodeLog, FiniteProbabilitySpace, Query, Trial, crx, ecr, popper_miller_decompose,
    random_space, sey,
)
from lapcap.errors import PreconditionError, ValidationError
from lapcap.rng import make_rng

DIE = FiniteProbabilitySpace.uniform(range(1, 7), {"even": {2, 4, 6}})


@pytest.mark.parametrize("h, delta, overlap, counter", [
    ({2}, 1 / 6, 1 / 6, 0.0),
    ({1, 4}, 0.0, 1 / 6, 1 / 6),
    ({1}, -1 / 6, 0.0, 1 / 6),
])
def test_die_examples(h, delta, overlap, counter):
    pm = popper_miller_decompose(DIE, h, "even")
    assert pm.delta == pytest.approx(delta, abs=1e-15)
    assert pm.overlap == pytest.approx(overlap, abs=1e-15)
    assert pm.countersupport == pytest.approx(counter, abs=1e-15)


def test_degenerate_evidence():
    with pytest.raises(PreconditionError):
        popper_miller_decompose(DIE, {1}, set())
    with pytest.raises(PreconditionError):
        popper_miller_decompose(DIE, {1}, range(1, 7))


def test_space_validation():
    with pytest.raises(ValidationError):
        FiniteProbabilitySpace({"a": 0.5, "b": 0.4})
    with pytest.raises(ValidationError):
        FiniteProbabilitySpace({"a": 1.0}, {"e": {"z"}})


def _fraction_oracle(space, h, e):
    p = {k: Fraction(v) for k, v in space.probabilities.items()}
    pr = lambda s: sum((p[o] for o in s), Fraction(0))  # noqa: E731
    pe, phe = pr(e), pr(h & e)
    return phe / pe - pr(h), phe * (1 - pe) / pe, pr(h - e)


def test_identity_random_spaces():
    rng = make_rng(5, "popper-miller")
    for _ in range(10_000):
        space, h, e = random_space(rng)
        pm = popper_miller_decompose(space, h, e)
        assert abs(pm.identity_residual) <= 1e-12
    for _ in range(200):
        space, h, e = random_space(rng)
        pm = popper_miller_decompose(space, h, e)
        d, o, c = _fraction_oracle(space, h, e)
        assert pm.delta == pytest.approx(float(d), abs=1e-12)
        assert pm.overlap == pytest.approx(float(o), abs=1e-12)
        assert pm.countersupport == pytest.approx(float(c), abs=1e-12)


def test_sign_properties():
    rng = make_rng(6, "signs")
    for _ in range(1000):
        space, h, e = random_space(rng)
        disjoint = popper_miller_decompose(space, h - e, e)
        assert disjoint.delta <= 1e-15
        entailed = popper_miller_decompose(space, h | e, e)
        assert entailed.delta >= -1e-15
        assert entailed.countersupport == pytest.approx(space.prob(h | e) - space.prob(e), abs=1e-12)


ONE_CONJ = EpisodeLog(3.0, conjectures=(Conjecture("c", True, (Trial(0.5, True), Trial(1.0, True)), True),))
QUERIES = EpisodeLog(2.0, queries=(Query("q1", 1.0, False, True, True), Query("q2", 2.0, False, True, False)))
EDITS = EpisodeLog(5.0, edits=(Edit("e", 3, True),))


def test_hand_examples():
    assert ecr(ONE_CONJ) == 0.5
    assert crx(QUERIES) == 0.5
    assert sey(EDITS, 1.0, 2.0) == 1.0


def test_trivial_cases():
    flat = EpisodeLog(3.0, conjectures=(Conjecture("c", True, (Trial(1.0, True),), False),))
    assert ecr(flat) == 0.0
    assert ecr(EpisodeLog(1.0)) == crx(EpisodeLog(1.0)) == sey(EpisodeLog(1.0), 1, 1) == 0.0
    assert crx(EpisodeLog(1.0, queries=(Query("q", 4.0, True, True, True),))) == 0.0
    assert sey(EpisodeLog(1.0, edits=(Edit("e", 0, False),)), 1.0, 1.0) == 0.0
    assert sey(replace(EDITS, cost=10.0), 1.0, 2.0) == 0.5


def test_log_validation():
    with pytest.raises(ValidationError):
        EpisodeLog(0.0)
    with pytest.raises(ValidationError):
        EpisodeLog(1.0, conjectures=(Conjecture("c", True, (Trial(1.5, True),), True),))
    with pytest.raises(ValidationError):
        EpisodeLog(1.0, edits=(Edit("e", -1, True),))
    with pytest.raises(PreconditionError):
        sey(EDITS, 0.0, 1.0)


def test_retractions_are_flagged_not_rejected():
    log = EpisodeLog(1.0, queries=(Query("q", 1.0, True, False, True),))
    assert log.retractions == ["q"] and crx(log) == 0.0


def test_from_dict_round_trip():
    log = EpisodeLog.from_dict({
        "cost": 3, "resources": ["gpu-hours"],
        "conjectures": [{"name": "c", "novel": True, "changes_do_law": True,
                         "tests": [{"severity": 0.5, "survived": True}, {"severity": 1.0, "survived": True}]}],
    })
    assert ecr(log) == 0.5


def _random_log(rng):
    def b():
        return bool(rng.random() < 0.5)
    conj = tuple(Conjecture(f"c{i}", b(), tuple(Trial(float(rng.random()), b()) for _ in range(rng.integers(0, 4))), b())
                 for i in range(rng.integers(0, 4)))
    qs = tuple(Query(f"q{i}", float(rng.uniform(0, 3)), b(), b(), b()) for i in range(rng.integers(0, 5)))
    eds = tuple(Edit(f"e{i}", int(rng.integers(0, 5)), b()) for i in range(rng.integers(0, 4)))
    return EpisodeLog(float(rng.uniform(0.1, 10)), conjectures=conj, queries=qs, edits=eds)


def _metrics(log, alpha, beta):
    return ecr(log), crx(log), sey(log, alpha, beta)


def test_fuzz_homogeneity_and_monotonicity():
    rng = make_rng(8, "episode-fuzz")
    for _ in range(1000):
        log = _random_log(rng)
        alpha, beta = float(rng.uniform(0.1, 2)), float(rng.uniform(0.1, 2))
        base = _metrics(log, alpha, beta)
        k = float(rng.uniform(0.5, 4))
        scaled = _metrics(replace(log, cost=log.cost * k), alpha, beta)
        for x, y in zip(base, scaled):
            assert y == pytest.approx(x / k, rel=1e-12, abs=1e-300)
        flipped = replace(
            log,
            conjectures=tuple(replace(c, tests=tuple(replace(t, survived=True) for t in c.tests)) for c in log.conjectures),
            queries=tuple(replace(q, validated=True) for q in log.queries),
            edits=tuple(replace(e, hold=True) for e in log.edits),
        )
        for x, y in zip(base, _metrics(flipped, alpha, beta)):
            assert y >= x
