"""Exit criteria for the toolkit, one test per criterion.

Every test prints a ``criterion N: PASS|FAIL ...`` line; the lines are
collected and repeated in the terminal summary (see conftest.py). Run
``python3 tests/test_acceptance.py`` to get just those lines.
"""
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from lapcap import forgetting as F
from lapcap.cap import ROUNDING_FLOOR
from lapcap.calculus import VectorField, constant_field, flow_commutator_witness, jacobian, lie_bracket
from lapcap.cli import bundled_corpus
from lapcap.diagnostics import obs_equivalence_demo
from lapcap.epistemics import (
    Conjecture, Edit, EpisodeLog, Query, Trial, crx, ecr, popper_miller_decompose, random_space, sey,
)
from lapcap.report import report_bytes, run
from lapcap.rng import make_rng
from lapcap.scenario import load

pytestmark = pytest.mark.acceptance

CORPUS = bundled_corpus()
LINES: list[str] = []


def scenarios(kind):
    out = [load(p) for p in sorted(CORPUS.glob("*.json"))]
    return [s for s in out if s.kind == kind]


def record(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


def test_c01_observational_equivalence():
    t0 = time.perf_counter()
    res = obs_equivalence_demo()
    dt = time.perf_counter() - t0
    do = tuple(res.do_answers[k] for k in ("causal", "anticausal", "confounded"))
    ok = (res.max_tv <= 1e-12 and np.allclose(do, (0.9, 0.5, 0.5), rtol=0, atol=1e-12) and dt < 1.0)
    record(1, ok, f"max joint TV {res.max_tv:.3g}, do-answers {tuple(round(v, 12) for v in do)}, {dt:.3f}s < 1s")


def test_c02_popper_miller_identity():
    t0 = time.perf_counter()
    rng = make_rng(0, "acceptance", "popper-miller")
    worst = 0.0
    for _ in range(10_000):
        space, h, e = random_space(rng)
        worst = max(worst, abs(popper_miller_decompose(space, h, e).identity_residual))
    dt = time.perf_counter() - t0
    record(2, worst <= 1e-12 and dt < 5.0, f"max |identity residual| {worst:.3g} over 1e4 spaces, {dt:.2f}s < 5s")


def test_c03_lap_witnesses():
    worst_loc = worst_aut = 0.0
    min_leak = float("inf")
    n_leaks = 0
    for sc in scenarios("scm-diagnostics"):
        m = run(sc).document["metrics"]
        worst_loc = max(worst_loc, m["lap.max_locality"])
        worst_aut = max(worst_aut, m["lap.max_autonomy"])
        for k, v in m.items():
            if k.startswith("leak."):
                n_leaks += 1
                min_leak = min(min_leak, v)
    ok = worst_loc <= 1e-6 and worst_aut <= 1e-6 and n_leaks > 0 and min_leak >= 0.01
    record(3, ok, f"disjoint pairs: locality {worst_loc:.3g}, autonomy {worst_aut:.3g} (<= 1e-6); "
                  f"{n_leaks} declared leak(s), min residual {min_leak:.3g} (>= 0.01)")


def test_c04_icm_witnesses():
    t0 = time.perf_counter()
    by_id = {s.id: s for s in scenarios("scm-diagnostics")}
    coins = run(by_id["scm-icm-coins"]).document["metrics"]
    coupled = run(by_id["scm-icm-coupled"]).document["metrics"]
    dx, dy = constant_field([1.0, 0.0]), constant_field([0.0, 1.0])
    rng = make_rng(0, "acceptance", "brackets")
    flat = max(max(np.abs(lie_bracket(dx, dy, p)).max(), flow_commutator_witness(dx, dy, p, 1e-3))
               for p in rng.uniform(-2, 2, size=(20, 2)))
    dt = time.perf_counter() - t0
    ok = (coins["icm-y.offblock_ratio"] <= 0.05 and coupled["icm-y.offblock_ratio"] >= 0.4
          and coins["icm-y.bracket"] <= 1e-8 and flat <= 1e-8 and dt < 30.0)
    record(4, ok, f"coins off-block {coins['icm-y.offblock_ratio']:.3g} (<= 0.05), coupled "
                  f"{coupled['icm-y.offblock_ratio']:.3g} (>= 0.4), constant-flow bracket {flat:.3g}, {dt:.1f}s < 30s")


def test_c05_cap_worked_examples():
    by_id = {s.id: s for s in scenarios("cap-audit")}
    m = {k: run(by_id[k]).document["metrics"] for k in
         ("cap-grandparent", "cap-grandparent-broken", "cap-currency", "cap-currency-fee")}
    iso, broken = m["cap-grandparent"]["grand"], m["cap-grandparent-broken"]["grand"]
    aff, fee = m["cap-currency"]["basket"], m["cap-currency-fee"]["basket"]
    ok = iso == 0.0 and broken > 0 and aff <= 1e-9 and fee >= 1.0
    record(5, ok, f"grandparent {iso:.3g} (= 0), after edge deletion {broken:.3g} (> 0); "
                  f"currency affine {aff:.3g} (<= 1e-9), flat fee {fee:.3g} (>= 1)")


def test_c06_generalization_bound():
    t0 = time.perf_counter()
    total = violations = 0
    worst = -float("inf")
    depths = []
    for sc in scenarios("cap-audit"):
        gens = [p["id"] for p in sc.payload["probes"] if p["type"] == "generalization"]
        if not gens:
            continue
        m = run(sc).document["metrics"]
        for pid in gens:
            total += int(m[f"{pid}.composites"])
            violations += int(m[f"{pid}.violations"])
            worst = max(worst, m[f"{pid}.max_excess"])
            depths.append(int(m[f"{pid}.max_depth"]))
    dt = time.perf_counter() - t0
    ok = total > 0 and violations == 0 and worst <= ROUNDING_FLOOR and min(depths) >= 4 and dt < 60.0
    record(6, ok, f"{total} composites over {len(depths)} corpora up to depth {min(depths)}, {violations} violations, "
                  f"max(measured - bound) {worst:.3g} (rounding floor {ROUNDING_FLOOR:g}), {dt:.1f}s < 60s")


def test_c07_forgetting_lemma():
    t0 = time.perf_counter()
    lemma_worst = ms_worst = -float("inf")
    logs = 0
    for sc in scenarios("forgetting"):
        m = run(sc).document["metrics"]
        lemma_worst = max(lemma_worst, m["lemma.max_excess"])
        ms_worst = max(ms_worst, m["multistep.excess"])
        logs += 1
    model, ta, tb, theta = F.disjoint_toy()
    log = F.train_two_task(model, theta, ta, tb, 100, 0.05, 1, 0)
    inner = max(abs(s.inner) for s in log.steps)
    dra = max(abs(s.risk_a - log.steps[0].risk_a) for s in log.steps)
    model, ta, tb, theta = F.shared_scalar_toy()
    fo = F.first_order_forgetting_check(model, theta, (ta, tb), [1e-2, 1e-3, 1e-4])
    dt = time.perf_counter() - t0
    ok = (lemma_worst <= 0 and ms_worst <= 0 and inner <= 1e-10 and dra <= 1e-10
          and fo.ratio_spread <= 0.10 and dt < 60.0)
    record(7, ok, f"{logs} logs: lemma max(lhs - rhs) {lemma_worst:.3g}, multistep max(measured - bound) "
                  f"{ms_worst:.3g}; disjoint |<gA,gB>| {inner:.3g}, |dR_A| {dra:.3g}; "
                  f"remainder ratio spread {fo.ratio_spread:.3g} (<= 0.10), {dt:.1f}s < 60s")


def _poly(c):
    def f(v):
        a, b = v
        return np.array([c[0] * a**3 + c[1] * a * b + c[2] * b**2, c[3] * a**2 * b + c[4] * b**3 + c[5] * a])

    def df(v):
        a, b = v
        return np.array([[3 * c[0] * a**2 + c[1] * b, c[1] * a + 2 * c[2] * b],
                         [2 * c[3] * a * b + c[5], c[3] * a**2 + 3 * c[4] * b**2]])
    return f, df


def test_c08_numeric_kernel():
    rng = make_rng(0, "acceptance", "kernel")
    worst_rel = 0.0
    for _ in range(200):
        f, df = _poly(rng.uniform(-3, 3, 6))
        p = rng.uniform(-2, 2, 2)
        want = df(p)
        worst_rel = max(worst_rel, np.abs(jacobian(f, p) - want).max() / max(1.0, np.abs(want).max()))
    X = VectorField(2, lambda p: np.array([p[1] ** 2, p[0]]))
    Y = VectorField(2, lambda p: np.array([p[0] * p[1], 1 + p[0] ** 2]))
    anti = max(np.abs(lie_bracket(X, Y, p) + lie_bracket(Y, X, p)).max() for p in rng.uniform(-1.5, 1.5, (50, 2)))
    p = np.array([0.5, 0.3])
    bracket = float(np.linalg.norm(lie_bracket(X, Y, p)))
    ratio = flow_commutator_witness(X, Y, p, 1e-3) / bracket
    ok = worst_rel <= 1e-6 and anti <= 1e-10 and abs(ratio - 1) <= 0.05
    record(8, ok, f"Jacobian rel error {worst_rel:.3g} (<= 1e-6), bracket antisymmetry {anti:.3g} (<= 1e-10), "
                  f"commutator/bracket {ratio:.4f} (within 5%)")


def test_c09_determinism():
    paths = sorted(CORPUS.glob("*.json"))
    same = sum(report_bytes(run(load(p))) == report_bytes(run(load(p))) for p in paths)
    record(9, same == len(paths), f"{same}/{len(paths)} bundled reports byte-identical across repeated runs")


def _random_log(rng):
    def b():
        return bool(rng.random() < 0.5)
    conj = tuple(Conjecture(f"c{i}", b(), tuple(Trial(float(rng.random()), b()) for _ in range(rng.integers(0, 4))), b())
                 for i in range(rng.integers(0, 4)))
    qs = tuple(Query(f"q{i}", float(rng.uniform(0, 3)), b(), b(), b()) for i in range(rng.integers(0, 5)))
    eds = tuple(Edit(f"e{i}", int(rng.integers(0, 5)), b()) for i in range(rng.integers(0, 4)))
    return EpisodeLog(float(rng.uniform(0.1, 10)), conjectures=conj, queries=qs, edits=eds)


def test_c10_episode_metrics():
    hand = (
        ecr(EpisodeLog(3.0, conjectures=(Conjecture("c", True, (Trial(0.5, True), Trial(1.0, True)), True),))),
        crx(EpisodeLog(2.0, queries=(Query("q1", 1.0, False, True, True), Query("q2", 2.0, False, True, False)))),
        sey(EpisodeLog(5.0, edits=(Edit("e", 3, True),)), 1.0, 2.0),
    )
    rng = make_rng(0, "acceptance", "episodes")
    bad = 0
    for _ in range(1000):
        log = _random_log(rng)
        a, b = float(rng.uniform(0.1, 2)), float(rng.uniform(0.1, 2))
        base = (ecr(log), crx(log), sey(log, a, b))
        k = float(rng.uniform(0.5, 4))
        scaled = replace(log, cost=log.cost * k)
        scaled = (ecr(scaled), crx(scaled), sey(scaled, a, b))
        up = replace(
            log,
            conjectures=tuple(replace(c, tests=tuple(replace(t, survived=True) for t in c.tests)) for c in log.conjectures),
            queries=tuple(replace(q, validated=True) for q in log.queries),
            edits=tuple(replace(e, hold=True) for e in log.edits),
        )
        up = (ecr(up), crx(up), sey(up, a, b))
        if any(abs(y - x / k) > 1e-12 * max(1.0, abs(x)) for x, y in zip(base, scaled)) or any(
                y < x for x, y in zip(base, up)):
            bad += 1
    ok = hand == (0.5, 0.5, 1.0) and bad == 0
    record(10, ok, f"hand examples {hand} (= (0.5, 0.5, 1.0)), {bad}/1000 fuzz cases break homogeneity or monotonicity")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([str(Path(__file__)), "-q", "-s", "-p", "no:cacheprovider"]))
