"""Per-kind scenario execution.

Every runner returns a flat ``metrics`` mapping (name -> float), plot-ready
``tables`` (name -> list of row dicts) and ``flags`` (notes the report must
surface). Check evaluation happens later, in the report layer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import cap as C
from . import diagnostics as D
from . import epistemics as E
from . import forgetting as F
from .errors import ValidationError
from .rng import make_rng
from .scenario import Scenario, build_cap, build_forgetting
from .scm import Intervention, ParametricScm, interventional_distribution
from .terms import generate_composites, parse_term, symbols


@dataclass
class RunResult:
    metrics: dict[str, float] = field(default_factory=dict)
    tables: dict[str, list[dict]] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)


def _b(x: bool) -> float:
    return 1.0 if x else 0.0


# --- causal demos -----------------------------------------------------------------


def run_obs_equivalence(sc: Scenario, seed: int) -> RunResult:
    p = sc.payload
    res = D.obs_equivalence_demo(p.get("flip", 0.1), p.get("do_value", 1.0), p.get("gap", 0.1))
    out = RunResult()
    out.metrics["joint_tv"] = res.max_tv
    out.metrics["do_gap"] = res.max_gap
    out.metrics["degenerate"] = _b(res.degenerate)
    for k, v in res.do_answers.items():
        out.metrics[f"do.{k}"] = v
    out.tables["do_answers"] = [{"model": k, "p_y1_do_x": v} for k, v in res.do_answers.items()]
    if res.degenerate:
        out.flags.append("degenerate: interventional answers coincide, the demo separates nothing")
    return out


def run_bayes_surgery(sc: Scenario, seed: int) -> RunResult:
    p = sc.payload
    hyps = {h: tuple(v) for h, v in p["hypotheses"].items()}
    fams = D.build_families(hyps, p["families"])
    d = p["data"]
    data = D.sample_pairs(d["p_x"], d["flip"], d["n"], seed)
    res = D.bayes_surgery_demo(hyps, p["prior"], fams, data, p.get("do_value", 1.0), p.get("gap", 0.1))
    out = RunResult()
    out.metrics.update(observational_gap=res.observational_gap, posterior_gap=res.max_posterior_gap, do_gap=res.do_gap)
    for f, v in res.do_answers.items():
        out.metrics[f"do.{f}"] = v
    out.tables["posteriors"] = [{"family": f, "hypothesis": h, "posterior": q}
                                for f, post in res.posteriors.items() for h, q in post.items()]
    if res.uninformative:
        out.flags.append("uninformative: surgery families give matching do-answers")
    return out


def run_scm(sc: Scenario, seed: int) -> RunResult:
    p = sc.payload
    scm = ParametricScm.from_dict(p["model"])
    out = RunResult()
    if scm.mode == "semi-markovian" or scm.noise_coupling is not None:
        members = ",".join(scm.noise_coupling.members) if scm.noise_coupling else ""
        out.flags.append(f"semi-markovian: dependent noises rendered as a shared discrete latent over [{members}]")
    grid = D.default_probe_grid(scm, seed, p.get("probe_size", D.PROBE_COUNT))
    leaks = {(l["source"], l["target"]): l["gain"] for l in p.get("declared_leaks", ())}
    rows, loc, aut, leak_res = [], 0.0, 0.0, []
    for r in D.lap_battery(scm, grid):
        pair = (r.source, r.target)
        rows.append({"source": r.source, "target": r.target, "descendant": r.descendant,
                     "locality": r.locality_residual, "autonomy": r.autonomy_residual,
                     "declared_gain": leaks.get(pair)})
        if pair in leaks:
            worst = max(x for x in (r.locality_residual, r.autonomy_residual) if x is not None)
            leak_res.append(worst)
            out.metrics[f"leak.{r.source}->{r.target}"] = worst
        elif not r.descendant:
            loc = max(loc, r.locality_residual or 0.0)
            aut = max(aut, r.autonomy_residual or 0.0)
    missing = set(leaks) - {(r["source"], r["target"]) for r in rows}
    if missing:
        raise ValidationError(f"declared leak pairs not in the model: {sorted(missing)}")
    out.metrics["lap.max_locality"] = loc
    out.metrics["lap.max_autonomy"] = aut
    if leak_res:
        out.metrics["lap.min_leak_residual"] = min(leak_res)
    out.tables["lap_pairs"] = rows
    for spec in p.get("icm", ()):
        r = D.icm_witness(scm, spec["node"], probe_grid=grid, n=spec.get("n", 100_000), seed=seed)
        out.metrics[f"{spec['id']}.offblock_ratio"] = r.offblock_ratio
        out.metrics[f"{spec['id']}.bracket"] = r.bracket_witness
        out.metrics[f"{spec['id']}.structural"] = r.structural_residual
    for spec in p.get("interventions", ()):
        dist = interventional_distribution(scm, Intervention.do(**spec["do"]), list(spec["query"]))
        out.metrics[spec["id"]] = dist.prob(spec["query"])
    return out


# --- CAP ----------------------------------------------------------------------------


def _terms(xs):
    return [parse_term(t) for t in xs]


def _eps_measured(setup, gens, n, seed):
    # sup over sampled inputs, not the mean: composites evaluate generators off the sampling law
    ana = max((float(np.max(C.analogy_residual(g, setup.analogy, setup.dom_a, setup.dom_b, n, seed, per_input=True)))
               for g in gens), default=0.0)
    law = C.law_residual(setup.laws, setup.dom_a, n, seed).total if setup.laws else 0.0
    used = set().union(*(symbols(g) for g in gens)) if gens else set()
    loc = max((C.locality_diagnostic(s, gens, setup.dom_a, n, seed).aggregate
               for s in setup.sig_a.symbols if s not in used), default=0.0)
    return loc, law, ana


def _sampler_row(side, sort, car) -> dict:
    # expectations are taken under uniform draws from each carrier
    if isinstance(car, C.BoxCarrier):
        return {"domain": side, "sort": sort, "sampler": "box-uniform", "lower": car.lower, "upper": car.upper}
    return {"domain": side, "sort": sort, "sampler": "finite-uniform", "size": len(car.entities)}


def run_cap(sc: Scenario, seed: int) -> RunResult:
    p = sc.payload
    setup = build_cap(p)
    C.check_correspondence(setup.analogy, setup.sig_a, setup.sig_b)
    problems = setup.analogy.check(setup.dom_a, seed)
    n = p.get("n_inputs", 256)
    out = RunResult()
    out.flags += [f"analogy map: {x}" for x in problems]
    out.tables["samplers"] = [_sampler_row(side, sort, car) for side, dom in (("A", setup.dom_a), ("B", setup.dom_b))
                              for sort, car in sorted(dom.carriers.items())]
    for pr in p.get("probes", ()):
        pid, kind = pr["id"], pr["type"]
        if kind == "analogy_residual":
            t = parse_term(pr["term"])
            inputs = [np.asarray(c, dtype=object if any(isinstance(v, str) for v in c) else float)
                      for c in pr["inputs"]] if "inputs" in pr else None
            out.metrics[pid] = C.analogy_residual(t, setup.analogy, setup.dom_a, setup.dom_b, n, seed, inputs)
        elif kind == "locality":
            out.metrics[pid] = C.locality_diagnostic(pr["sigma"], _terms(pr["terms"]), setup.dom_a, n, seed).aggregate
        elif kind == "law_residual":
            res = C.law_residual(setup.laws, setup.dom_a, n, seed)
            out.metrics[pid] = res.total
            out.metrics[f"{pid}.max_insensitivity"] = max(res.insensitivity.values(), default=0.0)
        elif kind == "generalization":
            gens = _terms(pr["generators"])
            comps = generate_composites(setup.sig_a, gens, pr.get("max_depth", 4), pr.get("cap", 500))
            eps = pr.get("eps", "measured")
            eps = _eps_measured(setup, gens, n, seed) if eps == "measured" else (eps["loc"], eps["law"], eps["ana"])
            rep = C.generalization_check(eps, pr["lipschitz"], comps.terms, setup.analogy, setup.dom_a, setup.dom_b,
                                         seed, pr.get("n_inputs", n))
            out.metrics[f"{pid}.max_excess"] = max(r.measured - r.bound for r in rep.records)
            out.metrics[f"{pid}.violations"] = float(sum(not r.ok for r in rep.records))
            out.metrics[f"{pid}.composites"] = float(len(rep.records))
            out.metrics[f"{pid}.max_depth"] = float(max(r.depth for r in rep.records))
            out.metrics[f"{pid}.inconsistent_lipschitz"] = float(len(rep.inconsistent))
            out.metrics[f"{pid}.epsilon"] = rep.epsilon
            out.tables[pid] = [{"term": r.term, "depth": r.depth, "measured": r.measured, "bound": r.bound, "ok": r.ok}
                               for r in rep.records]
            if comps.truncated:
                out.flags.append(f"{pid}: composite enumeration truncated at {pr.get('cap', 500)}")
        elif kind == "stochastic":
            r = C.stochastic_residual(parse_term(pr["term"]), setup.analogy, setup.dom_a, setup.dom_b,
                                      pr.get("n_inputs", 32), pr.get("n_samples", 200), seed)
            out.metrics[f"{pid}.estimate"] = r.estimate
            out.metrics[f"{pid}.standard_error"] = r.standard_error
            out.metrics[f"{pid}.excess_over_2se"] = r.estimate - 2 * r.standard_error
        elif kind == "spurious":
            r = C.detect_spurious_analogy(setup.laws, _terms(pr["primitives"]), setup.analogy, setup.dom_a, setup.dom_b,
                                          pr["eps_law"], pr["eps_ana"], n, seed)
            out.metrics[f"{pid}.detected"] = _b(r.detected)
            out.metrics[f"{pid}.law_total"] = r.law_total
            out.metrics[f"{pid}.primitive_residual"] = r.primitive_residual
        elif kind == "nonuse":
            r = C.detect_nonuse_coupling(_terms(pr["terms"]), setup.dom_a, pr["eps_loc"], n, seed)
            out.metrics[f"{pid}.detected"] = _b(r.detected)
            out.metrics[f"{pid}.max_score"] = max(r.scores.values(), default=0.0)
        elif kind == "drift":
            r = C.drift_replay(pr["snapshots"], parse_term(pr["task"]), parse_term(pr["watch"]), setup.analogy,
                               setup.dom_a, setup.dom_b, pr["loss_tol"], pr["rise_tol"], n, seed)
            out.metrics[f"{pid}.detected"] = _b(r.detected)
            out.metrics[f"{pid}.rise"] = r.residuals[-1] - r.residuals[0]
            out.tables[pid] = [{"snapshot": i, "residual": a, "loss": b}
                               for i, (a, b) in enumerate(zip(r.residuals, r.losses))]
    return out


# --- forgetting -------------------------------------------------------------------


def run_forgetting(sc: Scenario, seed: int) -> RunResult:
    p = sc.payload
    s = build_forgetting(p, seed)
    sch = p["schedule"]
    log = F.train_two_task(s.model, s.theta0, s.task_a, s.task_b, sch["steps"], sch["eta"], sch["batch"], seed)
    out = RunResult()
    consts = F.lap_constants(s.model, s.theta0, (s.task_a, s.task_b), s.grid, s.box)
    lemma = F.lemma_check(s.model, log, s.task_a, s.task_b, s.grid, s.box)
    ms = F.multistep_bound_check(log)
    r0 = log.steps[0].risk_a
    out.metrics.update({
        "eps_loc": consts.eps_loc,
        "eps_aut": consts.eps_aut,
        "c_est": consts.c_est,
        "lemma.max_excess": max(lhs - rhs for _, lhs, rhs in lemma),
        "multistep.excess": ms.measured - ms.bound,
        "multistep.slack": ms.slack,
        "max_abs_inner": max(abs(x.inner) for x in log.steps),
        "max_abs_delta_ra": max(abs(x.risk_a - r0) for x in log.steps),
        "forgetting": log.forgetting,
        "mean_cosine": log.mean_cosine,
        "diverged": _b(log.diverged),
        "smoothness": 2.0 * log.smoothness_estimate,
    })
    if "first_order_etas" in p:
        fo = F.first_order_forgetting_check(s.model, s.theta0, (s.task_a, s.task_b), p["first_order_etas"], seed)
        out.metrics["first_order.ratio_spread"] = fo.ratio_spread
        out.metrics["first_order.max_abs_delta"] = max(abs(r.delta_ra) for r in fo.records)
        if fo.curvature_ok is not None:
            out.metrics["first_order.curvature_ok"] = _b(fo.curvature_ok)
        out.tables["first_order"] = [{"eta": r.eta, "delta_ra": r.delta_ra, "predicted": r.predicted,
                                      "remainder_ratio": r.remainder_ratio} for r in fo.records]
    out.tables["trajectory"] = [{"t": x.t, "risk_a": x.risk_a, "risk_b": x.risk_b, "inner": x.inner,
                                 "inner_hat": x.inner_hat, "cosine": x.cosine} for x in log.steps]
    out.tables["lemma"] = [{"t": t, "lhs": a, "rhs": b} for t, a, b in lemma]
    out.flags.append("smoothness: empirical lower bound on L from curvature probes; bound uses twice the estimate")
    if log.diverged:
        out.flags.append("diverged: risk exceeded 1e12, trajectory halted")
    return out


# --- epistemics ---------------------------------------------------------------------


def run_epistemics(sc: Scenario, seed: int) -> RunResult:
    p = sc.payload
    out = RunResult()
    for d in p.get("decompositions", ()):
        space = E.FiniteProbabilitySpace(d["probabilities"])
        pm = E.popper_miller_decompose(space, [str(x) for x in d["H"]], [str(x) for x in d["E"]])
        for k in ("delta", "overlap", "countersupport", "identity_residual"):
            out.metrics[f"{d['id']}.{k}"] = getattr(pm, k)
    for ep in p.get("episodes", ()):
        log = E.EpisodeLog.from_dict(ep["log"])
        for k, v in E.scores(log, ep["alpha"], ep["beta"]).items():
            out.metrics[f"{ep['id']}.{k}"] = v
        if log.retractions:
            out.flags.append(f"{ep['id']}: retracted queries {log.retractions}")
    n = p.get("random_identity_cases", 0)
    if n:
        rng = make_rng(seed, "popper-miller")
        worst = 0.0
        for _ in range(n):
            space, h, e = E.random_space(rng)
            worst = max(worst, abs(E.popper_miller_decompose(space, h, e).identity_residual))
        out.metrics["identity.max_residual"] = worst
    return out


RUNNERS: Mapping[str, Callable[[Scenario, int], RunResult]] = {
    "obs-equivalence": run_obs_equivalence,
    "bayes-surgery": run_bayes_surgery,
    "scm-diagnostics": run_scm,
    "cap-audit": run_cap,
    "forgetting": run_forgetting,
    "epistemics": run_epistemics,
}
