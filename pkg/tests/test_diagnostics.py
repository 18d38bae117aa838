import numpy as np
import pytest

from lapcap.calculus import VectorField, constant_field
from lapcap.diagnostics import (
    autonomy_witness,
    bayes_surgery_demo,
    build_families,
    icm_witness,
    lap_battery,
    locality_witness,
    obs_equivalence_demo,
    sample_pairs,
)
from lapcap.errors import PreconditionError, ValidationError
from lapcap.mechanisms import NoiseSpec
from lapcap.scm import MechanismSpec, ParametricScm

G = NoiseSpec("gaussian", (0.0, 1.0))
U01 = NoiseSpec("uniform", (0.0, 1.0))


def lin(node, parents, params, leaks=()):
    return MechanismSpec(node, tuple(parents), "affine", tuple(params), G, leaks=leaks)


def chain():
    return ParametricScm.from_mechanisms([lin("X", [], [0.5]), lin("Y", ["X"], [2.0, 0.1]), lin("Z", ["Y"], [-1.0, 0.0])])


def fork():
    return ParametricScm.from_mechanisms([lin("C", [], [0.0]), lin("X", ["C"], [1.0, 0.0]), lin("Y", ["C"], [0.7, 0.2])])


def gate(node, parents, params, leaks=()):
    return MechanismSpec(node, tuple(parents), "logistic_gate", tuple(params), U01, {"link": "clamp"}, leaks)


# --- LAP ---------------------------------------------------------------------


def test_locality_no_path():
    assert locality_witness(chain(), "Z", "X").locality_residual <= 1e-8


def test_locality_fork_sibling():
    r = locality_witness(fork(), "X", "Y")
    assert r.locality_residual <= 1e-8 and not r.descendant


def test_locality_descendant_gain():
    r = locality_witness(chain(), "X", "Y")
    assert r.descendant
    assert r.locality_residual == pytest.approx(2.0, abs=1e-6)


def test_locality_two_hop_gain():
    assert locality_witness(chain(), "X", "Z").locality_residual == pytest.approx(2.0, abs=1e-6)


def test_autonomy_disjoint():
    assert autonomy_witness(chain(), "X", "Y").autonomy_residual <= 1e-8


def test_autonomy_tied():
    scm = ParametricScm.from_mechanisms([lin("X", [], [0.5]), lin("Y", [], [0.0], leaks=[("X", 1.0)])])
    r = autonomy_witness(scm, "X", "Y")
    assert r.autonomy_residual > 0.1
    assert r.verdict == "fail"


def test_autonomy_empty_params_exact_zero():
    scm = ParametricScm.from_mechanisms([MechanismSpec("X", (), "xor_noise", (), NoiseSpec("bernoulli", (0.5,))),
                                         lin("Y", ["X"], [1.0, 0.0])])
    assert autonomy_witness(scm, "X", "Y").autonomy_residual == 0.0


def test_unknown_node():
    with pytest.raises(ValidationError):
        locality_witness(chain(), "Q", "X")


def test_battery_verdicts():
    reports = lap_battery(fork(), seed=3)
    assert all(r.verdict == "pass" for r in reports)
    assert len(reports) == 6


def test_battery_discrete_descendant_is_exempt():
    scm = ParametricScm.from_mechanisms([
        MechanismSpec("X", (), "xor_noise", (), NoiseSpec("bernoulli", (0.5,))),
        MechanismSpec("Y", ("X",), "xor_noise", (), NoiseSpec("bernoulli", (0.1,))),
    ])
    by_pair = {(r.source, r.target): r for r in lap_battery(scm)}
    assert by_pair["X", "Y"].locality_residual is None
    assert by_pair["Y", "X"].locality_residual == 0.0


def test_domain_violation():
    from lapcap.errors import NumericalDomainError

    scm = ParametricScm.from_mechanisms([lin("X", [], [0.0]), lin("Y", ["X"], [1.0, 0.0])], domains=[("X", -0.1, 0.1)])
    with pytest.raises(NumericalDomainError):
        locality_witness(scm, "X", "Y")


# --- ICM ---------------------------------------------------------------------


def coins():
    return ParametricScm.from_mechanisms([gate("X", [], [0.5]), gate("Y", ["X"], [0.5, 0.0])])


def coupled():
    return ParametricScm.from_mechanisms([gate("X", [], [0.25]), gate("Y", ["X"], [0.0, 0.0], leaks=[("X", 1.0)])])


def test_icm_independent_coins():
    r = icm_witness(coins(), "Y", n=100_000, seed=1)
    assert r.offblock_ratio <= 0.05
    assert r.structural_residual <= 1e-8
    assert r.bracket_witness <= 1e-8


def test_icm_coupled_coin():
    r = icm_witness(coupled(), "Y", n=20_000, seed=1)
    assert r.offblock_ratio >= 0.4
    assert r.structural_residual > 0.1


def test_icm_chart_removes_coupling():
    # phi = (theta_X, theta_Y0 + theta_X, w): the child moves only through phi_2
    jac = np.array([[1.0, 0, 0], [-1.0, 1.0, 0], [0, 0, 1.0]])
    r = icm_witness(coupled(), "Y", n=20_000, seed=1, chart_jacobian=jac)
    assert r.chart_offblock_ratio < r.offblock_ratio


def test_icm_root_rejected():
    with pytest.raises(ValidationError):
        icm_witness(coins(), "X", n=1000)


def test_icm_user_flows_bracket():
    shear = VectorField(3, lambda p: np.array([0.0, p[0], 0.0]))
    r = icm_witness(coins(), "Y", n=1000, seed=0, parent_flows=[constant_field([1.0, 0, 0])], child_flows=[shear])
    assert r.bracket_witness == pytest.approx(1.0, abs=1e-8)


# --- demos -------------------------------------------------------------------


def test_obs_equivalence_default():
    r = obs_equivalence_demo()
    assert r.max_tv <= 1e-12
    assert [r.do_answers[k] for k in ("causal", "anticausal", "confounded")] == pytest.approx([0.9, 0.5, 0.5], abs=1e-12)
    for t in r.joints.values():
        assert t.prob({"X": 0, "Y": 0}) == pytest.approx(0.45, abs=1e-12)
        assert t.prob({"X": 0, "Y": 1}) == pytest.approx(0.05, abs=1e-12)
    assert not r.degenerate


def test_obs_equivalence_fair_flip_degenerate():
    r = obs_equivalence_demo(flip=0.5)
    assert r.do_answers["causal"] == pytest.approx(0.5)
    assert r.degenerate


def test_obs_equivalence_noiseless():
    r = obs_equivalence_demo(flip=0.0)
    assert r.do_answers == pytest.approx({"causal": 1.0, "anticausal": 0.5, "confounded": 0.5})


HYP = {"h1": (0.5, 0.1), "h2": (0.8, 0.1)}


def test_bayes_surgery_coin_pair():
    fam = build_families(HYP, ["cut-parent", "cut-child"])
    data = sample_pairs(0.5, 0.1, 50, seed=4)
    r = bayes_surgery_demo(HYP, {"h1": 0.5, "h2": 0.5}, fam, data)
    assert r.max_posterior_gap <= 1e-12
    assert r.do_gap == pytest.approx(0.4, abs=0.02)


def test_bayes_surgery_empty_data():
    fam = build_families(HYP, ["cut-parent", "cut-child"])
    r = bayes_surgery_demo(HYP, {"h1": 0.3, "h2": 0.7}, fam, np.zeros((0, 2)))
    for post in r.posteriors.values():
        assert post == pytest.approx({"h1": 0.3, "h2": 0.7}, abs=1e-12)


def test_bayes_surgery_identical_families():
    fam = build_families(HYP, ["cut-parent", "cut-parent"])
    r = bayes_surgery_demo(HYP, {"h1": 0.5, "h2": 0.5}, fam, sample_pairs(0.5, 0.1, 20, seed=0))
    assert r.do_gap == 0.0 and r.uninformative


def test_bayes_surgery_precondition():
    fam = build_families(HYP, ["cut-parent", "cut-child"])
    fam["cut-child"]["h2"] = build_families({"h2": (0.7, 0.1)}, ["cut-child"])["cut-child"]["h2"]
    with pytest.raises(PreconditionError):
        bayes_surgery_demo(HYP, {"h1": 0.5, "h2": 0.5}, fam, np.zeros((0, 2)))


@pytest.mark.parametrize("n", [0, 1, 17, 200])
def test_bayes_posterior_equality_up_to_200(n):
    fam = build_families(HYP, ["cut-parent", "cut-child"])
    r = bayes_surgery_demo(HYP, {"h1": 0.5, "h2": 0.5}, fam, sample_pairs(0.8, 0.1, n, seed=n))
    assert r.max_posterior_gap <= 1e-12
