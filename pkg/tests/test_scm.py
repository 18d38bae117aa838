import math

import numpy as np
import pytest

from lapcap.errors import CapacityError, UnsupportedModelError, ValidationError
from lapcap.mechanisms import NoiseSpec
from lapcap.scm import (
    DistributionTable,
    Intervention,
    MechanismSpec,
    ParametricScm,
    SharedLatent,
    enumerate_joint,
    intervene,
    interventional_distribution,
    simulate,
    validate,
)

BERN = lambda p: NoiseSpec("bernoulli", (p,))
POINT = lambda v: NoiseSpec("point", (v,))


def root(name, p):
    return MechanismSpec(name, (), "xor_noise", (), BERN(p))


def xor(name, parent, p):
    return MechanismSpec(name, (parent,), "xor_noise", (), BERN(p))


def causal():
    return ParametricScm.from_mechanisms([root("X", 0.5), xor("Y", "X", 0.1)])


def anticausal():
    return ParametricScm(("X", "Y"), (xor("X", "Y", 0.1), root("Y", 0.5)))


def chain3():
    return ParametricScm.from_mechanisms([root("X", 0.3), xor("Y", "X", 0.2), xor("Z", "Y", 0.1)])


# --- validate ---------------------------------------------------------------


def test_valid_chain():
    assert validate(chain3()).ok


def test_cycle_reported():
    scm = ParametricScm(("X", "Y"), (xor("X", "Y", 0.1), xor("Y", "X", 0.1)))
    assert "cycle" in validate(scm).codes()


def test_arity_reported():
    scm = ParametricScm.from_mechanisms([MechanismSpec("X", (), "affine", (), POINT(0.0))])
    assert "arity" in validate(scm).codes()


def test_missing_parent_and_unknown_primitive():
    scm = ParametricScm.from_mechanisms([xor("Y", "Q", 0.1), MechanismSpec("Z", (), "spline", ())])
    assert {"missing-parent", "unknown-primitive"} <= validate(scm).codes()


def test_coupling_needs_semi_markovian():
    latent = SharedLatent(BERN(0.5), ("X", "Y"))
    mech = [MechanismSpec("X", (), "affine", (0.0,), POINT(0.0)), MechanismSpec("Y", (), "affine", (0.0,), POINT(0.0))]
    assert "coupling" in validate(ParametricScm.from_mechanisms(mech, noise_coupling=latent)).codes()
    assert validate(ParametricScm.from_mechanisms(mech, mode="semi-markovian", noise_coupling=latent)).ok


# --- simulate ---------------------------------------------------------------


def test_simulate_point_masses():
    scm = ParametricScm.from_mechanisms([
        MechanismSpec("X", (), "affine", (0.0,), POINT(1.0)),
        MechanismSpec("Y", ("X",), "affine", (1.0, 0.0), POINT(0.0)),
    ])
    t = simulate(scm, 50, seed=0)
    assert np.all(t.data == 1.0)


def test_simulate_coin_mean():
    t = simulate(ParametricScm.from_mechanisms([root("X", 0.5)]), 10_000, seed=42)
    assert 0.48 <= t.column("X").mean() <= 0.52


def test_simulate_deterministic():
    a = simulate(chain3(), 500, seed=9)
    b = simulate(chain3(), 500, seed=9)
    assert np.array_equal(a.data, b.data)


def test_simulate_invalid_raises():
    with pytest.raises(ValidationError):
        simulate(ParametricScm(("X", "Y"), (xor("X", "Y", 0.1), xor("Y", "X", 0.1))), 10, 0)


# --- enumeration ------------------------------------------------------------


def test_enumerate_xor_chain():
    t = enumerate_joint(causal())
    assert t.prob({"X": 0, "Y": 0}) == pytest.approx(0.45, abs=1e-12)
    assert t.prob({"X": 1, "Y": 1}) == pytest.approx(0.45, abs=1e-12)
    assert t.prob({"X": 0, "Y": 1}) == pytest.approx(0.05, abs=1e-12)
    assert t.prob({"X": 1, "Y": 0}) == pytest.approx(0.05, abs=1e-12)


def test_enumerate_point_chain_single_atom():
    scm = ParametricScm.from_mechanisms([
        MechanismSpec("X", (), "affine", (2.0,), POINT(0.0)),
        MechanismSpec("Y", ("X",), "affine", (3.0, 1.0), POINT(0.0)),
    ])
    atoms = [a for a in enumerate_joint(scm).atoms() if a[1] > 0]
    assert atoms == [((2.0, 7.0), 1.0)]


def test_enumerate_independent_product():
    t = enumerate_joint(ParametricScm.from_mechanisms([root("A", 0.3), root("B", 0.6)]))
    expected = np.outer([0.7, 0.3], [0.4, 0.6])
    np.testing.assert_allclose(t.probabilities, expected, atol=1e-12)


def test_enumerate_gate_and_cpt():
    scm = ParametricScm.from_mechanisms([
        MechanismSpec("X", (), "cpt", (0.0, 1.0), BERN(0.25), {"levels": [2]}),
        MechanismSpec("Y", ("X",), "logistic_gate", (0.2, 0.5), NoiseSpec("uniform", (0, 1)), {"link": "clamp"}),
    ])
    t = enumerate_joint(scm)
    assert t.prob({"X": 1, "Y": 1}) == pytest.approx(0.25 * 0.7, abs=1e-12)
    assert t.prob({"Y": 1}) == pytest.approx(0.75 * 0.2 + 0.25 * 0.7, abs=1e-12)


def test_enumerate_shared_latent():
    latent = SharedLatent(BERN(0.5), ("X", "Y"))
    scm = ParametricScm.from_mechanisms([
        MechanismSpec("X", (), "affine", (0.0,), POINT(0.0)),
        MechanismSpec("Y", (), "affine", (0.0,), POINT(0.0)),
    ], mode="semi-markovian", noise_coupling=latent)
    t = enumerate_joint(scm)
    assert t.prob({"X": 1, "Y": 1}) == pytest.approx(0.5)
    assert t.prob({"X": 1, "Y": 0}) == 0.0


def test_enumerate_continuous_unsupported():
    scm = ParametricScm.from_mechanisms([MechanismSpec("X", (), "affine", (0.0,), NoiseSpec("gaussian", (0, 1)))])
    with pytest.raises(UnsupportedModelError):
        enumerate_joint(scm)


def test_enumerate_capacity():
    mech = [MechanismSpec(f"V{i}", (), "cpt", tuple(range(10)), NoiseSpec("categorical", tuple(range(10)) + (0.1,) * 10),
                          {"levels": [10]}) for i in range(7)]
    with pytest.raises(CapacityError):
        enumerate_joint(ParametricScm.from_mechanisms(mech))


def test_table_rejects_bad_mass():
    with pytest.raises(ValueError):
        DistributionTable(("X",), ((0.0, 1.0),), np.array([0.5, 0.6]))


# --- interventions ------------------------------------------------------------


def test_do_on_cause():
    t = interventional_distribution(causal(), Intervention.do(X=1), ["Y"])
    assert t.prob({"Y": 1}) == pytest.approx(0.9, abs=1e-12)


def test_do_on_anticausal_effect():
    t = interventional_distribution(anticausal(), Intervention.do(X=1), ["Y"])
    assert t.prob({"Y": 1}) == pytest.approx(0.5, abs=1e-12)


def test_observational_equivalence_of_the_pair():
    assert enumerate_joint(causal()).total_variation(enumerate_joint(anticausal())) <= 1e-12


def test_do_effect_leaves_cause_marginal():
    obs = enumerate_joint(causal()).marginal(["X"])
    post = interventional_distribution(causal(), Intervention.do(Y=1), ["X"])
    np.testing.assert_allclose(post.probabilities, obs.probabilities, atol=1e-12)


def test_surgery_chain_middle():
    scm = chain3()
    out = intervene(scm, Intervention.do(Y=1))
    assert out.parents("Y") == ()
    assert out.mechanism("X") == scm.mechanism("X")
    assert out.mechanism("Z") == scm.mechanism("Z")


def test_surgery_root():
    out = intervene(chain3(), Intervention.do(X=0))
    assert out.mechanism("X").primitive == "constant"
    assert out.mechanism("Y") == chain3().mechanism("Y")


def test_replacement_cycle_rejected():
    iv = Intervention({"X": xor("X", "Z", 0.1)})
    with pytest.raises(ValidationError):
        intervene(chain3(), iv)


def test_unknown_target_rejected():
    with pytest.raises(ValidationError):
        intervene(chain3(), Intervention.do(Q=1))


def test_point_intervention_idempotent():
    once = intervene(chain3(), Intervention.do(Y=1))
    assert intervene(once, Intervention.do(Y=1)) == once


def test_untargeted_specs_byte_identical():
    scm = chain3()
    out = intervene(scm, Intervention.do(Y=0))
    for node in ("X", "Z"):
        assert out.mechanism(node).canonical_bytes() == scm.mechanism(node).canonical_bytes()


@pytest.mark.parametrize("target", ["X", "Y", "Z"])
def test_non_descendant_invariance(target):
    scm = chain3()
    obs = enumerate_joint(scm)
    post = enumerate_joint(intervene(scm, Intervention({target: 1})))
    for node in set(scm.nodes) - scm.descendants(target):
        np.testing.assert_allclose(post.marginal([node]).probabilities, obs.marginal([node]).probabilities, atol=1e-12)


def test_monte_carlo_matches_enumeration():
    scm = chain3()
    exact = enumerate_joint(scm)
    n = 100_000
    t = simulate(scm, n, seed=2024)
    freq = DistributionTable.from_atoms(scm.nodes, t.data, np.full(n, 1.0 / n))
    k = exact.probabilities.size
    assert exact.total_variation(freq) <= 3 * math.sqrt(k / n)


def test_roundtrip_dict():
    scm = chain3()
    assert ParametricScm.from_dict(scm.to_dict()) == scm
