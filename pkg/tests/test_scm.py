import itertools
import math

import numpy as np
import pytest

from swiglab.errors import InvalidEstimand, InvalidSpec, PositivityViolation
from swiglab.fixtures import ScenarioId
from swiglab.scm import (
    NA,
    Dataset,
    Estimand,
    EstimandKind,
    Population,
    ScenarioSpec,
    asymptotic_bias,
    consistency_check,
    default_spec,
    effective_graph,
    enumerate_joint,
    graph_distribution_check,
    named_dependences,
    observational_conditionals,
    oracle_truth,
    parse_regime,
    regime_label,
    sample_interventional,
    sample_non_nested,
    sample_observational,
)

ALL = list(ScenarioId)


def _e(text):
    return Estimand.parse(text)


# -- an independent oracle for fig2, written directly from the structural equations


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def _bern(p, v):
    return p if v == 1 else 1.0 - p


def fig2_reference(spec, z_set, joint, population):
    c, a0 = spec.coeffs, spec.intercepts
    num = den = 0.0
    for x, u, s in itertools.product(range(spec.x_levels), (0, 1), (0, 1)):
        w = spec.x_probs[x] * _bern(spec.latent_probs["U"], u)
        w *= _bern(_sig(a0["S"] + c["beta_X_on_S"] * x), s)
        if population == "subset" and s != 0 or population == "trial" and s != 1:
            continue
        s_eff = 1 if joint else s
        for a in (0, 1):
            eta_a = (
                a0["A"] + c["beta_X_on_A"] * x + c["beta_S_on_A"] * s_eff + c["beta_Z_on_A"] * z_set
                + c["gamma_U_on_A"] * u + spec.interaction * z_set * u
            )
            pa = _bern(_sig(eta_a), a)
            py = _sig(a0["Y"] + c["beta_X_on_Y"] * x + c["beta_A_on_Y"] * a + c["gamma_U_on_Y"] * u)
            num += w * pa * py
        den += w
    return num / den


@pytest.mark.parametrize("pop", ["target", "subset", "trial"])
@pytest.mark.parametrize("z", [0, 1])
@pytest.mark.parametrize("joint", [True, False])
def test_oracle_matches_hand_enumeration_fig2(pop, z, joint):
    spec = default_spec("fig2")
    kind = "mean_joint" if joint else "mean_assign"
    got = oracle_truth(spec, _e(f"{kind}({z})@{pop}"))
    assert got == pytest.approx(fig2_reference(spec, z, joint, pop), abs=1e-12)


def test_constant_outcome_oracle():
    spec = default_spec("fig2")
    zeros = {k: 0.0 for k in spec.coeffs if k.endswith("_on_Y")}
    spec = spec.with_overrides({**zeros, "alpha_Y": 0.0})
    for text in ("mean_joint(0)", "mean_joint(1)", "mean_assign(1)@subset"):
        assert oracle_truth(spec, _e(text)) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("knock", ["beta_S_on_A", "beta_A_on_Y"])
def test_edge_removal_equalities_fig2(knock):
    spec = default_spec("fig2").with_overrides({knock: 0.0})
    for z, pop in itertools.product((0, 1), ("target", "subset", "trial")):
        a = oracle_truth(spec, _e(f"mean_assign({z})@{pop}"))
        j = oracle_truth(spec, _e(f"mean_joint({z})@{pop}"))
        assert a == pytest.approx(j, abs=1e-15)


def test_fig3_assignment_equals_joint():
    spec = default_spec("fig3")
    for z in (0, 1):
        assert oracle_truth(spec, _e(f"mean_assign({z})")) == pytest.approx(
            oracle_truth(spec, _e(f"mean_joint({z})")), abs=1e-15
        )


@pytest.mark.parametrize("scenario", ALL)
def test_law_of_total_expectation(scenario):
    spec = default_spec(scenario)
    p1 = observational_conditionals(spec).p_s1
    for kind, z in itertools.product(("mean_joint", "mean_assign"), (0, 1)):
        whole = oracle_truth(spec, _e(f"{kind}({z})@target"))
        parts = p1 * oracle_truth(spec, _e(f"{kind}({z})@trial")) + (1 - p1) * oracle_truth(
            spec, _e(f"{kind}({z})@subset")
        )
        assert whole == pytest.approx(parts, abs=1e-14)


def test_enumeration_is_normalized():
    for scenario in ALL:
        for fixed in ({}, {"Z": 1}, {"S": 1, "Z": 0}):
            _, joint = enumerate_joint(default_spec(scenario), fixed)
            assert joint.sum() == pytest.approx(1.0, abs=1e-14)


# -- fixture calibration (derived by enumeration) ------------------------------------------

PREDICTED_BIAS = {
    ScenarioId.FIG2: ["mean_assign(0)@target", "mean_assign(1)@target", "mean_assign(1)@subset"],
    ScenarioId.FIG3: ["mean_joint(0)@target", "mean_joint(1)@target", "mean_joint(0)@subset", "mean_joint(1)@subset"],
    ScenarioId.COMBINED: [
        "mean_joint(0)@target", "mean_joint(1)@target", "mean_assign(0)@target", "mean_assign(1)@target",
        "mean_joint(0)@subset", "mean_joint(1)@subset",
    ],
}


@pytest.mark.parametrize("scenario", list(PREDICTED_BIAS))
def test_fixture_biases_exceed_floor(scenario):
    spec = default_spec(scenario)
    for text in PREDICTED_BIAS[scenario]:
        assert abs(asymptotic_bias(spec, _e(text))) > 0.02, text


@pytest.mark.parametrize("scenario", ALL)
def test_identified_estimands_have_no_bias(scenario):
    spec = default_spec(scenario)
    for z in (0, 1):
        assert abs(asymptotic_bias(spec, _e(f"mean_assign({z})@trial"))) < 1e-14
        if scenario in (ScenarioId.FIG1, ScenarioId.FIG2):
            assert abs(asymptotic_bias(spec, _e(f"mean_joint({z})@target"))) < 1e-14
            assert abs(asymptotic_bias(spec, _e(f"mean_joint({z})@subset"))) < 1e-14


def test_fig1_trial_and_target_differ():
    spec = default_spec("fig1")
    gap = oracle_truth(spec, _e("mean_joint(1)@trial")) - oracle_truth(spec, _e("mean_joint(1)@target"))
    assert abs(gap) > 0.02


@pytest.mark.parametrize("scenario", ALL)
def test_fixture_positivity(scenario):
    c = observational_conditionals(default_spec(scenario))
    assert np.all((c.p_s1_x > 0.05) & (c.p_s1_x < 0.95))
    assert np.all((c.p_z_xs1 > 0) & (c.p_z_xs1 < 1))


# -- sampling -------------------------------------------------------------------------------


def test_fig1_perfect_adherence_rows():
    d = sample_observational(default_spec("fig1"), 100_000, mask_nonparticipants=False)
    assert np.array_equal(d.a, d.z)
    assert set(np.unique(d.s)) == {0, 1}


def test_masking_contract():
    d = sample_observational(default_spec("fig3"), 100_000)
    off = d.s == 0
    for col in (d.z, d.a, d.y):
        assert np.all(col[off] == NA) and np.all(col[~off] != NA)


def test_severed_participation_leaves_adherence_alone():
    spec = default_spec("fig2").with_overrides(
        {"beta_S_on_A": 0.0, "gamma_U_on_A": 0.0, "gamma_U_on_Z": 0.0, "gamma_U_on_Y": 0.0, "delta_Z_U_on_A": 0.0}
    )
    d = sample_observational(spec, 100_000, mask_nonparticipants=False)
    # X still drives both S and A, so compare within X levels
    for x in range(spec.x_levels):
        rates = []
        for s in (0, 1):
            m = (d.x == x) & (d.s == s) & (d.z == 1)
            p = d.a[m].mean()
            rates.append((p, p * (1 - p) / m.sum()))
        (p0, v0), (p1, v1) = rates
        assert abs(p0 - p1) < 3 * math.sqrt(v0 + v1)
    flat = sample_observational(spec.with_overrides(beta_X_on_A=0.0), 100_000, mask_nonparticipants=False)
    (p0, v0), (p1, v1) = [
        (flat.a[m].mean(), flat.a[m].mean() * (1 - flat.a[m].mean()) / m.sum())
        for m in ((flat.s == 0) & (flat.z == 1), (flat.s == 1) & (flat.z == 1))
    ]
    assert abs(p0 - p1) < 3 * math.sqrt(v0 + v1)


@pytest.mark.parametrize("scenario", ALL)
@pytest.mark.parametrize("regime", ["do(Z=0)", "do(Z=1)", "do(S=1,Z=0)", "do(S=1,Z=1)"])
def test_interventional_mean_matches_oracle(scenario, regime):
    spec = default_spec(scenario)
    n = 100_000
    d = sample_interventional(spec, regime, n)
    fixed = parse_regime(regime)
    kind = "mean_joint" if "S" in fixed else "mean_assign"
    p = oracle_truth(spec, _e(f"{kind}({fixed['Z']})"))
    assert abs(d.y.mean() - p) < 4 * math.sqrt(p * (1 - p) / n)
    for pop, s_nat in (("trial", 1), ("subset", 0)):
        m = d.natural["S"] == s_nat if "S" in fixed else d.s == s_nat
        q = oracle_truth(spec, _e(f"{kind}({fixed['Z']})@{pop}"))
        assert abs(d.y[m].mean() - q) < 4 * math.sqrt(q * (1 - q) / m.sum())


def test_fig2_joint_mean_within_three_se():
    spec = default_spec("fig2")
    n = 100_000
    d = sample_interventional(spec, "do(S=1,Z=1)", n)
    p = oracle_truth(spec, _e("mean_joint(1)"))
    assert abs(d.y.mean() - p) < 3 * math.sqrt(p * (1 - p) / n)
    assert np.all(d.s == 1) and np.all(d.z == 1)


def test_fig1_regimes_identical_outcomes():
    spec = default_spec("fig1")
    for z in (0, 1):
        a = sample_interventional(spec, {"Z": z}, 50_000)
        b = sample_interventional(spec, {"S": 1, "Z": z}, 50_000)
        assert np.array_equal(a.y, b.y)
        assert np.all(a.a == z)


def test_interventional_regime_validation():
    spec = default_spec("fig2")
    with pytest.raises(InvalidSpec):
        sample_interventional(spec, "do(S=0,Z=1)", 10)
    with pytest.raises(InvalidSpec):
        sample_interventional(spec, "do(S=1)", 10)
    with pytest.raises(InvalidSpec):
        sample_observational(spec, 0)


def test_determinism_and_chunk_independence():
    spec = default_spec("combined")
    n = (1 << 18) + 1234
    a = sample_observational(spec, n, seed=9)
    b = sample_observational(spec, n, seed=9, jobs=4)
    c = sample_observational(spec, 1000, seed=9)
    for col in Dataset.COLUMNS:
        assert np.array_equal(getattr(a, col), getattr(b, col))
        assert np.array_equal(getattr(a, col)[:1000], getattr(c, col))
    other = sample_observational(spec, 1000, seed=10)
    assert not np.array_equal(other.x, c.x)


def test_non_nested_strata_sizes():
    d = sample_non_nested(default_spec("fig2"), 1000, 1000)
    assert (d.s == 1).sum() == 1000 and (d.s == 0).sum() == 1000
    assert d.design == "non_nested"
    e = sample_non_nested(default_spec("fig2"), 1000, 1000)
    assert np.array_equal(d.x, e.x)


# -- consistency ------------------------------------------------------------------------------


@pytest.mark.parametrize("scenario", ALL)
def test_consistency_holds(scenario):
    rep = consistency_check(default_spec(scenario), 10_000)
    assert rep.passed and rep.violations == 0 and rep.checked > 0
    assert rep.counterexample is None


def test_fig1_consistency_includes_copy_identity():
    rep = consistency_check(default_spec("fig1"), 10_000)
    assert any("perfect adherence" in c for c in rep.checks)


def test_mismatched_seeds_fail():
    rep = consistency_check(default_spec("fig2"), 10_000, seed=1, intervention_seed=2)
    assert not rep.passed and rep.violations > 0
    assert rep.counterexample["observed"] != rep.counterexample["counterfactual"]


# -- graph / distribution agreement ----------------------------------------------------------------


@pytest.mark.parametrize("scenario", ALL)
def test_implied_independencies_hold_exactly(scenario):
    res = graph_distribution_check(default_spec(scenario))
    assert len(res) > 50
    assert max(r.cmi for r in res) < 1e-12


@pytest.mark.parametrize("scenario", ALL)
def test_named_dependences_are_present(scenario):
    for z in (0, 1):
        for chk in named_dependences(default_spec(scenario), z):
            assert chk.cmi > 1e-6, str(chk.query)


# -- spec handling -----------------------------------------------------------------------------------


def test_coefficients_must_match_edges():
    spec = default_spec("fig2")
    d = spec.to_dict()
    d["coeffs"] = {**d["coeffs"], "beta_Y_on_X": 1.0}
    with pytest.raises(InvalidSpec):
        ScenarioSpec.from_dict(d)
    d["coeffs"] = {k: v for k, v in spec.coeffs.items() if k != "beta_S_on_A"}
    with pytest.raises(InvalidSpec):
        ScenarioSpec.from_dict(d)


def test_probability_checks():
    with pytest.raises(InvalidSpec):
        default_spec("fig1").with_overrides(p_U=1.0)
    d = default_spec("fig1").to_dict()
    d["x_probs"] = [0.5, 0.5, 0.1, 0.1]
    with pytest.raises(InvalidSpec):
        ScenarioSpec.from_dict(d)
    with pytest.raises(PositivityViolation):
        default_spec("fig1").with_overrides(trial_assign_prob=0.0)


def test_degenerate_participation_is_a_positivity_violation():
    spec = default_spec("fig2").with_overrides(alpha_S=60.0)
    with pytest.raises(PositivityViolation):
        sample_observational(spec, 10)


def test_unknown_override_rejected():
    with pytest.raises(InvalidSpec):
        default_spec("fig3").with_overrides(beta_S_on_A=1.0)


def test_yaml_round_trip(tmp_path):
    spec = default_spec("combined").with_overrides(beta_S_on_A=2.5, seed=77)
    path = tmp_path / "spec.yaml"
    spec.save(path)
    back = ScenarioSpec.load(path)
    assert back == spec
    assert back.key() == spec.key()


def test_partial_yaml_uses_fixture_defaults(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("scenario: fig2\ncoeffs:\n" + "".join(
        f"  {k}: {0.0 if k == 'beta_S_on_A' else v}\n" for k, v in default_spec("fig2").coeffs.items()
    ))
    spec = ScenarioSpec.load(path)
    assert spec.coeffs["beta_S_on_A"] == 0.0 and spec.seed == default_spec("fig2").seed
    path.write_text("scenario: fig2\nbogus: 1\n")
    with pytest.raises(InvalidSpec):
        ScenarioSpec.load(path)


def test_other_treatment_level():
    spec = ScenarioSpec.from_dict({**default_spec("fig2").to_dict(), "other_treatment": {"prob": 0.1, "y_effect": 1.0}})
    d = sample_observational(spec, 50_000, mask_nonparticipants=False)
    assert set(np.unique(d.a)) == {0, 1, 2}
    assert abs((d.a == 2).mean() - 0.1) < 4 * math.sqrt(0.09 / 50_000)
    assert consistency_check(spec, 5_000).passed
    assert max(r.cmi for r in graph_distribution_check(spec, ("dag", "swig_joint"))) < 1e-12


def test_effective_graph_drops_zeroed_edges():
    spec = default_spec("fig3").with_overrides(gamma_U1_on_A=0.0, gamma_U1_on_S=0.0)
    g = effective_graph(spec)
    assert ("U1", "A") not in g.edges and ("U1", "S") not in g.edges
    assert ("U2", "A") in g.edges
    # the Z x U2 interaction keeps Z -> A alive
    assert ("Z", "A") in effective_graph(default_spec("fig3").with_overrides(beta_Z_on_A=0.0)).edges


# -- estimands and datasets --------------------------------------------------------------------------------


def test_estimand_parse_round_trip():
    for text in ("mean_joint(1)@target", "contrast_assign(1,0)@subset", "mean_assign(0)@trial"):
        assert str(Estimand.parse(text)) == text
    e = Estimand.parse("mean_joint(1)")
    assert e.population is Population.TARGET and e.kind is EstimandKind.MEAN_JOINT
    assert e.regime() == {"S": 1, "Z": 1}
    for bad in ("mean_joint(2)", "contrast_joint(1,1)", "mean_joint(1,0)", "median(1)", "mean_joint(1)@mars"):
        with pytest.raises(InvalidEstimand):
            Estimand.parse(bad)


def test_contrast_oracle_is_difference():
    spec = default_spec("fig2")
    c = oracle_truth(spec, _e("contrast_joint(1,0)"))
    assert c == pytest.approx(oracle_truth(spec, _e("mean_joint(1)")) - oracle_truth(spec, _e("mean_joint(0)")))


def test_regime_labels():
    assert regime_label({}) == "observational"
    assert regime_label({"Z": 1, "S": 1}) == "do(S=1,Z=1)"
    assert parse_regime("do(S=1,Z=0)") == {"S": 1, "Z": 0}
    assert parse_regime(regime_label({"Z": 0})) == {"Z": 0}


def test_csv_round_trip(tmp_path):
    d = sample_observational(default_spec("fig2"), 500)
    path = tmp_path / "d.csv"
    d.to_csv(path)
    text = path.read_text()
    assert text.startswith("x,s,z,a,y\n") and ",NA,NA,NA" in text and "\r" not in text
    back = Dataset.from_csv(path)
    for col in Dataset.COLUMNS:
        assert np.array_equal(getattr(back, col), getattr(d, col))
