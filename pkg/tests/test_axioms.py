import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infoqm.axioms import (
    AXIOMS,
    check_axiom,
    classify,
    density_suite,
    effective_hbar,
    family_member,
)
from infoqm.errors import AxiomError
from infoqm.grid import Metric
from infoqm.measures import AnisotropicFisher, Fisher, HigherDerivative, WeightedSum, evaluate

M2 = Metric(1, 2, (1.0,))
ANISO = AnisotropicFisher(((1.0, 0.0), (0.0, 2.0)))
HD = HigherDerivative(1e-2, 0.1, M2)


@pytest.fixture(scope="module")
def fisher_report():
    return classify(Fisher(M2), budget=3)


def test_fisher_passes_everything(fisher_report):
    assert [e.axiom for e in fisher_report.entries] == list(AXIOMS)
    assert fisher_report.all_pass
    for e in fisher_report.entries:
        if e.method == "numerical":
            assert e.defect < 1e-6, e.axiom
    assert not fisher_report.linearity["nonlinear"]
    assert fisher_report.linearity["superposition_defect"] < 1e-10


def test_anisotropic_fails_only_rotation():
    rep = classify(ANISO, budget=3)
    assert rep.failed() == ["RotationInvariance"]
    assert rep.entry("RotationInvariance").defect > 1e-2
    assert rep.linearity["nonlinear"] and rep.linearity["biconditional_holds"]


def test_higher_derivative_fails_ahd_and_separability():
    rep = classify(HD, budget=3, probe=False)
    assert sorted(rep.failed()) == ["AHD", "Separability"]
    assert rep.entry("AHD").method == "structural"
    detail = rep.entry("Separability").detail
    for got, want in zip(detail["cross_terms"], detail["predicted_cross_terms"]):
        assert want > 0
        assert got == pytest.approx(want, rel=1e-6)
    assert rep.entry("RotationInvariance").passed
    assert rep.entry("Homogeneity").passed


def test_zero_weight_term_is_invisible(fisher_report):
    rep = classify(WeightedSum(((1.0, Fisher(M2)), (0.0, HD))), budget=3)
    assert rep.verdicts() == fisher_report.verdicts()
    assert rep.linearity["superposition_defect"] == fisher_report.linearity["superposition_defect"]


def test_report_serialises(fisher_report):
    d = fisher_report.to_dict()
    assert d["all_pass"] and len(d["entries"]) == 6
    assert d["measure"]["kind"] == "Fisher"


def test_dimension_errors():
    with pytest.raises(AxiomError):
        check_axiom(Fisher(), "RotationInvariance")
    with pytest.raises(AxiomError):
        check_axiom(Fisher(), "Separability")
    with pytest.raises(AxiomError):
        check_axiom(Fisher(), "Beauty")


def test_one_axis_measure_skips_two_axis_axioms():
    rep = classify(Fisher(), budget=2, probe=False)
    assert {e.axiom for e in rep.entries} == {"Positivity", "Homogeneity", "Locality", "AHD"}


def test_seeded_suite_is_deterministic():
    from infoqm.axioms import _suite_grid

    g = _suite_grid(2)
    a = density_suite(g, 3, seed=5)
    b = density_suite(g, 3, seed=5)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    assert check_axiom(ANISO, "RotationInvariance", 2, 5).defect == check_axiom(ANISO, "RotationInvariance", 2, 5).defect


def test_effective_hbar():
    assert effective_hbar(Fisher(M2)) == pytest.approx(1.0)
    assert effective_hbar(Fisher(M2).scaled(4.0)) == pytest.approx(2.0)


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 1000))
def test_suite_densities_are_positive_and_normalised(seed):
    from infoqm.axioms import _suite_grid

    g = _suite_grid(2, 48)
    for p in density_suite(g, 2, seed):
        assert np.all(p.values > 0)
        assert np.sum(p.values) * g.cell_volume == pytest.approx(1.0, abs=1e-12)
        assert evaluate(Fisher(M2), p) > 0


@settings(max_examples=6, deadline=None)
@given(
    a=st.floats(0.1, 5.0),
    b=st.sampled_from([0.0, 0.1, 1.0]),
    c=st.sampled_from([0.0, 0.5]),
)
def test_family_rotation_verdict_tracks_anisotropy(a, b, c):
    rep = check_axiom(family_member(a, b, c), "RotationInvariance", budget=1)
    assert rep.passed == (b == 0)
