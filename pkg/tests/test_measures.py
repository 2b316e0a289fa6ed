import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infoqm.errors import DensityFloorError, ScenarioError
from infoqm.grid import GridSpec, Metric, RealField, make_grid
from infoqm.measures import (
    AnisotropicFisher,
    Fisher,
    HigherDerivative,
    WeightedSum,
    evaluate,
    fd_check,
    measure_from_dict,
    measure_to_dict,
    structural_metadata,
    variational_derivative,
)

from conftest import periodic_gaussian

M2 = Metric(1, 2, (1.0,))


def _grid2(L=12.0, n=64):
    return make_grid(GridSpec([(L, n), (L, n)]), M2)


def _product(grid, var_x, var_y, background=0.0):
    p = periodic_gaussian(grid, 0.0, var_x, 0) * periodic_gaussian(grid, 0.0, var_y, 1)
    p = p + background * p.max()
    return RealField(grid, p / (np.sum(p) * grid.cell_volume))


def test_fisher_of_gaussian(gauss1):
    assert evaluate(Fisher(), gauss1) == pytest.approx(2.0, abs=1e-6)


def _fitted_grid(var, tail):
    """1D grid whose edge sits where the Gaussian has dropped to ``tail``."""
    return make_grid(GridSpec([(2 * np.sqrt(2 * var * np.log(1 / tail)), 256)]), Metric())


@pytest.mark.parametrize("var", [0.4, 0.5, 0.8, 1.0])
def test_fisher_inverse_variance(var):
    g = _fitted_grid(var, 1e-9)
    p = RealField(g, periodic_gaussian(g, 0.0, var))
    assert evaluate(Fisher(), p) == pytest.approx(1 / var, rel=1e-6)


def test_fisher_scales_with_inverse_mass(grid1, gauss1):
    heavy = Fisher(Metric(1, 1, (2.0,)))
    assert evaluate(heavy, gauss1) == pytest.approx(1.0, abs=1e-6)


def test_constant_density(grid1):
    p = RealField(grid1, np.full(grid1.shape, 0.1))
    assert evaluate(Fisher(), p) == pytest.approx(0.0, abs=1e-14)
    assert np.max(np.abs(variational_derivative(Fisher(), p).values)) < 1e-12


def test_fisher_product_separates():
    # the density floor caps the corner dynamic range, so each axis keeps a 1e-6 tail
    gx, gy = _fitted_grid(1.0, 1e-6), _fitted_grid(2.0, 1e-6)
    g = make_grid(GridSpec([(gx.extents[0], 128), (gy.extents[0], 128)]), M2)
    p = _product(g, 1.0, 2.0)
    hx = make_grid(GridSpec([(gx.extents[0], 128)]), Metric())
    hy = make_grid(GridSpec([(gy.extents[0], 128)]), Metric())
    px = RealField(hx, periodic_gaussian(hx, 0.0, 1.0))
    py = RealField(hy, periodic_gaussian(hy, 0.0, 2.0))
    total = evaluate(Fisher(M2), p)
    assert total == pytest.approx(evaluate(Fisher(), px) + evaluate(Fisher(), py), rel=1e-10)
    assert total == pytest.approx(1.5, rel=5e-5)


def test_floor_breach_reports_site(grid1):
    p = np.full(grid1.shape, 1.0)
    p[17] = 0.0
    with pytest.raises(DensityFloorError) as info:
        evaluate(Fisher(), RealField(grid1, p))
    assert info.value.site == (17,)


@pytest.mark.parametrize(
    "measure",
    [
        Fisher(),
        HigherDerivative(1e-2, 0.1),
        WeightedSum(((1.0, Fisher()), (0.5, HigherDerivative(0.1, 0.5)))),
    ],
    ids=["fisher", "higher", "sum"],
)
def test_fd_check_1d(gauss1, measure):
    assert fd_check(measure, gauss1, probe_count=8).max_rel_error < 1e-6


@pytest.mark.parametrize(
    "measure",
    [Fisher(M2), AnisotropicFisher(((1.0, 0.3), (0.3, 2.0))), HigherDerivative(1e-2, 0.3, M2)],
    ids=["fisher", "anisotropic", "higher"],
)
def test_fd_check_2d(measure):
    p = _product(_grid2(), 0.8, 1.2, background=1e-3)
    assert fd_check(measure, p, probe_count=4).max_rel_error < 1e-6


def test_zero_probe_and_zero_coupling(gauss1):
    zero = np.zeros(gauss1.grid.shape)
    rep = fd_check(Fisher(), gauss1, probes=[zero])
    assert rep.analytic == [0.0] and rep.finite_difference == [0.0]
    rep = fd_check(HigherDerivative(0.0, 0.1), gauss1, probe_count=4)
    assert all(v == 0.0 for v in rep.analytic + rep.finite_difference)


def test_higher_derivative_value(gauss1):
    # for a Gaussian (ln p)'' = -1/var, so the integrand is constant
    m = HigherDerivative(1e-2, 0.1)
    assert evaluate(m, gauss1) == pytest.approx(1e-4 * 4.0, rel=1e-6)


def test_structural_metadata():
    assert structural_metadata(Fisher()).max_derivative_order == 2
    assert structural_metadata(Fisher()).homogeneity_degree == 1
    assert structural_metadata(Fisher()).local
    assert structural_metadata(HigherDerivative(0.1, 1.0)).max_derivative_order == 4
    both = WeightedSum(((1.0, Fisher()), (1.0, HigherDerivative(0.1, 1.0))))
    assert structural_metadata(both).max_derivative_order == 4
    off = WeightedSum(((1.0, Fisher()), (0.0, HigherDerivative(0.1, 1.0))))
    assert structural_metadata(off).max_derivative_order == 2


def test_anisotropic_validation():
    with pytest.raises(ScenarioError):
        AnisotropicFisher(((1.0, 0.5), (0.0, 1.0)))
    with pytest.raises(ScenarioError):
        AnisotropicFisher(((1.0, 0.0), (0.0, -1.0)))
    with pytest.raises(ScenarioError):
        WeightedSum(((-1.0, Fisher()),))


def test_anisotropic_identity_equals_fisher():
    p = _product(_grid2(), 0.8, 1.2, background=1e-3)
    assert evaluate(AnisotropicFisher(((1.0, 0.0), (0.0, 1.0))), p) == pytest.approx(evaluate(Fisher(M2), p), rel=1e-12)


@pytest.mark.parametrize(
    "measure",
    [
        Fisher(Metric(2, 1, (1.0, 3.0))),
        AnisotropicFisher(((1.0, 0.2), (0.2, 2.0))),
        HigherDerivative(0.01, 0.1),
        WeightedSum(((1.0, Fisher()), (2.0, HigherDerivative(0.01, 0.1)))),
    ],
)
def test_serialisation_round_trip(measure):
    assert measure_from_dict(measure_to_dict(measure)) == measure


def test_strict_parse_rejects_unknown_key():
    with pytest.raises(ScenarioError):
        measure_from_dict({"kind": "Fisher", "metric": Metric().to_dict(), "eps": 1})
    assert measure_from_dict({"kind": "Fisher", "eps": 1}, Metric(), strict=False) == Fisher()


@settings(max_examples=20, deadline=None)
@given(
    var=st.floats(0.4, 1.5),
    mu=st.floats(-1.0, 1.0),
    c=st.floats(0.1, 10.0),
)
def test_fisher_degree_one_homogeneous(var, mu, c):
    g = make_grid(GridSpec([(12.0, 128)]), Metric())
    p = RealField(g, periodic_gaussian(g, mu, var) + 1e-4)
    assert evaluate(Fisher(), p.with_values(c * p.values)) == pytest.approx(c * evaluate(Fisher(), p), rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(
    var=st.floats(0.4, 1.5),
    mu=st.floats(-1.0, 1.0),
    seed=st.integers(0, 2**16),
)
def test_variational_derivative_matches_fd(var, mu, seed):
    g = make_grid(GridSpec([(12.0, 128)]), Metric())
    p = RealField(g, periodic_gaussian(g, mu, var) + 1e-3)
    m = WeightedSum(((1.0, Fisher()), (1.0, HigherDerivative(0.01, 0.2))))
    assert fd_check(m, p, probe_count=2, seed=seed).max_rel_error < 1e-6


@settings(max_examples=15, deadline=None)
@given(var=st.floats(0.3, 2.0), mu=st.floats(-1.0, 1.0))
def test_fisher_non_negative(var, mu):
    g = make_grid(GridSpec([(12.0, 128)]), Metric())
    p = RealField(g, periodic_gaussian(g, mu, var) + 1e-3)
    assert evaluate(Fisher(), p) >= 0
