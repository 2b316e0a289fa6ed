import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infoqm.errors import GridError, ScenarioError
from infoqm.grid import (
    ComplexField,
    GridSpec,
    Metric,
    RealField,
    derivative,
    integrate,
    make_grid,
    rotate_field,
)

from conftest import periodic_gaussian


def test_uniform_lattice():
    g = make_grid(GridSpec([(20.0, 256)]), Metric())
    assert g.shape == (256,)
    assert g.spacing[0] == pytest.approx(20 / 256)
    assert g.coords[0][0] == -10.0


def test_metric_from_masses():
    m = Metric(2, 1, (1.0, 2.0))
    assert np.allclose(m.matrix(), np.diag([1.0, 0.5]))


def test_axis_count_mismatch():
    with pytest.raises((GridError, ScenarioError)):
        make_grid(GridSpec([(1.0, 8)] * 3), Metric(1, 2, (1.0,)))


def test_mass_count_mismatch():
    with pytest.raises(ScenarioError, match="masses"):
        Metric(2, 1, (1.0, 2.0, 3.0))


def test_spectral_sine_derivative():
    L = 7.0
    g = make_grid(GridSpec([(L, 64)]), Metric())
    x = g.coords[0]
    d = derivative(RealField(g, np.sin(2 * np.pi * x / L)), [0])
    assert np.max(np.abs(d.values - 2 * np.pi / L * np.cos(2 * np.pi * x / L))) < 1e-10


def test_constant_derivative_is_zero(grid1):
    d = derivative(RealField(grid1, np.full(grid1.shape, 3.0)), [0])
    assert np.max(np.abs(d.values)) < 1e-14


def test_gaussian_second_derivative():
    sigma = 1.0
    g = make_grid(GridSpec([(14.0, 256)]), Metric())
    x = g.coords[0]
    f = np.exp(-(x**2) / (2 * sigma**2))
    d2 = derivative(RealField(g, f), [0, 0]).values
    exact = (x**2 / sigma**4 - 1 / sigma**2) * f
    assert np.max(np.abs(d2 - exact)) / np.max(np.abs(exact)) < 1e-8


def test_central4_converges():
    errs = []
    for n in (32, 64):
        g = make_grid(GridSpec([(2 * np.pi, n)]), Metric())
        x = g.coords[0]
        d = derivative(RealField(g, np.sin(x)), [0], method="central4").values
        errs.append(np.max(np.abs(d - np.cos(x))))
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)


def test_complex_derivative():
    g = make_grid(GridSpec([(2 * np.pi, 32)]), Metric())
    x = g.coords[0]
    d = derivative(ComplexField(g, np.exp(2j * x)), [0])
    assert np.max(np.abs(d.values - 2j * np.exp(2j * x))) < 1e-12


def test_integrals(grid1, gauss1):
    assert integrate(gauss1) == pytest.approx(1.0, abs=1e-10)
    assert integrate(RealField(grid1, np.full(grid1.shape, 2.5))) == pytest.approx(25.0)
    g = make_grid(GridSpec([(16.0, 256)]), Metric())
    p = periodic_gaussian(g, 0.0, 1.0)
    assert integrate(RealField(g, p * g.coords[0] ** 2)) == pytest.approx(1.0, abs=1e-8)


def _grid2(n=64, L=12.0):
    return make_grid(GridSpec([(L, n), (L, n)]), Metric(1, 2, (1.0,)))


def test_quarter_turn_is_permutation():
    g = _grid2(16)
    vals = np.random.default_rng(0).random(g.shape)
    rot = rotate_field(RealField(g, vals), np.pi / 2).values
    assert sorted(rot.ravel()) == sorted(vals.ravel())
    back = rotate_field(rotate_field(RealField(g, vals), np.pi / 2), -np.pi / 2).values
    assert np.array_equal(back, vals)


def test_rotation_identity_and_isotropic():
    g = _grid2()
    X, Y = g.mesh(0), g.mesh(1)
    f = RealField(g, np.exp(-(X**2 + Y**2) / 2))
    assert np.array_equal(rotate_field(f, 0.0).values, f.values)
    assert np.max(np.abs(rotate_field(f, 0.7).values - f.values)) < 1e-6


def test_grid_hash_distinguishes():
    a = make_grid(GridSpec([(10.0, 64)]), Metric())
    b = make_grid(GridSpec([(10.0, 66)]), Metric())
    c = make_grid(GridSpec([(10.0, 64)]), Metric(1, 1, (2.0,)))
    assert len({a.hash(), b.hash(), c.hash()}) == 3
    assert a.hash() == make_grid(GridSpec([(10.0, 64)]), Metric()).hash()


@settings(max_examples=25, deadline=None)
@given(
    n=st.sampled_from([16, 32, 48]),
    L=st.floats(1.0, 30.0),
    mode=st.integers(1, 5),
)
def test_spectral_derivative_exact_for_resolved_modes(n, L, mode):
    g = make_grid(GridSpec([(L, n)]), Metric())
    x = g.coords[0]
    k = 2 * np.pi * mode / L
    d = derivative(RealField(g, np.cos(k * x)), [0]).values
    assert np.max(np.abs(d + k * np.sin(k * x))) < 1e-9 * max(1, k)


@settings(max_examples=20, deadline=None)
@given(shift=st.floats(-3, 3))
def test_translate_matches_shifted_gaussian(shift):
    g = make_grid(GridSpec([(16.0, 128)]), Metric())
    f = periodic_gaussian(g, 0.0, 1.0)
    moved = g.translate(f, [shift])
    assert np.max(np.abs(moved - periodic_gaussian(g, shift, 1.0))) < 1e-10
