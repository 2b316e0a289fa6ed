import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infoqm.action import (
    ActionConfig,
    DoubleWell,
    Harmonic,
    HydroState,
    ZeroPotential,
    continuity_residual,
    evaluate_action,
    hj_residual,
    measure_derivative,
    potential_from_dict,
    quantum_potential,
)
from infoqm.errors import ScenarioError
from infoqm.grid import GridSpec, Metric, RealField, make_grid
from infoqm.measures import AnisotropicFisher, Fisher, HigherDerivative, WeightedSum, variational_derivative

from conftest import periodic_gaussian


def _bulk(p, level=1e-6):
    return p > level * p.max()


def _coherent(grid, x0, t):
    """Closed-form coherent state (ω = m = ħ = 1) as (state, Ṡ, ṗ)."""
    xc, pc = x0 * np.cos(t), -x0 * np.sin(t)
    x = grid.coords[0]
    p = periodic_gaussian(grid, xc, 0.5)
    S = np.full(grid.shape, -pc * xc / 2 - t / 2)
    state = HydroState(RealField(grid, p), RealField(grid, S), (pc,))
    S_dot = -xc * x + xc**2 / 2 - pc**2 / 2 - 0.5
    p_dot = 2 * (x - xc) * pc * p
    return state, RealField(grid, S_dot), RealField(grid, p_dot)


def test_defaults():
    cfg = ActionConfig()
    assert cfg.hbar == 1.0 and cfg.lam == pytest.approx(1 / 8)
    assert ActionConfig(hbar=2.0).lam == pytest.approx(0.5)
    with pytest.raises(ScenarioError):
        ActionConfig(hbar=0.0)
    with pytest.raises(ScenarioError):
        ActionConfig(lam=-1.0)


def test_linear_only_for_plain_fisher(grid1):
    assert ActionConfig().is_linear(grid1)
    assert ActionConfig(hbar=2.0).is_linear(grid1)
    assert not ActionConfig(lam=0.2).is_linear(grid1)
    hd = WeightedSum(((1.0, Fisher()), (1.0, HigherDerivative(0.01, 0.1))))
    assert not ActionConfig(measure=hd).is_linear(grid1)


def test_config_round_trip():
    cfg = ActionConfig(hbar=0.7, lam=0.3, measure=HigherDerivative(0.1, 0.5), potential=Harmonic((1.5,)))
    assert ActionConfig.from_dict(cfg.to_dict()) == cfg


def test_potentials(grid1):
    x = grid1.coords[0]
    assert np.allclose(Harmonic((2.0,)).sample(grid1), 2.0 * x**2)
    assert np.all(ZeroPotential().sample(grid1) == 0)
    dw = DoubleWell(1.0, 0.5).sample(grid1)
    assert dw.shape == grid1.shape
    assert potential_from_dict(Harmonic((2.0,)).to_dict()) == Harmonic((2.0,))


def test_quantum_potential_identity(gauss1):
    Q = quantum_potential(gauss1).values
    vd = variational_derivative(WeightedSum(((1 / 8, Fisher()),)), gauss1).values
    assert np.max(np.abs(Q - vd)) / np.max(np.abs(Q)) < 1e-6


def test_quantum_potential_closed_form(grid1):
    var = 0.6
    p = RealField(grid1, periodic_gaussian(grid1, 0.4, var))
    x = grid1.coords[0]
    exact = (1 / (4 * var)) * (1 - (x - 0.4) ** 2 / (2 * var))
    inner = np.abs(x - 0.4) < grid1.extents[0] / 4
    err = np.abs(quantum_potential(p).values - exact)[inner] / np.max(np.abs(exact[inner]))
    assert np.max(err) < 1e-8


def test_quantum_potential_constant(grid1):
    assert np.max(np.abs(quantum_potential(RealField(grid1, np.full(grid1.shape, 0.1))).values)) < 1e-12


def test_quantum_potential_scales_with_hbar(gauss1):
    assert np.allclose(quantum_potential(gauss1, hbar=2.0).values, 4 * quantum_potential(gauss1).values)


def test_hj_ground_state(gauss1):
    grid = gauss1.grid
    cfg = ActionConfig(potential=Harmonic((1.0,)))
    state = HydroState(gauss1, RealField(grid, np.zeros(grid.shape)))
    res = hj_residual(state, RealField(grid, np.full(grid.shape, -0.5)), cfg).values
    assert np.max(np.abs(res[_bulk(gauss1.values)])) < 1e-6


def test_hj_trivial(grid1):
    p = RealField(grid1, np.full(grid1.shape, 0.1))
    state = HydroState(p, RealField(grid1, np.zeros(grid1.shape)))
    zero = RealField(grid1, np.zeros(grid1.shape))
    assert np.max(np.abs(hj_residual(state, zero, ActionConfig()).values)) < 1e-12


@pytest.mark.parametrize("t", [0.3, 1.1, 2.5])
def test_coherent_state_residuals(grid1, t):
    cfg = ActionConfig(potential=Harmonic((1.0,)))
    state, S_dot, p_dot = _coherent(grid1, 0.5, t)
    mask = _bulk(state.p.values)
    assert np.max(np.abs(hj_residual(state, S_dot, cfg).values[mask])) < 1e-5
    assert np.max(np.abs(continuity_residual(state, p_dot).values)) < 1e-5


def test_plane_wave_continuity(grid1):
    p = RealField(grid1, np.full(grid1.shape, 0.1))
    k = 2 * np.pi * 3 / grid1.extents[0]
    state = HydroState(p, RealField(grid1, np.zeros(grid1.shape)), (k,))
    zero = RealField(grid1, np.zeros(grid1.shape))
    assert np.max(np.abs(continuity_residual(state, zero).values)) < 1e-14


def test_hydro_state_validation(grid1, gauss1):
    zero = RealField(grid1, np.zeros(grid1.shape))
    with pytest.raises(ScenarioError, match="normalised"):
        HydroState(gauss1.with_values(2 * gauss1.values), zero)
    with pytest.raises(ScenarioError, match="negative"):
        HydroState(gauss1.with_values(-gauss1.values), zero, check_norm=False)


def test_action_static_ground_state(gauss1):
    grid = gauss1.grid
    cfg = ActionConfig(potential=Harmonic((1.0,)))
    dt = 0.1
    history = [
        HydroState(gauss1, RealField(grid, np.full(grid.shape, -0.5 * n * dt))) for n in range(11)
    ]
    # ⟨V⟩ + λI_F - E = 1/4 + 1/4 - 1/2
    assert evaluate_action(history, dt, cfg) == pytest.approx(0.0, abs=1e-8)


def test_action_trivial_and_classical(gauss1):
    grid = gauss1.grid
    zero = RealField(grid, np.zeros(grid.shape))
    history = [HydroState(gauss1, zero)] * 5
    assert evaluate_action(history, 0.1, ActionConfig(lam=0.0)) == 0.0
    classical = evaluate_action(history, 0.1, ActionConfig(lam=0.0, potential=Harmonic((1.0,))))
    assert classical == pytest.approx(0.4 * 0.25, rel=1e-8)
    with pytest.raises(ScenarioError):
        evaluate_action(history[:2], 0.1, ActionConfig())


def test_measure_derivative_scales_with_lambda(gauss1):
    a = measure_derivative(ActionConfig(lam=0.1), gauss1)
    b = measure_derivative(ActionConfig(lam=0.3), gauss1)
    assert np.allclose(3 * a, b)


@settings(max_examples=20, deadline=None)
@given(var=st.floats(0.4, 1.2), mu=st.floats(-1.0, 1.0), hbar=st.floats(0.3, 3.0))
def test_identity_holds_for_any_gaussian(var, mu, hbar):
    g = make_grid(GridSpec([(12.0, 256)]), Metric())
    p = RealField(g, periodic_gaussian(g, mu, var) + 1e-6)
    Q = quantum_potential(p, hbar=hbar).values
    vd = measure_derivative(ActionConfig(hbar=hbar), p)
    assert np.max(np.abs(Q - vd)) / np.max(np.abs(Q)) < 1e-6


def test_identity_with_masses_2d():
    metric = Metric(2, 1, (1.0, 2.5))
    g = make_grid(GridSpec([(10.0, 64), (10.0, 64)]), metric)
    p = periodic_gaussian(g, 0.2, 1.0, 0) * periodic_gaussian(g, -0.3, 0.8, 1) + 1e-4
    p = RealField(g, p / (p.sum() * g.cell_volume))
    Q = quantum_potential(p).values
    vd = measure_derivative(ActionConfig(), p)
    assert np.max(np.abs(Q - vd)) / np.max(np.abs(Q)) < 1e-6
    aniso = ActionConfig(measure=AnisotropicFisher(((1.0, 0.0), (0.0, 0.4))))
    assert np.allclose(measure_derivative(aniso, p), vd, atol=1e-9 * np.max(np.abs(vd)))
