import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infoqm.acceptance import anisotropic_defect, higher_defect
from infoqm.action import ActionConfig, Harmonic
from infoqm.dynamics import EvolveConfig, Trajectory, evolve_wave, ground_state
from infoqm.errors import ScenarioError
from infoqm.grid import GridSpec, Metric, RealField, make_grid
from infoqm.measures import AnisotropicFisher, Fisher, HigherDerivative, WeightedSum
from infoqm.observables import (
    ScanResult,
    dispersion_fit,
    energy,
    moments,
    norm,
    orientation_scan,
    superposition_defect,
    symmetry_shift_scan,
)
from infoqm.runner import gaussian_wave

from conftest import periodic_gaussian

M2 = Metric(1, 2, (1.0,))


def _grid(L, n):
    return make_grid(GridSpec([(L, n)]), Metric())


def test_unit_gaussian_moments():
    g = _grid(14.0, 256)
    p = RealField(g, periodic_gaussian(g, 0.3, 1.0))
    assert norm(p) == pytest.approx(1.0, abs=1e-12)
    assert moments(p, 0, 1) == pytest.approx(0.3, abs=1e-8)
    assert moments(p, 0, 2) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ScenarioError):
        moments(p, 1, 1)
    with pytest.raises(ScenarioError):
        moments(p, 0, 3)


def test_ground_state_energy():
    g = _grid(10.0, 128)
    cfg = ActionConfig(potential=Harmonic((1.0,)))
    state, E = ground_state(cfg, RealField(g, np.ones(g.shape)))
    assert energy(state, cfg) == pytest.approx(0.5, abs=1e-4)
    assert energy(state, cfg) == pytest.approx(E, abs=1e-10)


def test_energy_pictures_agree():
    from infoqm.dynamics import wave_to_hydro

    g = _grid(10.0, 128)
    cfg = ActionConfig(potential=Harmonic((0.5,)))
    k = 2 * np.pi / 10.0
    psi = gaussian_wave(g, 0.5, 1.0, k)
    assert energy(psi, cfg) == pytest.approx(energy(wave_to_hydro(psi), cfg), rel=1e-10)
    # ½k² + ⟨V⟩ + ħ²/(8σ²); the L = 10 box truncates the tails at ~1e-5
    assert energy(psi, cfg) == pytest.approx(0.5 * k**2 + 0.125 * (1 + 0.25) + 0.125, rel=1e-4)


def test_superposition_defect_linear_and_degenerate():
    g = make_grid(GridSpec([(6.0, 32), (6.0, 32)]), M2)
    psi1 = gaussian_wave(g, [0.75, 0.75], np.sqrt(0.5))
    psi2 = gaussian_wave(g, [-0.75, -0.75], np.sqrt(0.5))
    ev = EvolveConfig(1e-2, 100, record_every=100)
    assert superposition_defect(psi1, psi2, 0.6, 0.8, ActionConfig(), ev) < 1e-10
    hd = WeightedSum(((1.0, Fisher(M2)), (1.0, HigherDerivative(1e-2, 0.1, M2))))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert superposition_defect(psi1, psi2, 1.0, 0.0, ActionConfig(measure=hd), ev) == 0.0
    with pytest.raises(ScenarioError):
        superposition_defect(psi1, psi2, 0.6, 0.8, ActionConfig(), ev, convention="bogus")


def test_superposition_conventions_agree_for_degree_one():
    g = _grid(6.0, 64)
    psi1 = gaussian_wave(g, 1.0, np.sqrt(0.5))
    psi2 = gaussian_wave(g, -1.0, np.sqrt(0.5))
    cfg = ActionConfig(measure=WeightedSum(((1.0, Fisher()), (1.0, HigherDerivative(1e-2, 0.1)))))
    ev = EvolveConfig(5e-4, 400, record_every=400)
    a = superposition_defect(psi1, psi2, 0.9, 0.9, cfg, ev)
    b = superposition_defect(psi1, psi2, 0.9, 0.9, cfg, ev, convention="raw")
    assert a == pytest.approx(b, rel=1e-8)


def test_higher_derivative_defect_first_order():
    ratio = higher_defect(1e-2) / higher_defect(1e-3)
    assert ratio == pytest.approx(10, abs=1)


def test_anisotropic_defect_halving():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ratio = anisotropic_defect(0.1) / anisotropic_defect(0.05)
    assert np.log2(ratio) == pytest.approx(1, abs=0.1)


def test_dispersion_fit():
    g = _grid(40.0, 256)
    traj = evolve_wave(gaussian_wave(g, 0.0, np.sqrt(0.5)), ActionConfig(), EvolveConfig(0.01, 200, record_every=20))
    fit = dispersion_fit(traj)
    assert fit.slope == pytest.approx(0.5, rel=1e-3)
    assert fit.expected == pytest.approx(0.5, rel=1e-6)
    assert fit.fit["c0"] == pytest.approx(0.5, abs=1e-6)
    assert fit.passed
    lines = fit.to_csv().splitlines()
    assert lines[0] == "time,variance" and len(lines) == 12


def test_dispersion_fit_rejects_bad_input():
    g = _grid(40.0, 256)
    psi = gaussian_wave(g, 0.0, np.sqrt(0.5))
    with pytest.raises(ScenarioError):
        dispersion_fit(Trajectory([0.0], [psi], {"potential": "Zero"}))
    with pytest.raises(ScenarioError):
        dispersion_fit(Trajectory([0.0] * 5, [psi] * 5, {"potential": "Zero"}))
    with pytest.raises(ScenarioError):
        dispersion_fit(Trajectory([0, 1, 2, 3], [psi] * 4, {"potential": "Harmonic"}))


ANGLES = np.linspace(0, np.pi, 8, endpoint=False)


def test_orientation_scan_isotropic():
    g = make_grid(GridSpec([(12.0, 64), (12.0, 64)]), M2)
    res = orientation_scan(ActionConfig(), g, ANGLES)
    assert res.slope < 1e-8


def test_orientation_scan_anisotropic_scaling():
    g = make_grid(GridSpec([(12.0, 64), (12.0, 64)]), M2)
    amps = []
    for delta in (0.1, 0.05):
        cfg = ActionConfig(measure=AnisotropicFisher(((1.0, 0.0), (0.0, 1.0 + delta))))
        amps.append(symmetry_shift_scan(cfg, g, "orientation", ANGLES).slope)
    assert np.log2(amps[0] / amps[1]) == pytest.approx(1, abs=0.1)


def test_epsilon_scan_matches_first_order():
    g = _grid(10.0, 128)
    hd = WeightedSum(((1.0, Fisher()), (1.0, HigherDerivative(1e-3, 0.1))))
    cfg = ActionConfig(measure=hd, potential=Harmonic((1.0,)))
    res = symmetry_shift_scan(cfg, g, "epsilon", [1e-3, 2e-3, 4e-3, 8e-3])
    assert res.slope == pytest.approx(1.0, abs=0.01)
    assert res.fit["linear_slope"] == pytest.approx(res.fit["first_order_slope"], rel=1e-2)


def test_scan_validation():
    g = _grid(10.0, 128)
    with pytest.raises(ScenarioError):
        symmetry_shift_scan(ActionConfig(potential=Harmonic((1.0,))), g, "epsilon", [1, 2, 3, 4])
    with pytest.raises(ScenarioError):
        symmetry_shift_scan(ActionConfig(), g, "banana", [1, 2, 3, 4])
    with pytest.raises(ScenarioError):
        ScanResult("x", [1, 2], [1])


@settings(max_examples=10, deadline=None)
@given(shift=st.floats(-1.0, 1.0), var=st.floats(0.6, 1.5))
def test_moments_track_translation(shift, var):
    g = _grid(16.0, 256)
    p = RealField(g, periodic_gaussian(g, shift, var))
    assert moments(p, 0, 1) == pytest.approx(shift, abs=1e-7)
    assert moments(p, 0, 2) == pytest.approx(var, rel=1e-6)
