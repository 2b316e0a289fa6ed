"""The acceptance suite: one function per criterion, each returning a :class:`CriterionResult`."""

from __future__ import annotations

import json
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from infoqm.action import ActionConfig, Harmonic, quantum_potential
from infoqm.axioms import AXIOMS, classify, uniqueness_scan
from infoqm.dynamics import (
    EvolveConfig,
    apply_boost,
    evolve_hydro,
    evolve_wave,
    ground_state,
    wave_to_hydro,
)
from infoqm.grid import ComplexField, GridSpec, Metric, RealField, make_grid
from infoqm.measures import AnisotropicFisher, Fisher, HigherDerivative, WeightedSum, variational_derivative
from infoqm.observables import dispersion_fit, energy, moments, norm, superposition_defect
from infoqm.runner import gaussian_wave


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    values: dict
    thresholds: dict
    seconds: float = 0.0
    note: str = ""
    budget_seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{k}={_short(v)}" for k, v in self.values.items())
        return f"[{status}] criterion {self.number}: {self.name} ({vals}; {self.seconds:.1f}s)"

    def to_dict(self) -> dict:
        return {
            "criterion": self.number,
            "name": self.name,
            "passed": self.passed,
            "values": self.values,
            "thresholds": self.thresholds,
            "seconds": self.seconds,
            "budget_seconds": self.budget_seconds,
            "note": self.note,
        }


def _short(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _grid1(L, N):
    return make_grid(GridSpec([(L, N)]), Metric())


def _l2(grid, a):
    return float(np.sqrt(np.sum(np.abs(a) ** 2) * grid.cell_volume))


# 1 ----------------------------------------------------------------------------


def identity_suite(grid):
    """Five smooth node-free densities on a 1D grid."""
    x = grid.coords[0]
    L = grid.extents[0]

    def g(mu, var):
        return sum(np.exp(-((x - mu + j * L) ** 2) / (2 * var)) for j in (-1, 0, 1))

    dens = [
        g(0.0, 0.5),
        g(0.7, 1.0),
        g(-1.0, 0.6) + 0.5 * g(1.5, 0.8),
        g(0.0, 2.0) * (1 + 0.3 * np.cos(2 * np.pi * x / L)),
        g(0.3, 0.7) + 1e-3,
    ]
    return [RealField(grid, p / (np.sum(p) * grid.cell_volume)) for p in dens]


def criterion_1(seed=0):
    grid = _grid1(10.0, 256)
    hbar = 1.0
    m = WeightedSum(((hbar**2 / 8, Fisher(grid.metric)),))
    worst = 0.0
    for p in identity_suite(grid):
        Q = quantum_potential(p, grid.metric, hbar).values
        vd = variational_derivative(m, p).values
        worst = max(worst, float(np.max(np.abs(Q - vd)) / np.max(np.abs(Q))))
    return {"max_rel_error": worst}, {"max_rel_error": 1e-6}, worst < 1e-6


# 2 ----------------------------------------------------------------------------


def criterion_2(seed=0):
    omega, L, N, x0 = 0.4, 13.0, 256, 0.5
    grid = _grid1(L, N)
    cfg = ActionConfig(potential=Harmonic((omega,)))
    period = 2 * np.pi / omega
    steps = int(round(period / 1e-3))
    dt = period / steps
    psi0 = gaussian_wave(grid, x0, np.sqrt(1 / (2 * omega)))
    wave = evolve_wave(psi0, cfg, EvolveConfig(dt, steps, record_every=steps))
    hydro = evolve_hydro(wave_to_hydro(psi0), cfg, EvolveConfig(dt, steps, "RK4", record_every=steps))
    dist = _l2(grid, np.abs(wave.final.values) ** 2 - hydro.final.p.values)
    center = moments(wave.final, 0, 1)
    return (
        {"l2_distance": dist, "center_error": abs(center - x0), "dt": dt},
        {"l2_distance": 1e-4},
        dist < 1e-4,
    )


# 3 ----------------------------------------------------------------------------


def criterion_3(seed=0):
    grid = _grid1(40.0, 256)
    var0 = 0.5
    psi0 = gaussian_wave(grid, 0.0, np.sqrt(var0))
    traj = evolve_wave(psi0, ActionConfig(), EvolveConfig(0.01, 200, record_every=10))
    fit = dispersion_fit(traj)
    rel = abs(fit.slope - 0.5) / 0.5
    return (
        {"quadratic_coefficient": fit.slope, "relative_error": rel, "sigma2_0": fit.fit["c0"]},
        {"relative_error": 1e-3},
        rel < 1e-3,
    )


# 4 ----------------------------------------------------------------------------


def criterion_4(seed=0):
    grid = _grid1(10.0, 128)
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.5, 1.5, grid.shape)
    init = RealField(grid, p / (np.sum(p) * grid.cell_volume))
    cfg = ActionConfig(potential=Harmonic((1.0,)))
    state, E = ground_state(cfg, init, tol=1e-9)
    var = moments(state, 0, 2)
    ok = abs(E - 0.5) < 1e-4 and abs(var - 0.5) < 1e-3
    return {"energy": E, "variance": var}, {"energy": 1e-4, "variance": 1e-3}, ok


# 5 ----------------------------------------------------------------------------


def anisotropic_defect(delta, dt=1e-2, duration=1.0):
    grid = make_grid(GridSpec([(6.0, 32), (6.0, 32)]), Metric(1, 2, (1.0,)))
    psi1 = gaussian_wave(grid, [0.75, 0.75], np.sqrt(0.5))
    psi2 = gaussian_wave(grid, [-0.75, -0.75], np.sqrt(0.5))
    m = AnisotropicFisher(((1.0, 0.0), (0.0, 1.0 + delta)))
    steps = int(round(duration / dt))
    return superposition_defect(psi1, psi2, 0.6, 0.8, ActionConfig(measure=m), EvolveConfig(dt, steps, record_every=steps))


def higher_defect(epsilon, L=0.1, dt=5e-4, duration=2.0):
    grid = _grid1(6.0, 64)
    psi1 = gaussian_wave(grid, 1.0, np.sqrt(0.5))
    psi2 = gaussian_wave(grid, -1.0, np.sqrt(0.5))
    m = WeightedSum(((1.0, Fisher(grid.metric)), (1.0, HigherDerivative(epsilon, L, grid.metric))))
    steps = int(round(duration / dt))
    return superposition_defect(psi1, psi2, 0.6, 0.8, ActionConfig(measure=m), EvolveConfig(dt, steps, record_every=steps))


def fisher_defect():
    grid = make_grid(GridSpec([(6.0, 32), (6.0, 32)]), Metric(1, 2, (1.0,)))
    psi1 = gaussian_wave(grid, [0.75, 0.75], np.sqrt(0.5))
    psi2 = gaussian_wave(grid, [-0.75, -0.75], np.sqrt(0.5))
    return superposition_defect(psi1, psi2, 0.6, 0.8, ActionConfig(), EvolveConfig(1e-2, 100, record_every=100))


def criterion_5(seed=0):
    fisher = fisher_defect()
    a1, a2 = anisotropic_defect(0.1), anisotropic_defect(0.05)
    h1, h2 = higher_defect(1e-2), higher_defect(5e-3)
    slope_a = float(np.log(a1 / a2) / np.log(2))
    slope_h = float(np.log(h1 / h2) / np.log(2))
    ok = fisher < 1e-10 and a1 > 1e-4 and h1 > 1e-4 and abs(slope_a - 1) <= 0.1 and abs(slope_h - 1) <= 0.1
    return (
        {
            "fisher_defect": fisher,
            "anisotropic_defect": a1,
            "anisotropic_slope": slope_a,
            "higher_defect": h1,
            "higher_slope": slope_h,
        },
        {"fisher_defect": 1e-10, "nonlinear_defect_min": 1e-4, "slope": "1 +- 0.1"},
        ok,
    )


# 6 ----------------------------------------------------------------------------


def criterion_6(seed=0):
    metric = Metric(1, 2, (1.0,))
    fisher = classify(Fisher(metric), seed=seed, probe=False)
    aniso = classify(AnisotropicFisher(((1.0, 0.0), (0.0, 2.0))), seed=seed, probe=False)
    higher = classify(HigherDerivative(1e-2, 0.1, metric), seed=seed, probe=False)
    fisher_ok = fisher.all_pass and all(
        e.defect < 1e-5 for e in fisher.entries if e.method == "numerical"
    )
    aniso_ok = aniso.failed("numerical") == ["RotationInvariance"] and not aniso.failed("structural")
    sep = higher.entry("Separability")
    signs_ok = all(
        np.sign(c) == np.sign(p) and p > 0
        for c, p in zip(sep.detail["cross_terms"], sep.detail["predicted_cross_terms"])
    )
    higher_ok = (not higher.entry("AHD").passed) and (not sep.passed) and signs_ok
    values = {
        "fisher_max_defect": max(e.defect for e in fisher.entries),
        "anisotropic_failed": aniso.failed(),
        "higher_failed": higher.failed(),
        "cross_term_sign_ok": bool(signs_ok),
    }
    return values, {"numerical_defect": 1e-5}, fisher_ok and aniso_ok and higher_ok


# 7 ----------------------------------------------------------------------------


def criterion_7(seed=0):
    rows = uniqueness_scan(seed=seed)
    mismatches = [
        (r["a"], r["b"], r["c"]) for r in rows if r["all_pass"] != (r["b"] == 0 and r["c"] == 0)
    ]
    bicond = [
        (r["a"], r["b"], r["c"]) for r in rows if not r["report"].linearity["biconditional_holds"]
    ]
    passing = [(r["a"], r["b"], r["c"]) for r in rows if r["all_pass"]]
    return (
        {"members": len(rows), "all_pass_members": passing, "mismatches": mismatches,
         "biconditional_failures": bicond},
        {"mismatches": 0},
        not mismatches and not bicond,
    )


# 8 ----------------------------------------------------------------------------


def criterion_8(seed=0):
    grid = _grid1(10.0, 256)
    cfg = ActionConfig(potential=Harmonic((1.0,)))
    steps = 10_000
    dt = 2 * np.pi / steps
    psi0 = gaussian_wave(grid, 0.5, np.sqrt(0.5))
    traj = evolve_wave(psi0, cfg, EvolveConfig(dt, steps, record_every=100))
    norms = [norm(s) for s in traj.states]
    energies = [energy(s, cfg) for s in traj.states]
    norm_drift = max(abs(n - norms[0]) for n in norms)
    energy_drift = max(abs(e - energies[0]) for e in energies) / abs(energies[0])
    ok = norm_drift < 1e-10 and energy_drift < 1e-6
    return (
        {"norm_drift": norm_drift, "energy_drift": energy_drift, "steps": steps},
        {"norm_drift": 1e-10, "energy_drift": 1e-6},
        ok,
    )


# 9 ----------------------------------------------------------------------------


def boost_commutator(measure=None, points=64, extent=12.0, duration=1.0, dt=1e-2):
    grid = make_grid(GridSpec([(extent, points), (extent, points)]), Metric(1, 2, (1.0,)))
    cfg = ActionConfig(measure=measure)
    v = [2 * np.pi / extent, 0.0]
    psi0 = gaussian_wave(grid, [0.0, 0.0], np.sqrt(1.5))
    steps = int(round(duration / dt))
    ev = EvolveConfig(dt, steps, record_every=steps)
    boosted_first = evolve_wave(apply_boost(psi0, v, 0.0), cfg, ev).final.values
    evolved_first = apply_boost(evolve_wave(psi0, cfg, ev).final, v, duration).values
    return _l2(grid, boosted_first - evolved_first)


def criterion_9(seed=0):
    fisher = boost_commutator()
    fisher_fine = boost_commutator(points=96)
    aniso = boost_commutator(AnisotropicFisher(((1.0, 0.0), (0.0, 1.1))))
    ok = fisher < 1e-8 and fisher_fine < 1e-8 and aniso > 1e-3
    note = (
        "a local, translation-invariant density functional F[p] commutes with boosts, "
        "so the anisotropic commutator stays at discretisation level"
        if aniso <= 1e-3
        else ""
    )
    return (
        {"fisher_commutator": fisher, "fisher_commutator_fine": fisher_fine, "anisotropic_commutator": aniso},
        {"fisher_commutator": 1e-8, "anisotropic_commutator_min": 1e-3},
        ok,
        note,
    )


# 10 ---------------------------------------------------------------------------


def _scenario(steps, path=None):
    doc = {
        "name": "resume",
        "grid": {"axes": [{"extent": 10.0, "points": 128}]},
        "metric": {"N": 1, "d": 1, "masses": [1.0]},
        "action": {"potential": {"kind": "Harmonic", "omega": [1.0]}},
        "initial_state": {"kind": "CoherentState", "x0": [0.5]} if path is None else {"kind": "Checkpoint", "path": str(path)},
        "task": {"kind": "Evolve", "picture": "wave"},
        "evolve": {"dt": 1e-3, "steps": steps, "record_every": steps},
        "outputs": {"formats": ["csv", "json", "checkpoint"]},
    }
    return doc


def criterion_10(seed=0):
    from infoqm import checkpoint as ckpt
    from infoqm.runner import parse_scenario, run

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        full = run(parse_scenario(_scenario(1000)), tmp / "full", seed)
        half = run(parse_scenario(_scenario(500)), tmp / "half", seed)
        mid = tmp / "half" / "checkpoint_00000500.iqm"
        resumed = run(parse_scenario(_scenario(500, mid)), tmp / "resumed", seed)
        a = ckpt.load(tmp / "full" / "checkpoint_00001000.iqm").state.values
        b = ckpt.load(tmp / "resumed" / "checkpoint_00000500.iqm").state.values
        diff = float(np.max(np.abs(a - b)))
        t_resumed = ckpt.load(tmp / "resumed" / "checkpoint_00000500.iqm").time
        rerun = run(parse_scenario(_scenario(1000)), tmp / "rerun", seed)
        same_csv = (tmp / "full" / "timeseries.csv").read_bytes() == (tmp / "rerun" / "timeseries.csv").read_bytes()
        same_json = (tmp / "full" / "summary.json").read_bytes() == (tmp / "rerun" / "summary.json").read_bytes()
        errors = [r.error for r in (full, half, resumed, rerun) if r.error]
    ok = diff < 1e-12 and same_csv and same_json and not errors and abs(t_resumed - 1.0) < 1e-12
    return (
        {"resume_max_diff": diff, "identical_csv": same_csv, "identical_summary": same_json},
        {"resume_max_diff": 1e-12},
        ok,
    )


CRITERIA = {
    1: ("quantum-potential identity", criterion_1, 1),
    2: ("wave/hydrodynamic picture equivalence", criterion_2, 10),
    3: ("free-packet dispersion", criterion_3, 5),
    4: ("harmonic ground state", criterion_4, 10),
    5: ("linearity biconditional", criterion_5, 60),
    6: ("axiom classification", criterion_6, 30),
    7: ("family-relative uniqueness", criterion_7, 300),
    8: ("norm and energy conservation", criterion_8, 30),
    9: ("Galilean covariance", criterion_9, 30),
    10: ("determinism and resume", criterion_10, 10),
}


def run_criterion(number: int, seed: int = 0) -> CriterionResult:
    name, fn, budget = CRITERIA[number]
    start = time.perf_counter()
    out = fn(seed)
    values, thresholds, passed = out[:3]
    note = out[3] if len(out) > 3 else ""
    return CriterionResult(number, name, bool(passed), values, thresholds, time.perf_counter() - start, note, budget)


def run_all(seed: int = 0, numbers=None) -> list:
    return [run_criterion(n, seed) for n in (numbers or sorted(CRITERIA))]
