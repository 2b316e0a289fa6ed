"""Time evolution in the wave and hydrodynamic pictures, ground states and boosts.

Wave picture: ``iħψ̇ = [-(ħ²/2) g∂∂ + V + F(p)]ψ`` with ``F = δ(λI - (ħ²/8)I_F)/δp``,
so ``F`` vanishes identically for Fisher information at ``λ = ħ²/8``.
Hydrodynamic picture: RK4 on ``(ln p, S)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from infoqm.action import ActionConfig, HydroState
from infoqm.errors import DensityFloorError, NonConvergenceError, ScenarioError
from infoqm.grid import ComplexField, Grid, RealField
from infoqm.measures import (
    DENSITY_FLOOR,
    LogDensity,
    check_density,
    decompose,
    form_derivative,
    form_value,
)

log = logging.getLogger(__name__)

INTEGRATORS = ("SplitStep", "RK4")
MAX_HALVINGS = 6


@dataclass(frozen=True)
class EvolveConfig:
    dt: float
    steps: int
    integrator: str = "SplitStep"
    record_every: int = 1
    # Spectral filter applied after each hydrodynamic step; keeps the log-density
    # tails from accumulating aliasing noise.
    hydro_filter: bool = True

    def __post_init__(self):
        errors = []
        if not (np.isfinite(self.dt) and self.dt > 0):
            errors.append(f"evolve.dt must be positive, got {self.dt}")
        if int(self.steps) != self.steps or self.steps < 0:
            errors.append(f"evolve.steps must be a non-negative integer, got {self.steps}")
        if self.integrator not in INTEGRATORS:
            errors.append(f"evolve.integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            errors.append(f"evolve.record_every must be a positive integer, got {self.record_every}")
        if errors:
            raise ScenarioError(errors)

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "steps": self.steps,
            "integrator": self.integrator,
            "record_every": self.record_every,
            "hydro_filter": self.hydro_filter,
        }


@dataclass
class Trajectory:
    times: list
    states: list
    meta: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.states[-1]

    def __len__(self):
        return len(self.states)


# -- wave picture -----------------------------------------------------------


def nonlinear_potential(
    cfg: ActionConfig, grid: Grid, p: np.ndarray, floor: float = DENSITY_FLOOR, reference=None
):
    """Real potential ``F(p)``; ``None`` when the configured measure gives linear evolution."""
    form = cfg.excess_form(grid, reference)
    if form is None:
        return None
    ld = LogDensity.from_density(grid, p, floor)
    return form_derivative(ld, *form)


def excess_energy(cfg: ActionConfig, grid: Grid, p: np.ndarray) -> float:
    form = cfg.excess_form(grid)
    if form is None:
        return 0.0
    return form_value(LogDensity.from_density(grid, p), *form)


def _stiffness(cfg: ActionConfig, grid: Grid) -> float:
    """Rough top frequency of the linearised ``F`` acting on density ripples at the grid cutoff."""
    form = cfg.excess_form(grid)
    if form is None:
        return 0.0
    M, higher = form
    k = np.max(grid.k_max)
    g = np.max(grid.g)
    quad = 2 * np.max(np.abs(M)) * k**2
    quartic = 2 * sum(abs(w) * h.coupling for w, h in higher) * g**2 * k**4
    return float(k * np.sqrt(g * (quad + quartic)) / cfg.hbar)


def _check_norm(psi: np.ndarray, grid: Grid):
    total = np.sum(np.abs(psi) ** 2) * grid.cell_volume
    if abs(total - 1) > 1e-8:
        raise ScenarioError(f"initial wavefunction not normalised (norm {total:.12g})")


def _kinetic_propagator(grid: Grid, hbar: float, dt: float) -> np.ndarray:
    return np.exp(-0.5j * hbar * dt * grid.k_squared())


def _split_substeps(cfg: ActionConfig, grid: Grid, psi: np.ndarray, dt: float) -> int:
    """Number of substeps so the nonlinear phase per half-step stays resolved."""
    F = nonlinear_potential(cfg, grid, np.abs(psi) ** 2)
    if F is None:
        return 1
    omega = max(np.max(np.abs(F)) / cfg.hbar, _stiffness(cfg, grid))
    sub = 1
    while omega * dt / sub > 0.5 and sub < 2**MAX_HALVINGS:
        sub *= 2
    if sub > 1:
        warnings.warn(
            f"dt={dt:g} under-resolves the nonlinear potential (rate {omega:.3g}); "
            f"using {sub} substeps per step",
            RuntimeWarning,
            stacklevel=3,
        )
    return sub


def evolve_wave(
    psi0: ComplexField,
    cfg: ActionConfig,
    ev: EvolveConfig,
    t0: float = 0.0,
    check_norm: bool = True,
    callback=None,
) -> Trajectory:
    """Strang split-step evolution.

    Each step: half potential phase with ``V + F(p)`` (``p`` frozen over the half step),
    exact kinetic step in Fourier space, half potential phase.
    """
    if ev.integrator != "SplitStep":
        raise ScenarioError("evolve_wave supports only the SplitStep integrator")
    grid = psi0.grid
    if check_norm:
        _check_norm(psi0.values, grid)
    V = cfg.potential.sample(grid)
    psi = np.array(psi0.values, dtype=complex)
    linear = cfg.is_linear(grid)
    sub = 1 if linear or ev.steps == 0 else _split_substeps(cfg, grid, psi, ev.dt)
    h = ev.dt / sub
    kinetic = _kinetic_propagator(grid, cfg.hbar, h)
    half_V = np.exp(-0.5j * h * V / cfg.hbar)

    def half_potential(psi, t):
        if linear:
            return psi * half_V
        try:
            F = nonlinear_potential(cfg, grid, np.abs(psi) ** 2)
        except DensityFloorError as exc:
            raise DensityFloorError(
                f"node under nonlinear measure at t={t:.6g}: {exc}", site=exc.site, time=t
            ) from None
        return psi * half_V * np.exp(-0.5j * h * F / cfg.hbar)

    times, states = [t0], [ComplexField(grid, psi)]
    if callback:
        callback(0, t0, states[-1])
    for n in range(1, ev.steps + 1):
        for s in range(sub):
            t = t0 + ((n - 1) * sub + s) * h
            psi = half_potential(psi, t)
            psi = np.fft.ifftn(kinetic * np.fft.fftn(psi))
            psi = half_potential(psi, t + h)
        if n % ev.record_every == 0:
            times.append(t0 + n * ev.dt)
            states.append(ComplexField(grid, psi))
            if callback:
                callback(n, times[-1], states[-1])
    meta = {
        "picture": "wave",
        "integrator": "SplitStep",
        "dt": ev.dt,
        "substeps": sub,
        "potential": cfg.potential.kind,
        "linear": linear,
    }
    return Trajectory(times, states, meta)


# -- hydrodynamic picture ---------------------------------------------------


def _hydro_rhs(R, S, slope, cfg, grid, V, form_M, higher):
    n = grid.ndim
    ld = LogDensity(grid, R)
    dS_all = grid.spectral_derivatives(S, [(a,) for a in range(n)] + [(a, a) for a in range(n)])
    dS = [dS_all[a] + slope[a] for a in range(n)]
    R_dot = -sum(grid.g[a] * (ld.d1[a] * dS[a] + dS_all[n + a]) for a in range(n))
    info = cfg.lam * form_derivative(ld, form_M, higher) if cfg.lam else 0.0
    S_dot = -(0.5 * sum(grid.g[a] * dS[a] ** 2 for a in range(n)) + V + info)
    return R_dot, S_dot


def evolve_hydro(
    state0: HydroState,
    cfg: ActionConfig,
    ev: EvolveConfig,
    t0: float = 0.0,
    floor: float = DENSITY_FLOOR,
    callback=None,
) -> Trajectory:
    """Integrate ``ṗ = -g∂(p∂S)``, ``Ṡ = -[½g∂S∂S + V + δ(λI)/δp]`` with classical RK4.

    The density is carried as ``R = ln p`` and renormalised after every step (only
    derivatives of ``R`` enter the right-hand side). A floor breach aborts with the time.
    """
    if ev.integrator != "RK4":
        raise ScenarioError("evolve_hydro supports only the RK4 integrator")
    grid = state0.grid
    check_density(state0.p.values, floor)
    V = cfg.potential.sample(grid)
    M, higher = decompose(cfg.measure_for(grid))
    slope = state0.S_slope
    R = np.log(state0.p.values)
    S = np.array(state0.S.values, dtype=float)
    dt = ev.dt
    log_floor = np.log(floor)

    def rhs(R, S):
        return _hydro_rhs(R, S, slope, cfg, grid, V, M, higher)

    def to_state(R, S):
        p = np.exp(R)
        return HydroState(RealField(grid, p), RealField(grid, S), slope)

    times, states = [t0], [state0]
    if callback:
        callback(0, t0, state0)
    for n in range(1, ev.steps + 1):
        k1R, k1S = rhs(R, S)
        k2R, k2S = rhs(R + 0.5 * dt * k1R, S + 0.5 * dt * k1S)
        k3R, k3S = rhs(R + 0.5 * dt * k2R, S + 0.5 * dt * k2S)
        k4R, k4S = rhs(R + dt * k3R, S + dt * k3S)
        R = R + dt / 6 * (k1R + 2 * k2R + 2 * k3R + k4R)
        S = S + dt / 6 * (k1S + 2 * k2S + 2 * k3S + k4S)
        if ev.hydro_filter:
            R = grid.filter(R)
            S = grid.filter(S)
        t = t0 + n * dt
        if not np.all(np.isfinite(R)) or np.min(R) - np.max(R) < log_floor:
            bad = ~np.isfinite(R) | (R - np.nanmax(R) < log_floor)
            site = tuple(int(i) for i in np.argwhere(bad)[0])
            raise DensityFloorError(f"density floor breached at t={t:.6g}, site {site}", site, t)
        R = R - np.log(np.sum(np.exp(R)) * grid.cell_volume)
        if n % ev.record_every == 0:
            times.append(t)
            states.append(to_state(R, S))
            if callback:
                callback(n, t, states[-1])
    meta = {"picture": "hydro", "integrator": "RK4", "dt": dt, "potential": cfg.potential.kind}
    return Trajectory(times, states, meta)


# -- picture conversion -----------------------------------------------------


def _unwrap_nd(phase: np.ndarray) -> np.ndarray:
    """Path-integrated unwrap: along the last axis, lines anchored by the unwrapped first column."""
    if phase.ndim == 1:
        return np.unwrap(phase)
    lines = np.unwrap(phase, axis=-1)
    first = _unwrap_nd(lines[..., 0])
    return lines + (first - lines[..., 0])[..., None]


def winding_numbers(psi: np.ndarray) -> list:
    """Net phase winding of ``psi`` around each periodic axis (taken along the first line)."""
    out = []
    for a in range(psi.ndim):
        line = psi[tuple(slice(None) if b == a else 0 for b in range(psi.ndim))]
        steps = np.angle(np.roll(line, -1) / line)
        out.append(int(np.rint(np.sum(steps) / (2 * np.pi))))
    return out


def wave_to_hydro(psi: ComplexField, hbar: float = 1.0, floor: float = DENSITY_FLOOR) -> HydroState:
    """``p = |ψ|²`` and ``S = ħ·phase``; winding goes into ``S_slope``."""
    grid = psi.grid
    p = np.abs(psi.values) ** 2
    try:
        check_density(p, floor)
    except DensityFloorError as exc:
        raise DensityFloorError(f"wavefunction has a node: {exc}", site=exc.site) from None
    wind = winding_numbers(psi.values)
    k = [2 * np.pi * n / L for n, L in zip(wind, grid.extents)]
    carrier = np.ones(grid.shape, dtype=complex)
    for a, ka in enumerate(k):
        if ka:
            carrier = carrier * np.exp(-1j * ka * grid.mesh(a))
    theta = _unwrap_nd(np.angle(psi.values * carrier))
    return HydroState(
        RealField(grid, p),
        RealField(grid, hbar * theta),
        tuple(hbar * ka for ka in k),
        check_norm=False,
    )


def hydro_to_wave(state: HydroState, hbar: float = 1.0) -> ComplexField:
    grid = state.grid
    return ComplexField(grid, np.sqrt(state.p.values) * np.exp(1j * state.phase_total() / hbar))


# -- ground state -----------------------------------------------------------


@dataclass
class GroundStateInfo:
    energy: float
    mu: float
    residual: float
    iterations: int


def ground_state(
    cfg: ActionConfig,
    init: RealField,
    tol: float = 1e-9,
    max_iter: int = 20000,
    step: float = 1.0,
    floor: float = DENSITY_FLOOR,
    info: Optional[list] = None,
):
    """Minimise ``E[p] = ∫pV + λI[p]`` at fixed ``∫p = 1`` by normalised gradient flow.

    The flow runs on ``φ = √p`` (so ``δE/δp - μ`` becomes ``(H - μ)φ`` with
    ``H = -4λ g∂∂ + V + F`` where ``F`` is the derivative of ``λ(I - I_F)``) and
    treats the kinetic part implicitly with a constant
    stabiliser; the step is halved whenever ``E`` increases. Converged when
    ``max|Hφ - μφ| < tol``. Returns ``(HydroState, E)``.
    """
    grid = init.grid
    vals = np.asarray(init.values, dtype=float)
    if np.any(vals <= 0):
        raise ScenarioError("ground_state needs a strictly positive initial density")
    V = cfg.potential.sample(grid)
    ksq = grid.k_squared()
    kin = 4 * cfg.lam * ksq
    # Leading part of the higher-derivative force on φ is ~ 4λ c g² ∂⁴φ; it is added
    # implicitly and subtracted explicitly so the step is not limited by k⁴ stiffness.
    _, higher = decompose(cfg.measure_for(grid))
    quartic = 4 * cfg.lam * sum(abs(w) * h.coupling for w, h in higher) * ksq**2
    dv = grid.cell_volume

    def normalise(phi):
        return phi / np.sqrt(np.sum(phi**2) * dv)

    excess = cfg.excess_form(grid, reference=cfg.lam)

    def parts(phi):
        # iterates only need a floor check when the excess form needs ln p
        p = phi**2
        Kphi = np.fft.ifftn(kin * np.fft.fftn(phi)).real
        E = np.sum(phi * Kphi + p * V) * dv
        W = V
        if excess is not None:
            ld = LogDensity.from_density(grid, p, floor)
            W = V + form_derivative(ld, *excess)
            E += form_value(ld, *excess)
        Hphi = Kphi + W * phi
        mu = np.sum(phi * Hphi) * dv
        return W, Hphi, mu, E

    phi = normalise(np.sqrt(vals))
    W, Hphi, mu, E = parts(phi)
    eta = step
    residual = np.inf
    for it in range(1, max_iter + 1):
        residual = float(np.max(np.abs(Hphi - mu * phi)))
        if residual < tol:
            break
        alpha = 0.5 * (np.max(W) + np.min(W))
        while True:
            rhs = np.fft.fftn(phi - eta * (W - mu - alpha) * phi) + eta * quartic * np.fft.fftn(phi)
            cand = np.fft.ifftn(rhs / (1 + eta * (kin + quartic + alpha))).real
            cand = normalise(cand)
            try:
                Wc, Hc, muc, Ec = parts(cand)
            except DensityFloorError as exc:
                raise DensityFloorError(
                    f"ground-state flow hit the density floor after {it} iterations: {exc}",
                    site=exc.site,
                ) from None
            if Ec <= E + 1e-14 * abs(E) or eta < 1e-8:
                break
            eta *= 0.5
        phi, W, Hphi, mu, E = cand, Wc, Hc, muc, Ec
        eta = min(step, eta * 1.25)
    else:
        # a flow that ran out of iterations while collapsing is reported as the collapse
        try:
            check_density(phi**2, floor)
        except DensityFloorError as exc:
            raise DensityFloorError(
                f"ground-state flow collapsed within {max_iter} iterations: {exc}", site=exc.site
            ) from None
        raise NonConvergenceError(
            f"ground state did not converge in {max_iter} iterations (residual {residual:.3g})",
            residual=residual,
            iterations=max_iter,
        )
    if info is not None:
        info.append(GroundStateInfo(float(E), float(mu), residual, it))
    p = phi**2
    p = p / (np.sum(p) * dv)
    try:
        check_density(p, floor)
    except DensityFloorError as exc:
        raise DensityFloorError(f"ground-state flow collapsed: {exc}", site=exc.site) from None
    state = HydroState(RealField(grid, p), RealField(grid, np.zeros(grid.shape)))
    return state, float(E)


# -- Galilean boost ---------------------------------------------------------


def apply_boost(
    psi: ComplexField,
    v: Sequence[float],
    t: float = 0.0,
    masses: Optional[Sequence[float]] = None,
    hbar: float = 1.0,
    wrap_tol: float = 1e-8,
) -> ComplexField:
    """``ψ(x - vt) exp(i(m v·x - ½ m v² t)/ħ)``, translation done spectrally.

    ``masses`` are per axis (defaults to the grid metric). Warns when the boost phase
    does not fit the periodic box or when the shifted support reaches the box edge.
    """
    grid = psi.grid
    v = np.broadcast_to(np.asarray(v, dtype=float), (grid.ndim,))
    m = (
        np.array([grid.metric.axis_mass(a) for a in range(grid.ndim)])
        if masses is None
        else np.broadcast_to(np.asarray(masses, dtype=float), (grid.ndim,))
    )
    if not np.any(v):
        return psi
    shifted = grid.translate(psi.values, v * t) if t else np.array(psi.values)
    phase = np.zeros(grid.shape)
    for a in range(grid.ndim):
        turns = m[a] * v[a] * grid.extents[a] / (2 * np.pi * hbar)
        if abs(turns - np.rint(turns)) > 1e-9:
            warnings.warn(
                f"boost velocity on axis {a} is not commensurate with the box "
                f"(m v L / 2πħ = {turns:.6g}); phase is discontinuous at the wrap",
                RuntimeWarning,
                stacklevel=2,
            )
        phase = phase + m[a] * v[a] * grid.mesh(a) - 0.5 * m[a] * v[a] ** 2 * t
    out = shifted * np.exp(1j * phase / hbar)
    dens = np.abs(out) ** 2
    edge = 0.0
    for a in range(grid.ndim):
        edge = max(edge, np.max(np.take(dens, [0, -1], axis=a)))
    if edge > wrap_tol * np.max(dens):
        warnings.warn(
            f"boosted support reaches the box edge (edge/max = {edge / np.max(dens):.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
    return ComplexField(grid, out)
