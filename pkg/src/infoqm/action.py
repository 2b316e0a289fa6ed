"""Constrained ensemble action, its stationarity residuals and the quantum potential."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from infoqm.errors import ScenarioError
from infoqm.grid import Grid, Metric, RealField
from infoqm.measures import (
    DENSITY_FLOOR,
    Fisher,
    LogDensity,
    MeasureSpec,
    check_density,
    decompose,
    form_derivative,
    form_value,
    measure_from_dict,
    measure_to_dict,
)

NORM_TOL = 1e-8


# -- potentials -------------------------------------------------------------


class Potential:
    kind = "abstract"

    def sample(self, grid: Grid) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroPotential(Potential):
    kind = "Zero"

    def sample(self, grid):
        return np.zeros(grid.shape)

    def to_dict(self):
        return {"kind": "Zero"}


@dataclass(frozen=True)
class Harmonic(Potential):
    """``V = Σ_i ½ m_(i) ω_i² x_i²`` on the centred periodic box."""

    omega: tuple = (1.0,)
    kind = "Harmonic"

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omega, dtype=float))
        if np.any(om < 0) or not np.all(np.isfinite(om)):
            raise ScenarioError("Harmonic.omega must be finite and non-negative")
        object.__setattr__(self, "omega", tuple(om.tolist()))

    def omega_for(self, naxes: int) -> np.ndarray:
        if len(self.omega) == 1:
            return np.full(naxes, self.omega[0])
        if len(self.omega) != naxes:
            raise ScenarioError(f"Harmonic.omega has {len(self.omega)} entries for {naxes} axes")
        return np.array(self.omega)

    def sample(self, grid):
        om = self.omega_for(grid.ndim)
        V = np.zeros(grid.shape)
        for a in range(grid.ndim):
            V = V + 0.5 * grid.metric.axis_mass(a) * om[a] ** 2 * grid.mesh(a) ** 2
        return V

    def to_dict(self):
        return {"kind": "Harmonic", "omega": list(self.omega)}


@dataclass(frozen=True)
class DoubleWell(Potential):
    """``V = Σ_i b (x_i² - a²)²``."""

    a: float = 1.0
    b: float = 1.0
    kind = "DoubleWell"

    def sample(self, grid):
        V = np.zeros(grid.shape)
        for ax in range(grid.ndim):
            V = V + self.b * (grid.mesh(ax) ** 2 - self.a**2) ** 2
        return V

    def to_dict(self):
        return {"kind": "DoubleWell", "a": self.a, "b": self.b}


@dataclass(frozen=True, eq=False)
class Sampled(Potential):
    values: np.ndarray = None
    kind = "Sampled"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ScenarioError("Sampled potential has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def sample(self, grid):
        if self.values.shape != grid.shape:
            raise ScenarioError(f"sampled potential shape {self.values.shape} != grid {grid.shape}")
        return self.values

    def to_dict(self):
        return {"kind": "Sampled", "values": self.values.tolist()}


def potential_from_dict(data: dict) -> Potential:
    kind = data.get("kind")
    if kind == "Zero":
        return ZeroPotential()
    if kind == "Harmonic":
        return Harmonic(tuple(np.atleast_1d(data.get("omega", 1.0))))
    if kind == "DoubleWell":
        return DoubleWell(float(data.get("a", 1.0)), float(data.get("b", 1.0)))
    if kind == "Sampled":
        return Sampled(np.array(data["values"], dtype=float))
    raise ScenarioError(f"potential.kind: unknown potential {kind!r}")


# -- configuration and state ------------------------------------------------


@dataclass(frozen=True)
class ActionConfig:
    """ħ, the multiplier λ (default ħ²/8), the information measure and the potential.

    ``measure=None`` means Fisher information with the grid's own metric.
    """

    hbar: float = 1.0
    lam: Optional[float] = None
    measure: Optional[MeasureSpec] = None
    potential: Potential = field(default_factory=ZeroPotential)

    def __post_init__(self):
        if not self.hbar > 0:
            raise ScenarioError("hbar must be positive")
        if self.lam is None:
            object.__setattr__(self, "lam", self.hbar**2 / 8)
        if not self.lam >= 0:
            raise ScenarioError("lambda must be non-negative")

    def measure_for(self, grid: Grid) -> MeasureSpec:
        m = self.measure if self.measure is not None else Fisher(grid.metric)
        if m.naxes != grid.ndim:
            raise ScenarioError(f"measure acts on {m.naxes} axes but grid has {grid.ndim}")
        return m

    def excess_form(self, grid: Grid, reference: Optional[float] = None):
        """``λI - c I_F`` as ``(M, higher)``, or ``None`` when it vanishes identically.

        With the default ``c = ħ²/8`` this is the part of the measure that the linear
        kinetic operator does not already account for; its derivative is the real
        nonlinear potential ``F(p)``.
        """
        c = self.hbar**2 / 8 if reference is None else reference
        M, higher = decompose(self.measure_for(grid))
        M = self.lam * M - c * grid.metric.matrix()
        higher = [(self.lam * w, h) for w, h in higher if self.lam * w * h.coupling != 0]
        scale = self.hbar**2 / 8 * np.max(grid.g)
        M[np.abs(M) <= 1e-14 * scale] = 0.0
        if not M.any() and not higher:
            return None
        return M, higher

    def is_linear(self, grid: Grid) -> bool:
        return self.excess_form(grid) is None

    def with_measure(self, measure) -> "ActionConfig":
        return ActionConfig(self.hbar, self.lam, measure, self.potential)

    def to_dict(self) -> dict:
        return {
            "hbar": self.hbar,
            "lambda": self.lam,
            "measure": None if self.measure is None else measure_to_dict(self.measure),
            "potential": self.potential.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict, metric: Optional[Metric] = None) -> "ActionConfig":
        measure = data.get("measure")
        return cls(
            hbar=float(data.get("hbar", 1.0)),
            lam=None if data.get("lambda") is None else float(data["lambda"]),
            measure=None if measure is None else measure_from_dict(measure, metric),
            potential=potential_from_dict(data.get("potential", {"kind": "Zero"})),
        )


@dataclass(frozen=True)
class HydroState:
    """Density ``p`` and phase ``S``.

    ``S`` is stored as a periodic part plus constant per-axis gradients ``S_slope`` so
    that states with phase winding (plane waves) stay single-valued on the torus.
    """

    p: RealField
    S: RealField
    S_slope: tuple = ()
    check_norm: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.p.grid != self.S.grid:
            raise ScenarioError("p and S live on different grids")
        slope = tuple(float(s) for s in self.S_slope) or (0.0,) * self.p.grid.ndim
        if len(slope) != self.p.grid.ndim:
            raise ScenarioError("S_slope needs one entry per axis")
        object.__setattr__(self, "S_slope", slope)
        if np.any(self.p.values < 0):
            raise ScenarioError("density has negative values")
        if self.check_norm:
            total = np.sum(self.p.values) * self.p.grid.cell_volume
            if abs(total - 1) > NORM_TOL:
                raise ScenarioError(f"density is not normalised (integral {total:.12g})")

    @property
    def grid(self) -> Grid:
        return self.p.grid

    def phase_total(self) -> np.ndarray:
        """``S`` including its linear part, as a plain array (multivalued across the wrap)."""
        out = np.array(self.S.values)
        for a, s in enumerate(self.S_slope):
            if s:
                out = out + s * self.grid.mesh(a)
        return out

    def grad_S(self) -> list:
        grid = self.grid
        d = grid.spectral_derivatives(self.S.values, [(a,) for a in range(grid.ndim)])
        return [d[a] + self.S_slope[a] for a in range(grid.ndim)]


# -- residuals --------------------------------------------------------------


def measure_derivative(cfg: ActionConfig, p: RealField, floor: float = DENSITY_FLOOR) -> np.ndarray:
    """``δ(λI)/δp`` for the configured measure."""
    ld = LogDensity.from_density(p.grid, p.values, floor)
    M, higher = decompose(cfg.measure_for(p.grid))
    return cfg.lam * form_derivative(ld, M, higher)


def measure_value(cfg: ActionConfig, p: RealField, floor: float = DENSITY_FLOOR) -> float:
    ld = LogDensity.from_density(p.grid, p.values, floor)
    M, higher = decompose(cfg.measure_for(p.grid))
    return cfg.lam * form_value(ld, M, higher)


def hj_residual(state: HydroState, S_dot: RealField, cfg: ActionConfig) -> RealField:
    """``Ṡ + ½ g_ij ∂_iS ∂_jS + V + δ(λI)/δp``."""
    grid = state.grid
    dS = state.grad_S()
    kinetic = 0.5 * sum(grid.g[a] * dS[a] ** 2 for a in range(grid.ndim))
    V = cfg.potential.sample(grid)
    if cfg.lam == 0:
        check_density(state.p.values)
        info = 0.0
    else:
        info = measure_derivative(cfg, state.p)
    return RealField(grid, np.asarray(S_dot.values) + kinetic + V + info)


def continuity_residual(state: HydroState, p_dot: RealField, metric: Optional[Metric] = None) -> RealField:
    """``ṗ + g_ij ∂_i(p ∂_j S)``."""
    grid = state.grid
    g = grid.g if metric is None else metric.inverse_masses
    dS = state.grad_S()
    p = state.p.values
    flux = grid.spectral_derivatives
    div = sum(g[a] * flux(p * dS[a], [(a,)])[0] for a in range(grid.ndim))
    return RealField(grid, np.asarray(p_dot.values) + div)


def quantum_potential(p: RealField, metric: Optional[Metric] = None, hbar: float = 1.0) -> RealField:
    """``Q = -(ħ²/2) g_ij ∂_i∂_j √p / √p``, computed directly from ``√p``."""
    check_density(p.values)
    grid = p.grid
    g = grid.g if metric is None else metric.inverse_masses
    amp = np.sqrt(p.values)
    d2 = grid.spectral_derivatives(amp, [(a, a) for a in range(grid.ndim)])
    lap = sum(g[a] * d2[a] for a in range(grid.ndim))
    return RealField(grid, -0.5 * hbar**2 * lap / amp)


# -- action -----------------------------------------------------------------


def evaluate_action(history: Sequence[HydroState], dt: float, cfg: ActionConfig) -> float:
    """``Φ = ∫dt ∫ p[Ṡ + ½ g ∂S∂S + V] + λ ∫dt I[p]`` on a uniformly sampled history.

    ``Ṡ`` uses centred differences (one-sided second order at the ends) and the time
    integral uses the trapezoid rule.
    """
    if len(history) < 3:
        raise ScenarioError("evaluate_action needs at least 3 time samples")
    if not dt > 0:
        raise ScenarioError("dt must be positive")
    grid = history[0].grid
    S = np.stack([h.phase_total() for h in history])
    S_dot = np.gradient(S, dt, axis=0, edge_order=2)
    V = cfg.potential.sample(grid)
    dens = []
    for n, h in enumerate(history):
        dS = h.grad_S()
        kinetic = 0.5 * sum(grid.g[a] * dS[a] ** 2 for a in range(grid.ndim))
        p = h.p.values
        classical = np.sum(p * (S_dot[n] + kinetic + V)) * grid.cell_volume
        info = measure_value(cfg, h.p) if cfg.lam else 0.0
        dens.append(classical + info)
    return float(np.trapezoid(dens, dx=dt))
