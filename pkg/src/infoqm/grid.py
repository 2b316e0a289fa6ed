"""Periodic lattices over flattened configuration space.

A :class:`Grid` pairs a :class:`GridSpec` (one periodic axis per
configuration-space coordinate) with a :class:`Metric` (particle count,
dimension and masses). Fields are thin immutable wrappers around numpy
arrays sampled on the grid. Coordinates are centred: axis ``a`` samples
``x_j = -extent/2 + j * extent/points``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from infoqm.errors import GridError

MAX_DERIVATIVE_ORDER = 4


@dataclass(frozen=True)
class GridSpec:
    """Axes as ``(extent, points)`` pairs; every axis is periodic."""

    axes: tuple

    def __post_init__(self):
        axes = tuple((float(e), int(n)) for e, n in self.axes)
        object.__setattr__(self, "axes", axes)
        problems = []
        for a, (extent, points) in enumerate(axes):
            if not extent > 0:
                problems.append(f"axis {a}: extent must be positive, got {extent}")
            if points < 8 or points % 2:
                problems.append(f"axis {a}: points must be even and >= 8, got {points}")
        if not axes:
            problems.append("grid needs at least one axis")
        if problems:
            raise GridError(problems)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(n for _, n in self.axes)

    def to_dict(self) -> dict:
        return {"axes": [{"extent": e, "points": n} for e, n in self.axes]}

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(tuple((ax["extent"], ax["points"]) for ax in data["axes"]))


@dataclass(frozen=True)
class Metric:
    """Configuration-space metric ``g_ij = delta_ij / m_(i)``."""

    N: int = 1
    d: int = 1
    masses: tuple = (1.0,)

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        object.__setattr__(self, "masses", masses)
        problems = []
        if self.N < 1 or self.d < 1:
            problems.append(f"N and d must be >= 1, got N={self.N}, d={self.d}")
        if len(masses) != self.N:
            problems.append(f"masses: expected {self.N} entries (one per particle), got {len(masses)}")
        if any(not m > 0 for m in masses):
            problems.append("masses: all masses must be positive")
        if problems:
            raise GridError(problems)

    @property
    def naxes(self) -> int:
        return self.N * self.d

    def axis_mass(self, i: int) -> float:
        """Mass of the particle owning zero-based axis ``i``."""
        return self.masses[i // self.d]

    @property
    def inverse_masses(self) -> np.ndarray:
        return np.array([1.0 / self.axis_mass(i) for i in range(self.naxes)])

    def matrix(self) -> np.ndarray:
        return np.diag(self.inverse_masses)

    def restrict(self, axes: Sequence[int]) -> "Metric":
        """Metric over a subset of axes, treated as one particle per axis."""
        return Metric(N=len(axes), d=1, masses=tuple(self.axis_mass(i) for i in axes))

    def to_dict(self) -> dict:
        return {"N": self.N, "d": self.d, "masses": list(self.masses)}

    @classmethod
    def from_dict(cls, data: dict) -> "Metric":
        return cls(int(data["N"]), int(data["d"]), tuple(data["masses"]))


class Grid:
    """Uniform periodic lattice with cached wavenumbers."""

    def __init__(self, spec: GridSpec, metric: Metric):
        if spec.ndim != metric.naxes:
            raise GridError(
                f"grid has {spec.ndim} axes but metric declares N*d = {metric.naxes}"
            )
        self.spec = spec
        self.metric = metric
        self.shape = spec.shape
        self.ndim = spec.ndim
        self.extents = np.array([e for e, _ in spec.axes])
        self.spacing = np.array([e / n for e, n in spec.axes])
        self.cell_volume = float(np.prod(self.spacing))
        self.g = metric.inverse_masses
        self.coords = [-e / 2 + np.arange(n) * (e / n) for e, n in spec.axes]
        self.k = [2 * np.pi * np.fft.fftfreq(n, e / n) for e, n in spec.axes]
        self.k_rfft = list(self.k[:-1]) + [
            2 * np.pi * np.fft.rfftfreq(self.shape[-1], self.spacing[-1])
        ]
        self.k_max = np.pi / self.spacing
        self._symbol_cache = {}
        self._axes = tuple(range(len(self.shape)))

    def __repr__(self):
        return f"Grid(shape={self.shape}, extents={tuple(self.extents)}, metric={self.metric})"

    def __eq__(self, other):
        return isinstance(other, Grid) and self.spec == other.spec and self.metric == other.metric

    def __hash__(self):
        return hash((self.spec, self.metric))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def mesh(self, axis: int) -> np.ndarray:
        """Coordinate of ``axis`` broadcastable against field arrays."""
        shape = [1] * self.ndim
        shape[axis] = self.shape[axis]
        return self.coords[axis].reshape(shape)

    def wavenumber(self, axis: int, real: bool = False) -> np.ndarray:
        ks = self.k_rfft if real else self.k
        shape = [1] * self.ndim
        shape[axis] = ks[axis].size
        return ks[axis].reshape(shape)

    def k_squared(self, real: bool = False) -> np.ndarray:
        """Metric-weighted ``g_ij k_i k_j`` on the transform lattice."""
        key = ("k2", real)
        if key not in self._symbol_cache:
            self._symbol_cache[key] = sum(
                self.g[a] * self.wavenumber(a, real) ** 2 for a in range(self.ndim)
            )
        return self._symbol_cache[key]

    def hash(self) -> str:
        payload = json.dumps(
            {"grid": self.spec.to_dict(), "metric": self.metric.to_dict()}, sort_keys=True
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    # -- spectral machinery -------------------------------------------------

    def _orders(self, multi_index: Sequence[int]) -> tuple:
        orders = [0] * self.ndim
        for a in multi_index:
            if not 0 <= a < self.ndim:
                raise GridError(f"axis index {a} out of range for {self.ndim}-axis grid")
            orders[a] += 1
        if sum(orders) > MAX_DERIVATIVE_ORDER:
            raise GridError(f"derivative order {sum(orders)} exceeds {MAX_DERIVATIVE_ORDER}")
        return tuple(orders)

    def symbol(self, orders: tuple, real: bool) -> np.ndarray:
        key = (orders, real)
        if key not in self._symbol_cache:
            sym = np.ones((1,) * self.ndim, dtype=complex)
            for a, n in enumerate(orders):
                if n == 0:
                    continue
                k = self.wavenumber(a, real).astype(complex)
                factor = (1j * k) ** n
                if n % 2:
                    # odd derivatives of the Nyquist mode are not representable
                    factor = np.where(np.abs(np.abs(k) - self.k_max[a]) < 1e-9 * self.k_max[a], 0, factor)
                sym = sym * factor
            self._symbol_cache[key] = sym
        return self._symbol_cache[key]

    def forward(self, values: np.ndarray):
        if np.iscomplexobj(values):
            return np.fft.fftn(values), False
        return np.fft.rfftn(values), True

    def backward(self, coeffs: np.ndarray, real: bool) -> np.ndarray:
        if real:
            return np.fft.irfftn(coeffs, s=self.shape, axes=self._axes)
        return np.fft.ifftn(coeffs)

    def spectral_derivatives(self, values: np.ndarray, multi_indices) -> list:
        """Several spectral derivatives of one array sharing a single transform."""
        coeffs, real = self.forward(values)
        out = []
        for mi in multi_indices:
            key = ("mi", tuple(mi), real)
            sym = self._symbol_cache.get(key)
            if sym is None:
                sym = self._symbol_cache[key] = self.symbol(self._orders(mi), real)
            out.append(self.backward(coeffs * sym, real))
        return out

    def diff(self, values: np.ndarray, multi_index: Sequence[int], method: str = "spectral"):
        """Array-level derivative; see :func:`derivative`."""
        if method == "spectral":
            return self.spectral_derivatives(values, [tuple(multi_index)])[0]
        if method == "central4":
            orders = self._orders(multi_index)
            out = values
            for a, n in enumerate(orders):
                while n >= 2:
                    out = _central4(out, a, self.spacing[a], 2)
                    n -= 2
                if n:
                    out = _central4(out, a, self.spacing[a], 1)
            return out
        raise GridError(f"unknown derivative method {method!r}")

    def filter(self, values: np.ndarray, strength: float = 36.0, order: int = 36) -> np.ndarray:
        """Exponential low-pass filter ``exp(-strength (|k|/k_max)^order)`` per axis."""
        key = ("filter", strength, order)
        if key not in self._symbol_cache:
            sym = np.ones((1,) * self.ndim)
            for a in range(self.ndim):
                ratio = np.abs(self.wavenumber(a, True)) / self.k_max[a]
                sym = sym * np.exp(-strength * ratio**order)
            self._symbol_cache[key] = sym
        coeffs = np.fft.rfftn(values)
        return np.fft.irfftn(coeffs * self._symbol_cache[key], s=self.shape, axes=self._axes)

    def translate(self, values: np.ndarray, shift: Sequence[float]) -> np.ndarray:
        """Spectral translation ``f(x) -> f(x - shift)``."""
        coeffs = np.fft.fftn(values)
        phase = np.ones((1,) * self.ndim, dtype=complex)
        for a, s in enumerate(shift):
            if s:
                phase = phase * np.exp(-1j * self.wavenumber(a) * s)
        out = np.fft.ifftn(coeffs * phase)
        return out if np.iscomplexobj(values) else out.real


def _central4(f: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    r = lambda s: np.roll(f, -s, axis=axis)  # noqa: E731  r(s)[i] = f[i+s]
    if order == 1:
        return (-r(2) + 8 * r(1) - 8 * r(-1) + r(-2)) / (12 * h)
    return (-r(2) + 16 * r(1) - 30 * f + 16 * r(-1) - r(-2)) / (12 * h * h)


def make_grid(spec: GridSpec, metric: Metric) -> Grid:
    return Grid(spec, metric)


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RealField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _frozen(self.values, float)
        if vals.shape != self.grid.shape:
            raise GridError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", vals)

    def with_values(self, values) -> "RealField":
        return RealField(self.grid, values)


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _frozen(self.values, complex)
        if vals.shape != self.grid.shape:
            raise GridError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", vals)

    def with_values(self, values) -> "ComplexField":
        return ComplexField(self.grid, values)


def derivative(f, axis_indices: Sequence[int], method: str = "spectral"):
    """Partial derivative of a field along a multi-index such as ``(0,)`` or ``(0, 1)``.

    ``method`` is ``"spectral"`` (exact for band-limited fields) or
    ``"central4"`` (periodic fourth-order central differences).
    """
    vals = f.grid.diff(f.values, tuple(axis_indices), method)
    if isinstance(f, RealField):
        return RealField(f.grid, np.real(vals))
    return ComplexField(f.grid, vals)


def integrate(f) -> float:
    """Riemann sum times cell volume (spectrally accurate on a periodic lattice)."""
    total = np.sum(f.values) * f.grid.cell_volume
    return float(np.real(total)) if isinstance(f, RealField) else complex(total)


def _quarter_turn(values: np.ndarray) -> np.ndarray:
    # f_rot(x, y) = f(y, -x); index i <-> x_i = (i - N/2) dx, so -x_i <-> (-i) mod N
    n = values.shape[0]
    return values.T[(-np.arange(n)) % n, :]


def _fourier_basis(points: np.ndarray, k: np.ndarray, origin: float, k_nyq: float) -> np.ndarray:
    basis = np.exp(1j * np.outer(points - origin, k))
    nyq = np.abs(np.abs(k) - k_nyq) < 1e-9 * k_nyq
    basis[:, nyq] = np.cos(np.outer(points - origin, k[nyq]))
    return basis


def rotate_field(f: RealField, angle: float) -> RealField:
    """Rotate a field on a square 2-axis grid about the origin.

    Returns ``f(R(-angle) x)``. Quarter turns are exact index permutations;
    the remainder is resampled by evaluating the trigonometric interpolant.
    The field is treated as localised in the box: sample points that rotate out
    of it take the mean boundary value instead of a periodic image.
    """
    grid = f.grid
    if grid.ndim != 2 or grid.spec.axes[0] != grid.spec.axes[1]:
        raise GridError("rotate_field needs a square grid with exactly 2 axes")
    quarter = int(round(angle / (math.pi / 2)))
    rest = angle - quarter * (math.pi / 2)
    vals = np.asarray(f.values)
    for _ in range(quarter % 4):
        vals = _quarter_turn(vals)
    if abs(rest) > 1e-15:
        n = grid.shape[0]
        x = grid.coords[0]
        X, Y = np.meshgrid(x, x, indexing="ij")
        c, s = math.cos(rest), math.sin(rest)
        xs = (c * X + s * Y).ravel()
        ys = (-s * X + c * Y).ravel()
        coeffs = np.fft.fft2(vals) / (n * n)
        origin = x[0]
        ex = _fourier_basis(xs, grid.k[0], origin, grid.k_max[0])
        ey = _fourier_basis(ys, grid.k[1], origin, grid.k_max[1])
        edge = float(np.mean(np.concatenate([vals[0, :], vals[:, 0]])))
        half = grid.extents[0] / 2
        outside = (np.abs(xs) > half) | (np.abs(ys) > half)
        vals = np.real(np.sum(ex * (ey @ coeffs.T), axis=1))
        vals[outside] = edge
        vals = vals.reshape(n, n)
    return RealField(grid, vals)
