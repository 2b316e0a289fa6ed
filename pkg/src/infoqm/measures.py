"""Information measures ``I[p]``.

Every measure in the family is a local functional of the log-density
``R = ln p``. Fisher-type terms are quadratic forms ``∫ p M_ij ∂_iR ∂_jR``
(Fisher uses ``M = g``); the higher-derivative term is
``eps L² ∫ p (g_ij ∂_i∂_j R)²``. All computations run on ``R`` so that
low-density tails contribute relative, not absolute, roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from infoqm.errors import DensityFloorError, ScenarioError
from infoqm.grid import Grid, Metric, RealField

DENSITY_FLOOR = 1e-12


@dataclass(frozen=True)
class MeasureMetadata:
    max_derivative_order: int
    homogeneity_degree: int
    local: bool

    @property
    def ahd(self) -> bool:
        """No product of terms carries more than two derivatives."""
        return self.max_derivative_order <= 2

    def to_dict(self) -> dict:
        return {
            "max_derivative_order": self.max_derivative_order,
            "homogeneity_degree": self.homogeneity_degree,
            "local": self.local,
        }


class MeasureSpec:
    """Base class; concrete variants are frozen dataclasses below."""

    kind = "abstract"

    @property
    def naxes(self) -> int:
        raise NotImplementedError

    @property
    def metadata(self) -> MeasureMetadata:
        return structural_metadata(self)

    def restrict(self, axes: Sequence[int]) -> "MeasureSpec":
        raise NotImplementedError

    def scaled(self, c: float) -> "WeightedSum":
        return WeightedSum(((c, self),))

    def to_dict(self) -> dict:
        return measure_to_dict(self)


@dataclass(frozen=True)
class Fisher(MeasureSpec):
    metric: Metric = field(default_factory=Metric)
    kind = "Fisher"

    @property
    def naxes(self):
        return self.metric.naxes

    def restrict(self, axes):
        return Fisher(self.metric.restrict(axes))


@dataclass(frozen=True)
class AnisotropicFisher(MeasureSpec):
    """Fisher information with a constant symmetric positive-definite matrix ``G``."""

    G: tuple = ((1.0,),)
    kind = "AnisotropicFisher"

    def __post_init__(self):
        G = np.atleast_2d(np.array(self.G, dtype=float))
        if G.shape[0] != G.shape[1]:
            raise ScenarioError(f"AnisotropicFisher.G must be square, got shape {G.shape}")
        if not np.allclose(G, G.T, rtol=0, atol=1e-14):
            raise ScenarioError("AnisotropicFisher.G must be symmetric")
        if np.linalg.eigvalsh(G).min() <= 0:
            raise ScenarioError("AnisotropicFisher.G must be positive definite")
        object.__setattr__(self, "G", tuple(tuple(float(v) for v in row) for row in G))

    @property
    def naxes(self):
        return len(self.G)

    def matrix(self) -> np.ndarray:
        return np.array(self.G)

    def restrict(self, axes):
        G = self.matrix()[np.ix_(list(axes), list(axes))]
        return AnisotropicFisher(tuple(map(tuple, G)))


@dataclass(frozen=True)
class HigherDerivative(MeasureSpec):
    """``eps L² ∫ p (g_ij ∂_i∂_j ln p)²``: introduces a length scale and fourth derivatives."""

    epsilon: float = 0.0
    L: float = 1.0
    metric: Metric = field(default_factory=Metric)
    kind = "HigherDerivative"

    def __post_init__(self):
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "L", float(self.L))
        if self.L <= 0:
            raise ScenarioError("HigherDerivative.L must be positive")

    @property
    def naxes(self):
        return self.metric.naxes

    @property
    def coupling(self) -> float:
        return self.epsilon * self.L**2

    def restrict(self, axes):
        return HigherDerivative(self.epsilon, self.L, self.metric.restrict(axes))


@dataclass(frozen=True)
class WeightedSum(MeasureSpec):
    terms: tuple = ()
    kind = "WeightedSum"

    def __post_init__(self):
        terms = tuple((float(c), m) for c, m in self.terms)
        if not terms:
            raise ScenarioError("WeightedSum needs at least one term")
        if any(c < 0 for c, _ in terms):
            raise ScenarioError("WeightedSum coefficients must be non-negative")
        if len({m.naxes for _, m in terms}) != 1:
            raise ScenarioError("WeightedSum terms act on different numbers of axes")
        object.__setattr__(self, "terms", terms)

    @property
    def naxes(self):
        return self.terms[0][1].naxes

    def restrict(self, axes):
        return WeightedSum(tuple((c, m.restrict(axes)) for c, m in self.terms))


# -- structure --------------------------------------------------------------


def decompose(m: MeasureSpec):
    """Split a measure into a quadratic-form matrix and weighted higher-derivative terms.

    Zero-weight terms are dropped.
    """
    n = m.naxes
    if isinstance(m, Fisher):
        return m.metric.matrix(), []
    if isinstance(m, AnisotropicFisher):
        return m.matrix(), []
    if isinstance(m, HigherDerivative):
        return np.zeros((n, n)), [(1.0, m)]
    if isinstance(m, WeightedSum):
        M = np.zeros((n, n))
        higher = []
        for c, term in m.terms:
            if c == 0:
                continue
            Mt, ht = decompose(term)
            M = M + c * Mt
            higher.extend((c * w, h) for w, h in ht)
        return M, higher
    raise TypeError(f"not a measure: {m!r}")


def structural_metadata(m: MeasureSpec) -> MeasureMetadata:
    """Derivative count per product of terms, homogeneity degree and locality."""
    if isinstance(m, (Fisher, AnisotropicFisher)):
        return MeasureMetadata(2, 1, True)
    if isinstance(m, HigherDerivative):
        return MeasureMetadata(4, 1, True)
    if isinstance(m, WeightedSum):
        live = [structural_metadata(t) for c, t in m.terms if c != 0]
        if not live:
            return MeasureMetadata(0, 1, True)
        degrees = {md.homogeneity_degree for md in live}
        return MeasureMetadata(
            max(md.max_derivative_order for md in live),
            degrees.pop() if len(degrees) == 1 else -1,
            all(md.local for md in live),
        )
    raise TypeError(f"not a measure: {m!r}")


# -- numerics ---------------------------------------------------------------


def check_density(p: np.ndarray, floor: float = DENSITY_FLOOR) -> None:
    """Raise :class:`DensityFloorError` if ``p`` has a site below ``floor * max(p)``."""
    pmax = np.max(p)
    if not np.all(np.isfinite(p)) or not pmax > 0:
        raise DensityFloorError("density is not finite and positive", site=None)
    bad = p < floor * pmax
    if bad.any():
        site = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DensityFloorError(
            f"density below floor {floor:g}*max at site {site} (p/max = {p[site] / pmax:.3g})",
            site=site,
        )


class LogDensity:
    """Pointwise derivatives of ``R = ln p`` up to second order.

    Built either from ``R`` itself (hydrodynamic state variables) or from a sampled
    density. In the second case derivatives go through the amplitude ``√p``, which
    stays band-limited where ``ln p`` of a periodised packet develops sharp valleys.
    """

    def __init__(self, grid: Grid, logp: np.ndarray, d1=None, d2=None):
        self.grid = grid
        self.R = logp
        self.p = np.exp(logp)
        n = grid.ndim
        pairs = [(a, b) for a in range(n) for b in range(a, n)]
        if d1 is None:
            derivs = grid.spectral_derivatives(logp, [(a,) for a in range(n)] + pairs)
            d1, d2 = derivs[:n], dict(zip(pairs, derivs[n:]))
        self.d1 = list(d1)
        self.d2 = {}
        for (a, b), arr in d2.items():
            self.d2[a, b] = self.d2[b, a] = arr

    @classmethod
    def from_density(cls, grid: Grid, p: np.ndarray, floor: float = DENSITY_FLOOR):
        check_density(p, floor)
        n = grid.ndim
        amp = np.sqrt(p)
        pairs = [(a, b) for a in range(n) for b in range(a, n)]
        derivs = grid.spectral_derivatives(amp, [(a,) for a in range(n)] + pairs)
        u = [2 * derivs[a] / amp for a in range(n)]
        d2 = {
            (a, b): 2 * derivs[n + i] / amp - 0.5 * u[a] * u[b] for i, (a, b) in enumerate(pairs)
        }
        return cls(grid, np.log(p), u, d2)

    def quadratic(self, M: np.ndarray) -> np.ndarray:
        """``M_ij ∂_iR ∂_jR`` pointwise."""
        n = self.grid.ndim
        return sum(
            M[a, b] * self.d1[a] * self.d1[b] for a in range(n) for b in range(n) if M[a, b]
        ) + np.zeros(self.grid.shape)

    def hessian_trace(self, M: np.ndarray) -> np.ndarray:
        n = self.grid.ndim
        return sum(
            M[a, b] * self.d2[a, b] for a in range(n) for b in range(n) if M[a, b]
        ) + np.zeros(self.grid.shape)


def _higher_density_and_derivative(ld: LogDensity, h: HigherDerivative):
    grid = ld.grid
    g = h.metric.inverse_masses
    lap = sum(g[a] * ld.d2[a, a] for a in range(grid.ndim))
    derivs = grid.spectral_derivatives(
        lap, [(a,) for a in range(grid.ndim)] + [(a, a) for a in range(grid.ndim)]
    )
    n = grid.ndim
    # (1/p) g_ii ∂_i²(p lap) expanded in log variables
    weighted = sum(
        g[a]
        * (derivs[n + a] + 2 * ld.d1[a] * derivs[a] + lap * (ld.d2[a, a] + ld.d1[a] ** 2))
        for a in range(n)
    )
    return lap**2, lap**2 + 2 * weighted


def _check_axes(m: MeasureSpec, grid: Grid):
    if m.naxes != grid.ndim:
        raise ScenarioError(f"measure acts on {m.naxes} axes but grid has {grid.ndim}")


def form_value(ld: LogDensity, M: np.ndarray, higher) -> float:
    """``∫ p [M_ij R_i R_j + Σ w eps L² Λ²]`` for a decomposed measure (``M`` may be indefinite)."""
    density = ld.quadratic(M) if M.any() else np.zeros(ld.grid.shape)
    for w, h in higher:
        if w * h.coupling:
            density = density + w * h.coupling * _higher_density_and_derivative(ld, h)[0]
    return float(np.sum(ld.p * density) * ld.grid.cell_volume)


def form_derivative(ld: LogDensity, M: np.ndarray, higher) -> np.ndarray:
    """Functional derivative of :func:`form_value` with respect to ``p``."""
    out = np.zeros(ld.grid.shape)
    if M.any():
        out -= ld.quadratic(M) + 2 * ld.hessian_trace(M)
    for w, h in higher:
        if w * h.coupling:
            out += w * h.coupling * _higher_density_and_derivative(ld, h)[1]
    return out


def evaluate_log(m: MeasureSpec, ld: LogDensity) -> float:
    _check_axes(m, ld.grid)
    return form_value(ld, *decompose(m))


def variational_derivative_log(m: MeasureSpec, ld: LogDensity) -> np.ndarray:
    _check_axes(m, ld.grid)
    return form_derivative(ld, *decompose(m))


def evaluate(m: MeasureSpec, p: RealField, floor: float = DENSITY_FLOOR) -> float:
    """Value of the measure on a node-free density (normalisation not assumed)."""
    return evaluate_log(m, LogDensity.from_density(p.grid, p.values, floor))


def variational_derivative(m: MeasureSpec, p: RealField, floor: float = DENSITY_FLOOR) -> RealField:
    """Functional derivative ``δI/δp`` from the closed-form expression of each variant."""
    ld = LogDensity.from_density(p.grid, p.values, floor)
    return RealField(p.grid, variational_derivative_log(m, ld))


# -- finite-difference oracle -------------------------------------------------


@dataclass
class FDReport:
    max_rel_error: float
    finite_difference: list
    analytic: list


def smooth_probes(p: RealField, count: int, seed: int = 0) -> list:
    """Perturbations ``δp = p (b - <b>_p)`` built from random periodic bumps; each has ∫δp = 0."""
    grid = p.grid
    rng = np.random.default_rng(seed)
    probes = []
    for _ in range(count):
        bump = np.ones(grid.shape)
        for a in range(grid.ndim):
            L = grid.extents[a]
            width = L / 8
            c = rng.uniform(-L / 2, L / 2)
            x = grid.mesh(a)
            bump = bump * sum(np.exp(-((x - c + n * L) ** 2) / (2 * width**2)) for n in (-1, 0, 1))
        mean = np.sum(p.values * bump) / np.sum(p.values)
        dp = p.values * (bump - mean)
        probes.append(dp / np.max(np.abs(bump - mean)))
    return probes


def fd_check(
    m: MeasureSpec,
    p: RealField,
    probe_count: int = 8,
    seed: int = 0,
    step: float = 1e-3,
    probes: Optional[list] = None,
) -> FDReport:
    """Compare ``∫ δI/δp · δp`` with Richardson-extrapolated central differences of ``I``."""
    if probes is None:
        probes = smooth_probes(p, probe_count, seed)
    vd = variational_derivative(m, p).values
    dv = p.grid.cell_volume
    fds, ans, worst = [], [], 0.0

    def central(dp, h):
        plus = evaluate(m, p.with_values(p.values + h * dp))
        minus = evaluate(m, p.with_values(p.values - h * dp))
        return (plus - minus) / (2 * h)

    for dp in probes:
        dp = np.asarray(dp, dtype=float)
        analytic = float(np.sum(vd * dp) * dv)
        fd = (4 * central(dp, step / 2) - central(dp, step)) / 3
        scale = max(abs(analytic), abs(fd))
        rel = abs(fd - analytic) / scale if scale > 0 else 0.0
        worst = max(worst, rel)
        fds.append(fd)
        ans.append(analytic)
    return FDReport(worst, fds, ans)


# -- serialisation ------------------------------------------------------------


def measure_to_dict(m: MeasureSpec) -> dict:
    if isinstance(m, Fisher):
        return {"kind": "Fisher", "metric": m.metric.to_dict()}
    if isinstance(m, AnisotropicFisher):
        return {"kind": "AnisotropicFisher", "G": [list(r) for r in m.G]}
    if isinstance(m, HigherDerivative):
        return {
            "kind": "HigherDerivative",
            "epsilon": m.epsilon,
            "L": m.L,
            "metric": m.metric.to_dict(),
        }
    if isinstance(m, WeightedSum):
        return {
            "kind": "WeightedSum",
            "terms": [{"coefficient": c, "measure": measure_to_dict(t)} for c, t in m.terms],
        }
    raise TypeError(f"not a measure: {m!r}")


_MEASURE_KEYS = {
    "Fisher": {"kind", "metric"},
    "AnisotropicFisher": {"kind", "G"},
    "HigherDerivative": {"kind", "epsilon", "L", "metric"},
    "WeightedSum": {"kind", "terms"},
}


def measure_from_dict(data: dict, metric: Optional[Metric] = None, strict: bool = True) -> MeasureSpec:
    """Parse a measure; ``metric`` fills in Fisher/HigherDerivative metrics left implicit."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ScenarioError("measure: expected an object with a 'kind' key")
    kind = data["kind"]
    if kind not in _MEASURE_KEYS:
        raise ScenarioError(f"measure.kind: unknown measure {kind!r}")
    extra = set(data) - _MEASURE_KEYS[kind]
    if extra and strict:
        raise ScenarioError([f"measure: unknown key {k!r}" for k in sorted(extra)])

    def get_metric():
        if "metric" in data:
            return Metric.from_dict(data["metric"])
        if metric is None:
            raise ScenarioError(f"measure {kind}: metric missing")
        return metric

    if kind == "Fisher":
        return Fisher(get_metric())
    if kind == "AnisotropicFisher":
        return AnisotropicFisher(tuple(tuple(r) for r in data["G"]))
    if kind == "HigherDerivative":
        return HigherDerivative(data["epsilon"], data["L"], get_metric())
    terms = []
    for t in data["terms"]:
        terms.append((t["coefficient"], measure_from_dict(t["measure"], metric, strict)))
    return WeightedSum(tuple(terms))
