"""Scenario files: parsing, execution and output files."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from infoqm import __version__
from infoqm import checkpoint as ckpt
from infoqm.action import ActionConfig, Harmonic, HydroState
from infoqm.errors import InfoQMError, ScenarioError
from infoqm.grid import ComplexField, Grid, GridSpec, Metric, RealField, make_grid
from infoqm.measures import measure_from_dict, measure_to_dict

log = logging.getLogger(__name__)

TOP_KEYS = {"name", "grid", "metric", "action", "initial_state", "task", "evolve", "outputs", "seed"}
REQUIRED = {"name", "grid", "task"}
ACTION_KEYS = {"hbar", "lambda", "measure", "potential"}
POTENTIAL_KEYS = {
    "Zero": {"kind"},
    "Harmonic": {"kind", "omega"},
    "DoubleWell": {"kind", "a", "b"},
    "Sampled": {"kind", "values"},
}
INITIAL_KEYS = {
    "Gaussian": {"kind", "mu", "sigma", "k"},
    "CoherentState": {"kind", "x0"},
    "GroundStateOf": {"kind", "tol", "max_iter"},
    "Random": {"kind", "low", "high"},
    "Checkpoint": {"kind", "path"},
}
TASK_KEYS = {
    "Evolve": {"kind", "picture"},
    "GroundState": {"kind", "tol", "max_iter"},
    "Axioms": {"kind", "budget", "probe"},
    "Scan": {"kind", "scan", "values"},
    "Acceptance": {"kind", "criterion"},
}
EVOLVE_KEYS = {"dt", "steps", "integrator", "record_every", "hydro_filter"}
OUTPUT_KEYS = {"directory", "formats"}
FORMATS = {"csv", "json", "checkpoint"}

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4


@dataclass
class Scenario:
    name: str
    grid: Grid
    action: ActionConfig
    task: dict
    initial_state: dict = field(default_factory=lambda: {"kind": "Gaussian"})
    evolve: Optional[object] = None
    outputs: dict = field(default_factory=lambda: {"directory": None, "formats": ["csv", "json"]})
    seed: int = 0
    source: dict = field(default_factory=dict)
    base_dir: Optional[Path] = None

    @property
    def metric(self) -> Metric:
        return self.grid.metric

    def to_dict(self) -> dict:
        """Normalised document; parse(to_dict()) reproduces the scenario."""
        out = {
            "name": self.name,
            "grid": self.grid.spec.to_dict(),
            "metric": self.grid.metric.to_dict(),
            "action": self.action.to_dict(),
            "initial_state": self.initial_state,
            "task": self.task,
            "outputs": self.outputs,
            "seed": self.seed,
        }
        if out["action"]["measure"] is None:
            del out["action"]["measure"]
        if self.evolve is not None:
            out["evolve"] = self.evolve.to_dict()
        return out

    def hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunRecord:
    scenario_hash: str
    started: str
    finished: str
    version: str
    seed: int
    files: list
    status: str = "ok"
    error: Optional[dict] = None
    summary: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if self.error is None:
            if self.summary.get("acceptance", {}).get("passed") is False:
                return EXIT_ACCEPTANCE
            return EXIT_OK
        if self.error["code"] in ("validation", "grid", "checkpoint"):
            return EXIT_VALIDATION
        return EXIT_NUMERICAL

    def to_dict(self) -> dict:
        return {
            "scenario_hash": self.scenario_hash,
            "started": self.started,
            "finished": self.finished,
            "version": self.version,
            "seed": self.seed,
            "files": self.files,
            "status": self.status,
            "error": self.error,
        }


# -- parsing ----------------------------------------------------------------


class _Errors:
    def __init__(self, strict: bool):
        self.strict = strict
        self.items = []

    def add(self, msg):
        self.items.append(msg)

    def keys(self, where: str, data, allowed: set):
        if not isinstance(data, dict):
            self.add(f"{where}: expected an object")
            return False
        if self.strict:
            for k in sorted(set(data) - allowed):
                self.add(f"{where}.{k}: unknown key")
        return True

    def guard(self, where: str, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except ScenarioError as exc:
            for e in exc.errors:
                self.add(f"{where}: {e}")
        except (KeyError, TypeError, ValueError) as exc:
            self.add(f"{where}: {exc.__class__.__name__}: {exc}")
        return None


def parse_scenario(text: Union[str, dict], strict: bool = True, base_dir=None) -> Scenario:
    """Validate a scenario document; all problems are reported together."""
    from infoqm.dynamics import EvolveConfig

    if isinstance(text, dict):
        doc = text
    else:
        try:
            doc = json.loads(text)
        except ValueError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from None
    err = _Errors(strict)
    if not err.keys("scenario", doc, TOP_KEYS):
        raise ScenarioError(err.items)
    for k in sorted(REQUIRED - set(doc)):
        err.add(f"{k}: required key missing")

    metric_doc = doc.get("metric", {"N": 1, "d": len(doc.get("grid", {}).get("axes", [1])), "masses": [1.0]})
    metric = None
    if err.keys("metric", metric_doc, {"N", "d", "masses"}):
        metric = err.guard("metric", Metric.from_dict, metric_doc)

    spec = None
    grid_doc = doc.get("grid")
    if grid_doc is not None and err.keys("grid", grid_doc, {"axes"}):
        for i, ax in enumerate(grid_doc.get("axes", [])):
            err.keys(f"grid.axes[{i}]", ax, {"extent", "points"})
        spec = err.guard("grid", GridSpec.from_dict, grid_doc)
    grid = None
    if spec is not None and metric is not None:
        grid = err.guard("grid", make_grid, spec, metric)

    action_doc = doc.get("action", {})
    action = None
    if err.keys("action", action_doc, ACTION_KEYS):
        pot = action_doc.get("potential", {"kind": "Zero"})
        if err.keys("action.potential", pot, POTENTIAL_KEYS.get(pot.get("kind") if isinstance(pot, dict) else None,
                                                                   {"kind"})):
            if pot.get("kind") not in POTENTIAL_KEYS:
                err.add(f"action.potential.kind: unknown potential {pot.get('kind')!r}")
        if "measure" in action_doc:
            err.guard("action.measure", measure_from_dict, action_doc["measure"], metric, strict)
        action = err.guard("action", ActionConfig.from_dict, action_doc, metric)
        if action is not None and grid is not None:
            err.guard("action.measure", action.measure_for, grid)
            if isinstance(action.potential, Harmonic):
                err.guard("action.potential.omega", action.potential.omega_for, grid.ndim)

    init = doc.get("initial_state", {"kind": "Gaussian"})
    if err.keys("initial_state", init, INITIAL_KEYS.get(init.get("kind") if isinstance(init, dict) else None,
                                                        {"kind"})):
        if init.get("kind") not in INITIAL_KEYS:
            err.add(f"initial_state.kind: unknown initial state {init.get('kind')!r}")
        elif grid is not None:
            for key in ("mu", "sigma", "k", "x0"):
                if key in init and len(np.atleast_1d(init[key])) not in (1, grid.ndim):
                    err.add(f"initial_state.{key}: expected 1 or {grid.ndim} entries")
            if init.get("kind") == "Gaussian" and np.any(np.atleast_1d(init.get("sigma", 1.0)) <= 0):
                err.add("initial_state.sigma: must be positive")
            if init.get("kind") == "CoherentState" and action is not None and not isinstance(
                action.potential, Harmonic
            ):
                err.add("initial_state: CoherentState needs a Harmonic potential")

    task = doc.get("task", {})
    if err.keys("task", task, TASK_KEYS.get(task.get("kind") if isinstance(task, dict) else None, {"kind"})):
        kind = task.get("kind")
        if kind not in TASK_KEYS:
            err.add(f"task.kind: unknown task {kind!r}")
        if kind == "Evolve" and task.get("picture", "wave") not in ("wave", "hydro"):
            err.add("task.picture: must be 'wave' or 'hydro'")
        if kind == "Scan":
            if task.get("scan") not in ("orientation", "epsilon", "length", "omega"):
                err.add(f"task.scan: unknown scan {task.get('scan')!r}")
            if len(task.get("values", [])) < 4:
                err.add("task.values: a scan needs at least 4 values")
        if kind == "Acceptance" and task.get("criterion") not in range(1, 11):
            err.add("task.criterion: must be an integer 1..10")

    evolve = None
    if "evolve" in doc:
        ev = doc["evolve"]
        if err.keys("evolve", ev, EVOLVE_KEYS):
            picture = task.get("picture", "wave") if isinstance(task, dict) else "wave"
            ev = dict(ev)
            ev.setdefault("integrator", "RK4" if picture == "hydro" else "SplitStep")
            evolve = err.guard("evolve", lambda: EvolveConfig(**ev))
            if evolve is not None and picture == "hydro" and evolve.integrator != "RK4":
                err.add("evolve.integrator: the hydrodynamic picture needs RK4")
            if evolve is not None and picture == "wave" and evolve.integrator != "SplitStep":
                err.add("evolve.integrator: SplitStep is the only wave-picture integrator")
    elif isinstance(task, dict) and task.get("kind") == "Evolve":
        err.add("evolve: required for Evolve tasks")

    outputs = dict(doc.get("outputs", {}))
    if err.keys("outputs", outputs, OUTPUT_KEYS):
        outputs.setdefault("directory", None)
        outputs.setdefault("formats", ["csv", "json"])
        for f in outputs["formats"]:
            if f not in FORMATS:
                err.add(f"outputs.formats: unknown format {f!r}")

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        err.add("seed: must be a non-negative integer")

    if not isinstance(doc.get("name", ""), str):
        err.add("name: must be a string")
    if err.items:
        raise ScenarioError(err.items)
    return Scenario(
        name=doc["name"],
        grid=grid,
        action=action,
        task=dict(task),
        initial_state=dict(init),
        evolve=evolve,
        outputs=outputs,
        seed=seed,
        source=doc,
        base_dir=Path(base_dir) if base_dir else None,
    )


def load_scenario(path, strict: bool = True) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), strict=strict, base_dir=path.parent)


# -- initial states ---------------------------------------------------------


def _per_axis(value, n, default):
    arr = np.atleast_1d(np.asarray(default if value is None else value, dtype=float))
    return np.broadcast_to(arr, (n,)) if arr.size == 1 else arr


def gaussian_wave(grid: Grid, mu, sigma, k=None) -> ComplexField:
    """Normalised periodised packet with density standard deviation ``sigma`` and wavenumber ``k``."""
    n = grid.ndim
    mu, sigma, k = _per_axis(mu, n, 0.0), _per_axis(sigma, n, 1.0), _per_axis(k, n, 0.0)
    psi = np.ones(grid.shape, dtype=complex)
    for a in range(n):
        x = grid.mesh(a)
        L = grid.extents[a]
        env = sum(np.exp(-((x - mu[a] + j * L) ** 2) / (4 * sigma[a] ** 2)) for j in (-1, 0, 1))
        psi = psi * env * np.exp(1j * k[a] * x)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * grid.cell_volume)
    return ComplexField(grid, psi)


def initial_wave(sc: Scenario, seed: int):
    """Returns ``(ψ0, t0)``."""
    from infoqm.dynamics import ground_state

    init = sc.initial_state
    grid = sc.grid
    kind = init.get("kind", "Gaussian")
    if kind == "Gaussian":
        return gaussian_wave(grid, init.get("mu"), init.get("sigma"), init.get("k")), 0.0
    if kind == "CoherentState":
        pot = sc.action.potential
        om = pot.omega_for(grid.ndim)
        m = np.array([grid.metric.axis_mass(a) for a in range(grid.ndim)])
        sigma = np.sqrt(sc.action.hbar / (2 * m * om))
        return gaussian_wave(grid, init.get("x0"), sigma), 0.0
    if kind == "Random":
        p = initial_density(sc, seed)
        return ComplexField(grid, np.sqrt(p.values) + 0j), 0.0
    if kind == "GroundStateOf":
        flat = RealField(grid, np.full(grid.shape, 1 / np.prod(grid.extents)))
        state, _ = ground_state(sc.action, flat, init.get("tol", 1e-9), init.get("max_iter", 20000))
        return ComplexField(grid, np.sqrt(state.p.values) + 0j), 0.0
    if kind == "Checkpoint":
        path = Path(init["path"])
        if not path.is_absolute() and sc.base_dir is not None:
            path = sc.base_dir / path
        cp = ckpt.load(path, grid)
        state = cp.state
        if isinstance(state, HydroState):
            from infoqm.dynamics import hydro_to_wave

            state = hydro_to_wave(state, sc.action.hbar)
        return state, cp.time
    raise ScenarioError(f"initial_state.kind: unknown {kind!r}")


def initial_density(sc: Scenario, seed: int) -> RealField:
    init = sc.initial_state
    grid = sc.grid
    if init.get("kind") == "Random":
        rng = np.random.default_rng(seed)
        p = rng.uniform(init.get("low", 0.5), init.get("high", 1.5), grid.shape)
        return RealField(grid, p / (np.sum(p) * grid.cell_volume))
    psi, _ = initial_wave(sc, seed)
    return RealField(grid, np.abs(psi.values) ** 2)


# -- execution --------------------------------------------------------------


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _fmt(v) -> str:
    return "%.17g" % v


class _Outputs:
    def __init__(self, directory: Path, formats):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.formats = set(formats)
        self.files = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        if name not in self.files:
            self.files.append(name)
        return p

    def write_json(self, name: str, payload: dict):
        self.path(name).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _timeseries_row(t, state, cfg, grid):
    from infoqm.observables import energy, moments, norm

    row = [t, norm(state), energy(state, cfg, norm_tol=1e-6)]
    for a in range(grid.ndim):
        row += [moments(state, a, 1), moments(state, a, 2)]
    return row


def _run_evolve(sc: Scenario, out: _Outputs, seed: int) -> dict:
    from infoqm.dynamics import evolve_hydro, evolve_wave, wave_to_hydro

    grid = sc.grid
    picture = sc.task.get("picture", "wave")
    psi0, t0 = initial_wave(sc, seed)
    header = ["time", "norm", "energy"]
    for a in range(grid.ndim):
        header += [f"mean_{a}", f"var_{a}"]
    rows = []
    chash = sc.hash()
    checkpoints = "checkpoint" in out.formats

    def record(n, t, state):
        rows.append(_timeseries_row(t, state, sc.action, grid))
        if checkpoints:
            ckpt.save(state, out.path(f"checkpoint_{n:08d}.iqm"), t, chash)

    if picture == "wave":
        traj = evolve_wave(psi0, sc.action, sc.evolve, t0=t0, callback=record)
    else:
        traj = evolve_hydro(wave_to_hydro(psi0, sc.action.hbar), sc.action, sc.evolve, t0=t0, callback=record)
    if "csv" in out.formats:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        out.path("timeseries.csv").write_text(buf.getvalue())
    final = dict(zip(header, rows[-1]))
    return {"final": final, "records": len(rows), "trajectory": traj.meta}


def _run_ground_state(sc: Scenario, out: _Outputs, seed: int) -> dict:
    from infoqm.dynamics import ground_state
    from infoqm.observables import moments

    info = []
    init = initial_density(sc, seed)
    state, E = ground_state(sc.action, init, sc.task.get("tol", 1e-9), sc.task.get("max_iter", 20000), info=info)
    if "checkpoint" in out.formats:
        ckpt.save(state, out.path("ground_state.iqm"), 0.0, sc.hash())
    return {
        "energy": E,
        "mu": info[0].mu,
        "residual": info[0].residual,
        "iterations": info[0].iterations,
        "variance": [moments(state, a, 2) for a in range(sc.grid.ndim)],
    }


def _run_axioms(sc: Scenario, out: _Outputs, seed: int) -> dict:
    from infoqm.axioms import classify

    m = sc.action.measure_for(sc.grid)
    report = classify(m, sc.task.get("budget", 4), seed, probe=sc.task.get("probe", True))
    return {"axioms": report.to_dict()}


def _run_scan(sc: Scenario, out: _Outputs, seed: int) -> dict:
    from infoqm.observables import symmetry_shift_scan

    res = symmetry_shift_scan(sc.action, sc.grid, sc.task["scan"], sc.task["values"])
    if "csv" in out.formats:
        out.path("scan.csv").write_text(res.to_csv())
    return {"scan": res.summary()}


def _run_acceptance(sc: Scenario, out: _Outputs, seed: int) -> dict:
    from infoqm.acceptance import run_criterion

    res = run_criterion(sc.task["criterion"], seed=seed)
    return {"acceptance": res.to_dict()}


TASKS = {
    "Evolve": _run_evolve,
    "GroundState": _run_ground_state,
    "Axioms": _run_axioms,
    "Scan": _run_scan,
    "Acceptance": _run_acceptance,
}


def run(sc: Scenario, out_dir=None, seed: Optional[int] = None) -> RunRecord:
    """Execute the scenario's task and write its outputs.

    ``summary.json`` and the CSV files are deterministic for a fixed scenario and
    seed; timestamps live only in ``record.json``.
    """
    seed = sc.seed if seed is None else seed
    directory = out_dir or sc.outputs.get("directory") or Path("out") / sc.name
    out = _Outputs(Path(directory), sc.outputs.get("formats", ["csv", "json"]))
    started = _now()
    summary = {
        "scenario": sc.name,
        "scenario_hash": sc.hash(),
        "seed": seed,
        "version": __version__,
        "task": sc.task,
    }
    error = None
    try:
        summary.update(TASKS[sc.task["kind"]](sc, out, seed))
        if sc.task["kind"] == "Evolve" or "acceptance" in summary:
            from infoqm.observables import SUPERPOSITION_CONVENTION

            summary["superposition_convention"] = SUPERPOSITION_CONVENTION
    except InfoQMError as exc:
        error = {"code": exc.code, "message": str(exc)}
        for attr in ("site", "time", "residual", "iterations"):
            if getattr(exc, attr, None) is not None:
                error[attr] = getattr(exc, attr)
        summary["error"] = error
        log.error("scenario %s failed: %s", sc.name, exc)
    if "json" in out.formats or error is not None:
        out.write_json("summary.json", summary)
    rec = RunRecord(sc.hash(), started, "", __version__, seed, out.files, "error" if error else "ok", error,
                    summary)
    rec.files = list(out.files) + ["record.json"]
    rec.finished = _now()
    (out.dir / "record.json").write_text(json.dumps(_jsonable(rec.to_dict()), indent=2, sort_keys=True) + "\n")
    return rec
