"""Scenarios, GT sampling, Monte Carlo sweeps and CSV output."""

import copy
import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import propagation as prop
from .baselines import OracleBudgetError, brute_force_min_abs, kmeans_placement
from .geometry import Building, Grid3, Region, build_flight_grid, voxelize_slf
from .solver import (AdmmConfig, InfeasibleError, PlacementProblem, gspa_solve,
                     lower_bound, verify_feasibility)

SCHEMA_VERSION = 1
SWEEP_PARAMS = ("num_gts", "min_rate", "backhaul", "building_absorption",
                "min_flight_height", "building_height")
ALGORITHMS = ("gspa", "kmeans", "lower_bound", "oracle")
CSV_HEADER = ("param_value", "algorithm", "trial", "abs_count", "feasible",
              "lower_bound", "wall_ms")
DEFAULT_SCENARIO = Path(__file__).with_name("data") / "default_scenario.json"


class ScenarioError(ValueError):
    """Schema violation; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass
class Scenario:
    region: Region
    buildings: list = field(default_factory=list)
    slf_dims: tuple = (50, 40, 15)
    flight_dims: tuple = (9, 9, 5)
    min_height: float = 50.0
    radio: prop.RadioParams = field(default_factory=prop.RadioParams)
    model: str = "tomographic"
    alhourani: prop.AlHouraniParams = field(default_factory=prop.AlHouraniParams)
    gain_map_path: str = None
    min_rate: float = 20e6
    backhaul: dict = field(default_factory=lambda: {"constant": 100e6})
    gt_positions: np.ndarray = None
    gt_count: int = 70
    gt_seed: int = 0
    gt_spacing: float = 10.0
    gt_height: float = 2.0
    solver: dict = field(default_factory=dict)
    base_dir: Path = field(default=None, compare=False, repr=False)

    def admm_config(self, **overrides):
        opts = dict(self.solver)
        opts.update({k: v for k, v in overrides.items() if v is not None})
        return AdmmConfig(**opts)


# ---------------------------------------------------------------- schema

def _need(obj, key, path):
    if not isinstance(obj, dict) or key not in obj:
        raise ScenarioError(f"{path}.{key}" if path else key, "missing")
    return obj[key]


def _vec(value, path, n=3, kind=float):
    if not isinstance(value, list) or len(value) != n:
        raise ScenarioError(path, f"expected a list of {n} numbers")
    try:
        out = tuple(kind(v) for v in value)
    except (TypeError, ValueError):
        raise ScenarioError(path, "entries must be numbers") from None
    if kind is int and any(o != v for o, v in zip(out, value)):
        raise ScenarioError(path, "entries must be integers")
    return out


def _num(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(path, "expected a finite number")
    if minimum is not None and value < minimum:
        raise ScenarioError(path, f"must be >= {minimum}")
    return float(value)


def _wrap(path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(path, str(exc)) from None


def scenario_from_dict(data, base_dir=None):
    if not isinstance(data, dict):
        raise ScenarioError("$", "top level must be an object")
    version = _need(data, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise ScenarioError("schema_version", f"unsupported version {version!r}")
    known = {"schema_version", "region", "buildings", "slf_grid", "flight_grid", "radio",
             "channel", "min_rate", "backhaul", "gts", "solver", "description"}
    extra = sorted(set(data) - known)
    if extra:
        raise ScenarioError(extra[0], "unknown field")

    reg = _need(data, "region", "")
    region = _wrap("region", Region, _vec(_need(reg, "min", "region"), "region.min"),
                   _vec(_need(reg, "max", "region"), "region.max"))

    buildings = []
    for i, b in enumerate(data.get("buildings", [])):
        p = f"buildings[{i}]"
        fp = _need(b, "footprint", p)
        if not isinstance(fp, list) or len(fp) != 2:
            raise ScenarioError(f"{p}.footprint", "expected [[x0, x1], [y0, y1]]")
        xs = _vec(fp[0], f"{p}.footprint[0]", 2)
        ys = _vec(fp[1], f"{p}.footprint[1]", 2)
        buildings.append(_wrap(p, Building, (xs, ys), _num(_need(b, "height", p), f"{p}.height"),
                               _num(b.get("absorption", 1.0), f"{p}.absorption")))

    slf_dims = _vec(data.get("slf_grid", [50, 40, 15]), "slf_grid", kind=int)
    if min(slf_dims) < 1:
        raise ScenarioError("slf_grid", "dims must be positive")
    fg = _need(data, "flight_grid", "")
    flight_dims = _vec(_need(fg, "dims", "flight_grid"), "flight_grid.dims", kind=int)
    if min(flight_dims) < 1:
        raise ScenarioError("flight_grid.dims", "dims must be positive")
    min_height = _num(fg.get("min_height", 0.0), "flight_grid.min_height")

    rd = data.get("radio", {})
    radio_keys = {f.name for f in fields(prop.RadioParams)}
    for k in rd:
        if k not in radio_keys:
            raise ScenarioError(f"radio.{k}", "unknown field")
    radio = _wrap("radio", prop.RadioParams, **{k: _num(v, f"radio.{k}") for k, v in rd.items()})

    ch = data.get("channel", {"model": "tomographic"})
    model = _need(ch, "model", "channel")
    if model not in prop.MODELS:
        raise ScenarioError("channel.model", f"unknown model {model!r}; expected one of {prop.MODELS}")
    alh = ch.get("alhourani", {})
    alhourani = _wrap("channel.alhourani", prop.AlHouraniParams,
                      **{k: _num(v, f"channel.alhourani.{k}") for k, v in alh.items()})
    gain_map_path = None
    if model == "ingested":
        gain_map_path = _need(ch, "path", "channel")
        if not isinstance(gain_map_path, str):
            raise ScenarioError("channel.path", "expected a string")
        resolved = Path(base_dir or ".") / gain_map_path
        if not resolved.is_file():
            raise ScenarioError("channel.path", f"file {str(resolved)!r} does not exist")

    min_rate = _num(_need(data, "min_rate", ""), "min_rate", minimum=0)
    bh = _need(data, "backhaul", "")
    if not isinstance(bh, dict) or len(bh) != 1 or not set(bh) <= {"constant", "gain_db"}:
        raise ScenarioError("backhaul", "expected {\"constant\": bps} or {\"gain_db\": dB}")
    if "constant" in bh:
        _num(bh["constant"], "backhaul.constant", minimum=0)
    else:
        g = bh["gain_db"]
        for j, v in enumerate(g if isinstance(g, list) else [g]):
            _num(v, f"backhaul.gain_db[{j}]")

    gts = _need(data, "gts", "")
    gt_positions = None
    if "positions" in gts:
        pos = gts["positions"]
        if not isinstance(pos, list) or not pos:
            raise ScenarioError("gts.positions", "expected a nonempty list of 3-vectors")
        gt_positions = np.array([_vec(p, f"gts.positions[{i}]") for i, p in enumerate(pos)])
    gt_count = gts.get("count", len(gt_positions) if gt_positions is not None else None)
    if gt_count is None:
        raise ScenarioError("gts.count", "missing (give positions or a count)")
    if isinstance(gt_count, bool) or not isinstance(gt_count, int) or gt_count < 1:
        raise ScenarioError("gts.count", "expected a positive integer")
    gt_seed = gts.get("seed", 0)
    if isinstance(gt_seed, bool) or not isinstance(gt_seed, int) or gt_seed < 0:
        raise ScenarioError("gts.seed", "expected a non-negative integer")

    solver = data.get("solver", {})
    valid = {f.name for f in fields(AdmmConfig)}
    for k in solver:
        if k not in valid:
            raise ScenarioError(f"solver.{k}", "unknown solver option")
    _wrap("solver", AdmmConfig, **solver)

    return Scenario(
        region=region, buildings=buildings, slf_dims=slf_dims, flight_dims=flight_dims,
        min_height=min_height, radio=radio, model=model, alhourani=alhourani,
        gain_map_path=gain_map_path, min_rate=min_rate, backhaul=dict(bh),
        gt_positions=gt_positions, gt_count=gt_count, gt_seed=gt_seed,
        gt_spacing=_num(gts.get("grid_spacing", 10.0), "gts.grid_spacing", minimum=1e-9),
        gt_height=_num(gts.get("height", 2.0), "gts.height"),
        solver=dict(solver), base_dir=Path(base_dir) if base_dir else None,
    )


def scenario_to_dict(sc):
    data = {
        "schema_version": SCHEMA_VERSION,
        "region": {"min": list(sc.region.min_corner), "max": list(sc.region.max_corner)},
        "buildings": [
            {"footprint": [list(b.footprint[0]), list(b.footprint[1])],
             "height": b.height, "absorption": b.absorption}
            for b in sc.buildings
        ],
        "slf_grid": list(sc.slf_dims),
        "flight_grid": {"dims": list(sc.flight_dims), "min_height": sc.min_height},
        "radio": {f.name: getattr(sc.radio, f.name) for f in fields(prop.RadioParams)},
        "channel": {"model": sc.model,
                    "alhourani": {f.name: getattr(sc.alhourani, f.name)
                                  for f in fields(prop.AlHouraniParams)}},
        "min_rate": sc.min_rate,
        "backhaul": dict(sc.backhaul),
        "gts": {"count": sc.gt_count, "seed": sc.gt_seed,
                "grid_spacing": sc.gt_spacing, "height": sc.gt_height},
        "solver": dict(sc.solver),
    }
    if sc.gain_map_path is not None:
        data["channel"]["path"] = sc.gain_map_path
    if sc.gt_positions is not None:
        data["gts"]["positions"] = [list(map(float, p)) for p in sc.gt_positions]
    return data


def load_scenario(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno}", exc.msg) from None
    return scenario_from_dict(data, base_dir=path.parent)


def save_scenario(scenario, path):
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")


def default_scenario():
    return load_scenario(DEFAULT_SCENARIO)


# ---------------------------------------------------------------- instances

def gt_candidates(scenario):
    """Ground positions GTs may occupy, in canonical (x-fastest) order."""
    if scenario.gt_positions is not None:
        return np.asarray(scenario.gt_positions, dtype=float)
    lo, hi = np.asarray(scenario.region.min_corner), np.asarray(scenario.region.max_corner)
    h = scenario.gt_spacing
    xs = np.arange(lo[0] + h / 2, hi[0], h)
    ys = np.arange(lo[1] + h / 2, hi[1], h)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, scenario.gt_height)])
    keep = np.ones(len(pts), dtype=bool)
    for b in scenario.buildings:
        keep &= ~b.covers_footprint(pts[:, :2], strict=False)
    return pts[keep]


def sample_gt_indices(scenario, count, seed):
    """Sorted candidate indices drawn uniformly without replacement."""
    n = len(gt_candidates(scenario))
    if count > n:
        raise ValueError(f"cannot draw {count} GTs from {n} candidate positions")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=count, replace=False))


def sample_gts(scenario, count, seed):
    return gt_candidates(scenario)[sample_gt_indices(scenario, count, seed)]


@dataclass
class Instance:
    gts: np.ndarray
    gt_indices: np.ndarray
    flight_grid: np.ndarray
    problem: PlacementProblem


def flight_grid(scenario):
    return build_flight_grid(scenario.region, scenario.flight_dims, scenario.min_height,
                             scenario.buildings)


def gain_table(scenario, gts, points):
    """Gains (dB) between ``gts`` and ``points`` under the scenario model."""
    kwargs = {}
    if scenario.model == "tomographic":
        grid = Grid3.covering(scenario.region, scenario.slf_dims)
        kwargs["slf"] = voxelize_slf(scenario.buildings, grid)
    elif scenario.model == "alhourani":
        kwargs["alhourani"] = scenario.alhourani
    return prop.gain_matrix(gts, points, scenario.model, scenario.radio, **kwargs)


def build_instance(scenario, gt_indices=None):
    """GTs, flight grid and capacity/backhaul problem for one draw."""
    cands = gt_candidates(scenario)
    if gt_indices is None:
        gt_indices = np.arange(len(cands)) if scenario.gt_positions is not None \
            else sample_gt_indices(scenario, scenario.gt_count, scenario.gt_seed)
    gt_indices = np.asarray(gt_indices, dtype=int)
    gts = cands[gt_indices]
    points = flight_grid(scenario)
    if scenario.model == "ingested":
        gmap = prop.load_gain_map(Path(scenario.base_dir or ".") / scenario.gain_map_path)
        if gmap.matrix.shape != (len(cands), len(points)):
            raise ScenarioError(
                "channel.path",
                f"gain map is {gmap.matrix.shape}, expected "
                f"({len(cands)} GT candidates, {len(points)} flight-grid points)")
        gains = gmap.matrix[gt_indices]
    else:
        gains = gain_table(scenario, gts, points)
    C = prop.capacity(gains, scenario.radio)
    cbh = prop.backhaul_vector(len(points), scenario.backhaul, scenario.radio)
    return Instance(gts, gt_indices, points, PlacementProblem(C, cbh, scenario.min_rate))


# ---------------------------------------------------------------- sweeps

@dataclass
class SweepSpec:
    parameter: str
    values: list
    trials: int = 20
    master_seed: int = 0

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}; expected one of {SWEEP_PARAMS}")
        if not len(self.values):
            raise ValueError("sweep needs at least one value")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")


@dataclass
class SweepRecord:
    param_value: float
    algorithm: str
    trial: int
    abs_count: int
    feasible: bool
    lower_bound: int
    wall_ms: float = None
    columns: tuple = field(default=None, compare=False, repr=False)


@dataclass
class SweepResult:
    spec: SweepSpec
    records: list

    def means(self):
        """Mean count over feasible trials, keyed by ``(value, algorithm)``."""
        out = {}
        for r in self.records:
            if r.feasible and r.abs_count is not None:
                out.setdefault((r.param_value, r.algorithm), []).append(r.abs_count)
        return {k: float(np.mean(v)) for k, v in out.items()}


def apply_parameter(scenario, name, value):
    """Copy of ``scenario`` with one sweep parameter substituted."""
    sc = copy.deepcopy(scenario)
    if name == "num_gts":
        sc.gt_count = int(value)
    elif name == "min_rate":
        sc.min_rate = float(value)
    elif name == "backhaul":
        sc.backhaul = {"constant": float(value)}
    elif name == "building_absorption":
        sc.buildings = [Building(b.footprint, b.height, float(value)) for b in sc.buildings]
    elif name == "building_height":
        sc.buildings = [Building(b.footprint, float(value), b.absorption) for b in sc.buildings]
    elif name == "min_flight_height":
        sc.min_height = float(value)
    else:
        raise ValueError(f"unknown sweep parameter {name!r}")
    return sc


def trial_seed(master_seed, value_index, trial_index):
    return np.random.SeedSequence([int(master_seed), int(value_index), int(trial_index)])


def _run_algorithm(name, inst, scenario, config, seed):
    """Returns ``(count, feasible, columns)``; count is None on failure."""
    P = inst.problem
    try:
        if name == "gspa":
            sol = gspa_solve(P, inst.flight_grid, config)
            return sol.num_abs, sol.feasible, tuple(int(g) for g in sol.active_columns)
        if name == "kmeans":
            sol = kmeans_placement(inst.gts, inst.flight_grid, P.capacity, P.backhaul,
                                   P.min_rate, seed=seed)
            ok = verify_feasibility(P, sol).ok
            return sol.num_abs, ok, tuple(int(g) for g in sol.active_columns)
        if name == "oracle":
            res = brute_force_min_abs(P)
            return res.min_count, True, tuple(int(g) for g in res.witness_columns)
        if name == "lower_bound":
            lb = lower_bound(P.shape[0], P.min_rate, P.backhaul)
            ok = lb <= P.shape[1]
            return (int(lb) if ok else None), ok, None
    except (InfeasibleError, OracleBudgetError):
        return None, False, None
    raise ValueError(f"unknown algorithm {name!r}")


def trial_instance(scenario, spec, value_index, trial_index):
    """Rebuild one sweep trial: ``(scenario, instance, kmeans_seed)``."""
    sc = apply_parameter(scenario, spec.parameter, spec.values[value_index])
    gt_seed, km_seed = trial_seed(spec.master_seed, value_index, trial_index).spawn(2)
    idx = sample_gt_indices(sc, sc.gt_count, np.random.default_rng(gt_seed))
    return sc, build_instance(sc, idx), int(km_seed.generate_state(1)[0])


def _run_trial(scenario, spec, algorithms, config, vi, value, ti, timing):
    sc, inst, km_seed = trial_instance(scenario, spec, vi, ti)
    P = inst.problem
    lb = lower_bound(P.shape[0], P.min_rate, P.backhaul)
    lb = int(lb) if math.isfinite(lb) else None
    rows = []
    for name in algorithms:
        t0 = time.perf_counter()
        count, ok, cols = _run_algorithm(name, inst, sc, config, km_seed)
        ms = (time.perf_counter() - t0) * 1e3 if timing else None
        rows.append(SweepRecord(value, name, ti, count, ok, lb, ms, cols))
    return rows


def run_sweep(scenario, sweep, algorithms=("gspa", "kmeans", "lower_bound"), config=None,
              threads=1, timing=False):
    """Monte Carlo sweep; records are ordered by value, trial, algorithm."""
    bad = [a for a in algorithms if a not in ALGORITHMS]
    if bad:
        raise ValueError(f"unknown algorithm {bad[0]!r}; expected a subset of {ALGORITHMS}")
    config = config or scenario.admm_config()
    jobs = [(vi, v, ti) for vi, v in enumerate(sweep.values) for ti in range(sweep.trials)]

    def work(job):
        return _run_trial(scenario, sweep, algorithms, config, *job, timing)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            chunks = list(pool.map(work, jobs))
    else:
        chunks = [work(j) for j in jobs]
    return SweepResult(sweep, [r for chunk in chunks for r in chunk])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
    return str(v)


def csv_text(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in result.records:
        wall = "" if r.wall_ms is None else f"{r.wall_ms:.3f}"
        w.writerow([_fmt(r.param_value), r.algorithm, r.trial, _fmt(r.abs_count),
                    _fmt(r.feasible), _fmt(r.lower_bound), wall])
    return buf.getvalue()


def emit_csv(result, path):
    Path(path).write_text(csv_text(result))


def read_csv(path):
    """Parse a sweep CSV back into :class:`SweepRecord` objects."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        for row in reader:
            out.append(SweepRecord(
                param_value=float(row["param_value"]),
                algorithm=row["algorithm"],
                trial=int(row["trial"]),
                abs_count=int(row["abs_count"]) if row["abs_count"] else None,
                feasible=row["feasible"] == "true",
                lower_bound=int(row["lower_bound"]) if row["lower_bound"] else None,
                wall_ms=float(row["wall_ms"]) if row["wall_ms"] else None,
            ))
    return out
