"""End-to-end accuracy studies: config parsing, sweeps, CSV emission.

A study sweeps exactly one of three knobs: the compression tolerance
``eps``, the parameter-grid spacing ``delta``, or the local basis size
``ell``. For each sweep value it builds (or reuses) the snapshot tensor,
compresses it, solves the reduced model at every test parameter, and
records the worst and mean space-time H1 errors against cached full-order
runs. Results go to a CSV file with a fixed header, a gnuplot-friendly
``.dat`` twin, and a JSON summary.

Configs are JSON with a strict schema: unknown keys anywhere are
rejected. The swept variable's values live in the ``sweep`` block and
its per-run block (``compression``, ``rom``, or ``grid``) must be
omitted; non-swept blocks carry exactly one value. Random test sets draw
from numpy's default 64-bit PCG64 generator, so a fixed seed fixes the
test set across machines.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .fem import (
    Mesh2D,
    ProblemSpec,
    TimeGrid,
    advdiff_problem,
    assemble_h1_gram,
    assemble_mass,
    assemble_operator,
    backward_euler_solve,
    build_mesh,
    heat_problem,
    initial_state,
)
from .interp import InterpolationScheme, weight_vectors
from .rom import correlation_spectrum, local_basis, rom_solve, trajectory_error_sq
from .tensors import ParameterGrid, generate_snapshots, uniform_grid
from .tt import frobenius_tolerance, tt_svd

CSV_HEADER = "sweep_var,value,eps,delta_max,ell,lambda_tail,E_max,E_mean,R1,wall_s"

_SWEEP_VARIABLES = ("eps", "delta", "ell")


def _check_keys(block: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys {unknown} in {where}")


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing required key {key!r} in {where}")
    return block[key]


def _as_positive_float(value, where: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{where} must be a number")
    value = float(value)
    if not value > 0:
        raise ConfigError(f"{where} must be positive")
    return value


def _as_positive_int(value, where: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{where} must be an integer")
    if value < 1:
        raise ConfigError(f"{where} must be at least 1")
    return value


@dataclass(frozen=True)
class TestSetSpec:
    """How the test parameter set is built.

    grid: midpoints of n uniform subintervals per axis (offset from any
    uniform training grid). random: seeded uniform draws from the box.
    explicit: points given verbatim; the only mode allowed to touch the
    training grid.
    """

    __test__ = False  # not a pytest class despite the name

    mode: str
    n: int = 0
    count: int = 0
    seed: int = 0
    points: tuple[tuple[float, ...], ...] = ()

    def build(self, box: Sequence[tuple[float, float]]) -> np.ndarray:
        d = len(box)
        if self.mode == "grid":
            axes = [
                lo + (np.arange(self.n) + 0.5) * (hi - lo) / self.n
                for lo, hi in box
            ]
            mats = np.meshgrid(*axes, indexing="ij")
            return np.column_stack([m.ravel(order="F") for m in mats])
        if self.mode == "random":
            rng = np.random.default_rng(self.seed)
            lows = np.array([lo for lo, _ in box])
            highs = np.array([hi for _, hi in box])
            return rng.uniform(lows, highs, size=(self.count, d))
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != d:
            raise ConfigError(
                f"explicit test points must be rows of length {d}"
            )
        return pts


def _parse_test_set(block: dict) -> TestSetSpec:
    where = "test_set"
    mode = _require(block, "mode", where)
    if mode == "grid":
        _check_keys(block, {"mode", "n"}, where)
        return TestSetSpec(mode="grid", n=_as_positive_int(_require(block, "n", where), "test_set.n"))
    if mode == "random":
        _check_keys(block, {"mode", "count", "seed"}, where)
        count = _as_positive_int(_require(block, "count", where), "test_set.count")
        seed = _require(block, "seed", where)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("test_set.seed must be an integer")
        return TestSetSpec(mode="random", count=count, seed=seed)
    if mode == "explicit":
        _check_keys(block, {"mode", "points"}, where)
        points = _require(block, "points", where)
        if not isinstance(points, list) or not points:
            raise ConfigError("test_set.points must be a non-empty list")
        return TestSetSpec(
            mode="explicit", points=tuple(tuple(float(v) for v in p) for p in points)
        )
    raise ConfigError(f"unknown test_set.mode {mode!r}")


@dataclass(frozen=True)
class StudyConfig:
    """Parsed and validated study description."""

    problem: ProblemSpec
    h: float
    tg: TimeGrid
    grid_counts: tuple[int, ...] | None
    eps: float | None
    ell: int | None
    p: int
    test_set: TestSetSpec
    sweep_variable: str
    sweep_values: tuple[float, ...]
    out_dir: str | None = None
    memory_budget_gb: float | None = None
    workers: int = 1
    max_ell: int = 64


def parse_config(data: dict) -> StudyConfig:
    """Validate a JSON study description; unknown keys are rejected."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(
        data,
        {
            "problem",
            "mesh",
            "time",
            "grid",
            "compression",
            "rom",
            "interpolation",
            "test_set",
            "sweep",
            "output",
            "memory_budget_gb",
            "workers",
            "max_ell",
        },
        "config root",
    )

    problem_block = _require(data, "problem", "config root")
    _check_keys(problem_block, {"kind", "nu"}, "problem")
    kind = _require(problem_block, "kind", "problem")
    if kind == "heat":
        if "nu" in problem_block:
            raise ConfigError("problem.nu applies to advdiff only")
        problem = heat_problem()
    elif kind == "advdiff":
        problem = advdiff_problem()
        if "nu" in problem_block:
            nu = _as_positive_float(problem_block["nu"], "problem.nu")
            problem = dataclasses.replace(problem, nu=nu)
    else:
        raise ConfigError(f"unknown problem.kind {kind!r}")

    mesh_block = _require(data, "mesh", "config root")
    _check_keys(mesh_block, {"h"}, "mesh")
    h = _as_positive_float(_require(mesh_block, "h", "mesh"), "mesh.h")

    time_block = _require(data, "time", "config root")
    _check_keys(time_block, {"N", "T"}, "time")
    steps = _as_positive_int(_require(time_block, "N", "time"), "time.N")
    final_time = (
        _as_positive_float(time_block["T"], "time.T")
        if "T" in time_block
        else problem.final_time
    )
    tg = TimeGrid(final_time=final_time, steps=steps)

    sweep_block = _require(data, "sweep", "config root")
    _check_keys(sweep_block, {"variable", "values"}, "sweep")
    variable = _require(sweep_block, "variable", "sweep")
    if variable not in _SWEEP_VARIABLES:
        raise ConfigError(
            f"sweep.variable must be one of {_SWEEP_VARIABLES}, got {variable!r}"
        )
    raw_values = _require(sweep_block, "values", "sweep")
    if not isinstance(raw_values, list) or not raw_values:
        raise ConfigError("sweep.values must be a non-empty list")
    if variable == "ell":
        values = tuple(
            float(_as_positive_int(v, "sweep.values entry")) for v in raw_values
        )
    else:
        values = tuple(_as_positive_float(v, "sweep.values entry") for v in raw_values)
    if len(set(values)) != len(values):
        raise ConfigError("sweep.values must be distinct")

    max_ell = 64
    if "max_ell" in data:
        max_ell = _as_positive_int(data["max_ell"], "max_ell")

    grid_counts = None
    if variable == "delta":
        if "grid" in data:
            raise ConfigError("grid block must be omitted when sweeping delta")
    else:
        grid_block = _require(data, "grid", "config root")
        _check_keys(grid_block, {"K"}, "grid")
        counts = _require(grid_block, "K", "grid")
        if not isinstance(counts, list) or len(counts) != problem.n_params:
            raise ConfigError(
                f"grid.K must list {problem.n_params} per-dimension counts"
            )
        grid_counts = tuple(_as_positive_int(k, "grid.K entry") for k in counts)
        for k in grid_counts:
            if k < 2:
                raise ConfigError("grid.K entries must be at least 2")

    eps = None
    if variable == "eps":
        if "compression" in data:
            raise ConfigError(
                "compression block must be omitted when sweeping eps"
            )
    else:
        comp_block = _require(data, "compression", "config root")
        _check_keys(comp_block, {"eps"}, "compression")
        eps_list = _require(comp_block, "eps", "compression")
        if not isinstance(eps_list, list) or len(eps_list) != 1:
            raise ConfigError("compression.eps must be a single-entry list")
        eps = _as_positive_float(eps_list[0], "compression.eps")

    ell = None
    if variable == "ell":
        if "rom" in data:
            raise ConfigError("rom block must be omitted when sweeping ell")
        for v in values:
            if int(v) > max_ell:
                raise ConfigError(f"swept ell {int(v)} exceeds max_ell {max_ell}")
    else:
        rom_block = _require(data, "rom", "config root")
        _check_keys(rom_block, {"ell"}, "rom")
        ell_list = _require(rom_block, "ell", "rom")
        if not isinstance(ell_list, list) or len(ell_list) != 1:
            raise ConfigError("rom.ell must be a single-entry list")
        ell = _as_positive_int(ell_list[0], "rom.ell")
        if ell > max_ell:
            raise ConfigError(f"rom.ell {ell} exceeds max_ell {max_ell}")

    interp_block = _require(data, "interpolation", "config root")
    _check_keys(interp_block, {"p"}, "interpolation")
    p = _as_positive_int(_require(interp_block, "p", "interpolation"), "interpolation.p")

    test_set = _parse_test_set(_require(data, "test_set", "config root"))

    out_dir = None
    if "output" in data:
        _check_keys(data["output"], {"dir"}, "output")
        out_dir = str(_require(data["output"], "dir", "output"))

    memory_budget_gb = None
    if "memory_budget_gb" in data:
        memory_budget_gb = _as_positive_float(
            data["memory_budget_gb"], "memory_budget_gb"
        )

    workers = 1
    if "workers" in data:
        workers = _as_positive_int(data["workers"], "workers")

    return StudyConfig(
        problem=problem,
        h=h,
        tg=tg,
        grid_counts=grid_counts,
        eps=eps,
        ell=ell,
        p=p,
        test_set=test_set,
        sweep_variable=variable,
        sweep_values=values,
        out_dir=out_dir,
        memory_budget_gb=memory_budget_gb,
        workers=workers,
        max_ell=max_ell,
    )


def load_config(path: str | os.PathLike) -> StudyConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(json.load(f))


def grid_counts_for_delta(
    box: Sequence[tuple[float, float]], delta: float
) -> tuple[int, ...]:
    """Per-dimension node counts whose uniform spacing is at most ``delta``.

    When ``delta`` divides a box side exactly the spacing hits it exactly.
    """
    counts = []
    for lo, hi in box:
        ratio = (hi - lo) / delta
        counts.append(int(math.ceil(ratio - 1e-9)) + 1)
    return tuple(counts)


@dataclass(frozen=True)
class StudyRow:
    """One CSV record of a sweep."""

    sweep_var: str
    value: float
    eps: float
    delta_max: float
    ell: int
    lambda_tail: float
    e_max: float
    e_mean: float
    r1: int
    wall_s: float
    error: str | None = None

    def csv_line(self) -> str:
        return ",".join(
            [
                self.sweep_var,
                f"{self.value:.17g}",
                f"{self.eps:.17g}",
                f"{self.delta_max:.17g}",
                str(self.ell),
                f"{self.lambda_tail:.17g}",
                f"{self.e_max:.17g}",
                f"{self.e_mean:.17g}",
                str(self.r1),
                f"{self.wall_s:.3f}",
            ]
        )


@dataclass
class StudyResult:
    """Rows plus the paths of the emitted files."""

    rows: list[StudyRow]
    csv_path: Path
    dat_path: Path
    summary_path: Path


class FomCache:
    """Content-addressed store of full-order trajectories under a directory."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(problem: ProblemSpec, h: float, tg: TimeGrid, alpha: Sequence[float]) -> str:
        payload = {
            "kind": problem.kind,
            "outer": [v.hex() for v in map(float, problem.outer)],
            "holes": [[v.hex() for v in map(float, hole)] for hole in problem.holes],
            "nu": float(problem.nu).hex(),
            "robin_side": problem.robin_side,
            "source_center": [v.hex() for v in map(float, problem.source_center)],
            "source_width": float(problem.source_width).hex(),
            "h": float(h).hex(),
            "T": float(tg.final_time).hex(),
            "N": tg.steps,
            "alpha": [float(a).hex() for a in alpha],
        }
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def lookup(self, key: str) -> np.ndarray | None:
        path = self.directory / f"{key}.npy"
        if not path.exists():
            return None
        try:
            states = np.load(path)
        except Exception:
            return None  # corrupt entry: recompute
        if states.ndim != 2:
            return None
        return states

    def store(self, key: str, states: np.ndarray) -> None:
        path = self.directory / f"{key}.npy"
        tmp = path.with_suffix(".tmp.npy")
        np.save(tmp, states)
        os.replace(tmp, path)


def _solve_test_fom(
    problem: ProblemSpec,
    mesh: Mesh2D,
    tg: TimeGrid,
    alpha: np.ndarray,
    mass,
    cache: FomCache | None,
) -> np.ndarray:
    if cache is not None:
        key = FomCache.key(problem, mesh.cell, tg, alpha)
        hit = cache.lookup(key)
        if hit is not None and hit.shape == (mesh.n_nodes, tg.steps):
            return hit
    op, load = assemble_operator(mesh, problem, alpha)
    traj = backward_euler_solve(
        mass, op, load, initial_state(problem, mesh), tg, alpha=alpha
    )
    if cache is not None:
        cache.store(key, traj.states)
    return traj.states


def _check_disjoint(test_points: np.ndarray, grid: ParameterGrid) -> None:
    """Exact-match scan; any test point equal to a training node is rejected."""
    training = grid.points()
    for row in test_points:
        if np.any(np.all(training == row, axis=1)):
            raise ConfigError(
                f"test point {row.tolist()} coincides with a training grid node"
            )


def run_study(
    config: StudyConfig,
    out_dir: str | os.PathLike | None = None,
    workers: int | None = None,
) -> StudyResult:
    """Execute a sweep and write results.csv, results.dat, summary.json.

    Snapshots are rebuilt only when the training grid changes and the
    compression only when (grid, eps) changes. Full-order test solves are
    cached on disk under the output directory, so repeated studies with
    the same configuration are cheap and produce identical numeric
    columns (the wall-clock column aside).
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is None:
        if config.out_dir is None:
            raise ConfigError("no output directory given (config output.dir or --out)")
        out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_workers = workers if workers is not None else config.workers
    if n_workers < 1:
        raise ConfigError("worker count must be at least 1")

    problem, tg = config.problem, config.tg
    mesh = build_mesh(problem, config.h)
    mass = assemble_mass(mesh)
    gram = assemble_h1_gram(mesh)
    cache = FomCache(out / "fom_cache")

    test_points = config.test_set.build(problem.box)
    n_test = test_points.shape[0]

    def fom_at(i: int) -> np.ndarray:
        return _solve_test_fom(problem, mesh, tg, test_points[i], mass, cache)

    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        test_states = list(pool.map(fom_at, range(n_test)))
    spectra = [correlation_spectrum(states, mass) for states in test_states]

    rows: list[StudyRow] = []
    grid: ParameterGrid | None = None
    grid_key: tuple[int, ...] | None = None
    tt = None
    tt_key = None
    tensor = None

    for value in config.sweep_values:
        start = time.perf_counter()
        eps = config.eps if config.sweep_variable != "eps" else float(value)
        ell_req = config.ell if config.sweep_variable != "ell" else int(value)
        if config.sweep_variable == "delta":
            counts = grid_counts_for_delta(problem.box, float(value))
        else:
            counts = config.grid_counts
        try:
            if grid_key != counts:
                grid = uniform_grid(problem.box, counts)
                if config.test_set.mode != "explicit":
                    _check_disjoint(test_points, grid)
                tensor = generate_snapshots(
                    problem,
                    mesh,
                    tg,
                    grid,
                    workers=n_workers,
                    memory_budget_gb=config.memory_budget_gb,
                )
                grid_key = counts
                tt_key = None
            if tt_key != (counts, eps):
                eps_tilde = frobenius_tolerance(eps, tensor, mass, tg.dt)
                tt, _ = tt_svd(tensor, eps_tilde)
                tt_key = (counts, eps)
            r1 = tt.ranks[0]
            ell_eff = min(ell_req, r1, tg.steps)
            scheme = InterpolationScheme(grid=grid, p=config.p)

            def rom_error(i: int) -> float:
                alpha = test_points[i]
                weights = weight_vectors(alpha, scheme)
                basis = local_basis(tt, weights, ell_eff, alpha=alpha)
                op, load = assemble_operator(mesh, problem, alpha)
                rom_traj = rom_solve(
                    basis, mass, op, load, initial_state(problem, mesh), tg
                )
                return trajectory_error_sq(
                    test_states[i], rom_traj.lift(), gram, tg.dt
                )

            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                errors = list(pool.map(rom_error, range(n_test)))
            e_max = float(np.sqrt(max(errors)))
            e_mean = float(np.sqrt(np.mean(errors)))
            lam = max(float(s[ell_eff:].sum()) for s in spectra)
            rows.append(
                StudyRow(
                    sweep_var=config.sweep_variable,
                    value=float(value),
                    eps=float(eps),
                    delta_max=max(grid.spacings),
                    ell=ell_eff,
                    lambda_tail=lam,
                    e_max=e_max,
                    e_mean=e_mean,
                    r1=int(r1),
                    wall_s=time.perf_counter() - start,
                )
            )
        except ConfigError:
            raise
        except Exception as exc:  # record the failure, keep sweeping
            rows.append(
                StudyRow(
                    sweep_var=config.sweep_variable,
                    value=float(value),
                    eps=float(eps) if eps is not None else float("nan"),
                    delta_max=max(grid.spacings) if grid is not None else float("nan"),
                    ell=int(ell_req) if ell_req is not None else 0,
                    lambda_tail=float("nan"),
                    e_max=float("nan"),
                    e_mean=float("nan"),
                    r1=0,
                    wall_s=time.perf_counter() - start,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )

    csv_path = out / "results.csv"
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write(CSV_HEADER + "\n")
        for row in rows:
            f.write(row.csv_line() + "\n")

    dat_path = out / "results.dat"
    with open(dat_path, "w", encoding="utf-8") as f:
        f.write("# value eps delta_max ell lambda_tail E_max E_mean R1\n")
        for row in rows:
            f.write(
                f"{row.value:.17g} {row.eps:.17g} {row.delta_max:.17g} "
                f"{row.ell} {row.lambda_tail:.17g} {row.e_max:.17g} "
                f"{row.e_mean:.17g} {row.r1}\n"
            )

    summary_path = out / "summary.json"
    summary = {
        "sweep_variable": config.sweep_variable,
        "n_test": n_test,
        "mesh_nodes": mesh.n_nodes,
        "rows": [
            {
                "value": row.value,
                "eps": row.eps,
                "delta_max": row.delta_max,
                "ell": row.ell,
                "lambda_tail": row.lambda_tail,
                "E_max": row.e_max,
                "E_mean": row.e_mean,
                "R1": row.r1,
                "wall_s": row.wall_s,
                "error": row.error,
            }
            for row in rows
        ],
    }
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
    return StudyResult(
        rows=rows, csv_path=csv_path, dat_path=dat_path, summary_path=summary_path
    )


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float


def slope_fit(xs: Sequence[float], ys: Sequence[float]) -> SlopeFit:
    """Least-squares line through (log x, log y).

    Needs at least three strictly positive pairs. A constant y gives
    slope 0 with R^2 defined as 1.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if xs.size < 3:
        raise ValueError("need at least three points for a slope fit")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("slope fit needs strictly positive values")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = ly - ly.mean()
    ss_tot = float(total @ total)
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(slope=float(slope), intercept=float(intercept), r_squared=r2)


def exclude_plateau(
    xs: Sequence[float], ys: Sequence[float], factor: float = 2.0
) -> tuple[np.ndarray, np.ndarray]:
    """Drop the plateau tail before a slope fit.

    The plateau is the maximal small-x run of points with
    y <= factor * min(y). All of it is dropped except its largest-x
    member: that knee point sits on the decay line as much as on the
    plateau, and keeping it means a monotone dataset with no plateau
    loses nothing. A non-positive factor disables the exclusion.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if factor <= 0 or xs.size == 0:
        return xs, ys
    order = np.argsort(xs, kind="stable")
    floor = float(np.min(ys))
    run = []
    for k in order:
        if ys[k] <= factor * floor:
            run.append(k)
        else:
            break
    if run:
        run.pop()  # keep the knee
    drop = np.zeros(xs.size, dtype=bool)
    drop[run] = True
    return xs[~drop], ys[~drop]
