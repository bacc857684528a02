"""Command-line entry points.

Five subcommands cover the pipeline stages: ``snapshots`` builds and
stores the snapshot tensor of a config, ``compress`` turns a stored
tensor into a tensor train at a given tolerance, ``rom`` solves the
reduced model at one parameter value, ``study`` runs a full sweep, and
``slopes`` fits log-log slopes to a study's CSV output.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, LrtdRomError
from .fem import (
    TimeGrid,
    advdiff_problem,
    assemble_mass,
    assemble_operator,
    build_mesh,
    heat_problem,
    initial_state,
)
from .interp import InterpolationScheme, weight_vectors
from .rom import local_basis, rom_solve
from .study import exclude_plateau, load_config, run_study, slope_fit
from .tensors import (
    ParameterGrid,
    generate_snapshots,
    load_tensor,
    save_tensor,
    uniform_grid,
)
from .tt import frobenius_tolerance, load_tt, save_tt, tt_svd


def _problem_from_meta(meta: dict):
    if meta["kind"] == "heat":
        return heat_problem()
    problem = advdiff_problem()
    if meta["nu"] != problem.nu:
        problem = dataclasses.replace(problem, nu=float(meta["nu"]))
    return problem


def _load_meta(directory: Path) -> dict:
    path = directory / "meta.json"
    if not path.exists():
        raise ConfigError(f"no meta.json in {directory}; run `lrtdrom snapshots` first")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _cmd_snapshots(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if config.grid_counts is None:
        raise ConfigError("snapshots needs a grid block (not a delta sweep)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    problem, tg = config.problem, config.tg
    mesh = build_mesh(problem, config.h)
    grid = uniform_grid(problem.box, config.grid_counts)
    tensor = generate_snapshots(
        problem,
        mesh,
        tg,
        grid,
        workers=config.workers,
        memory_budget_gb=config.memory_budget_gb,
    )
    save_tensor(out / "snapshots.lrt", tensor)
    meta = {
        "kind": problem.kind,
        "nu": problem.nu,
        "h": config.h,
        "cell": mesh.cell,
        "M": mesh.n_nodes,
        "T": tg.final_time,
        "N": tg.steps,
        "p": config.p,
        "axes": [a.tolist() for a in grid.axes],
    }
    with open(out / "meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
    print(f"wrote {out / 'snapshots.lrt'} shape {tensor.shape}")
    print(f"wrote {out / 'meta.json'}")
    return 0


def _cmd_compress(args: argparse.Namespace) -> int:
    directory = Path(args.dir)
    meta = _load_meta(directory)
    tensor = load_tensor(directory / "snapshots.lrt")
    problem = _problem_from_meta(meta)
    mesh = build_mesh(problem, float(meta["h"]))
    tg = TimeGrid(final_time=float(meta["T"]), steps=int(meta["N"]))
    mass = assemble_mass(mesh)
    eps_tilde = frobenius_tolerance(args.eps, tensor, mass, tg.dt)
    tt, report = tt_svd(tensor, eps_tilde)
    tt_path = directory / f"tt_eps{args.eps:g}.lrtt"
    save_tt(tt_path, tt)
    report_path = directory / f"tt_eps{args.eps:g}.json"
    with open(report_path, "w", encoding="utf-8") as f:
        json.dump(
            {
                "eps": args.eps,
                "eps_tilde": report.eps_tilde,
                "tensor_norm": report.tensor_norm,
                "ranks": list(report.ranks),
                "discarded_energy": list(report.discarded_energy),
                "error_bound": report.error_bound,
            },
            f,
            indent=2,
        )
    print(f"wrote {tt_path} ranks {tt.ranks}")
    print(f"wrote {report_path}")
    return 0


def _find_tt(directory: Path, eps: float | None) -> Path:
    if eps is not None:
        path = directory / f"tt_eps{eps:g}.lrtt"
        if not path.exists():
            raise ConfigError(f"{path} not found; run `lrtdrom compress --eps {eps:g}`")
        return path
    candidates = sorted(directory.glob("tt_eps*.lrtt"))
    if len(candidates) != 1:
        raise ConfigError(
            f"{len(candidates)} compressed tensors in {directory}; pass --eps to pick one"
        )
    return candidates[0]


def _cmd_rom(args: argparse.Namespace) -> int:
    directory = Path(args.dir)
    meta = _load_meta(directory)
    alpha = np.array([float(v) for v in args.alpha.split(",")])
    tt = load_tt(_find_tt(directory, args.eps))
    problem = _problem_from_meta(meta)
    mesh = build_mesh(problem, float(meta["h"]))
    tg = TimeGrid(final_time=float(meta["T"]), steps=int(meta["N"]))
    grid = ParameterGrid(axes=tuple(np.asarray(a) for a in meta["axes"]))
    scheme = InterpolationScheme(grid=grid, p=int(meta["p"]))
    weights = weight_vectors(alpha, scheme)
    basis = local_basis(tt, weights, args.ell, alpha=alpha)
    mass = assemble_mass(mesh)
    op, load = assemble_operator(mesh, problem, alpha)
    traj = rom_solve(basis, mass, op, load, initial_state(problem, mesh), tg)
    out_path = directory / ("rom_" + "_".join(f"{v:g}" for v in alpha) + ".npz")
    np.savez(
        out_path,
        alpha=alpha,
        ell=args.ell,
        coefficients=traj.coefficients,
        basis=basis.basis,
    )
    final = traj.lift()[:, -1]
    print(f"wrote {out_path}")
    print(
        f"alpha=({args.alpha}) ell={args.ell} "
        f"final-state range [{final.min():.6g}, {final.max():.6g}]"
    )
    return 0


def _cmd_study(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    result = run_study(config, out_dir=args.out, workers=args.workers)
    for row in result.rows:
        status = f"  [{row.error}]" if row.error else ""
        print(
            f"{row.sweep_var}={row.value:g} eps={row.eps:g} ell={row.ell} "
            f"E_max={row.e_max:.6g} E_mean={row.e_mean:.6g} R1={row.r1}{status}"
        )
    print(f"wrote {result.csv_path}")
    print(f"wrote {result.dat_path}")
    print(f"wrote {result.summary_path}")
    return 0


_X_COLUMN = {"eps": "eps", "delta": "delta_max", "ell": "lambda_tail"}


def _cmd_slopes(args: argparse.Namespace) -> int:
    with open(args.csv, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f if line.strip()]
    header = lines[0].split(",")
    x_col = _X_COLUMN[args.var]
    try:
        xi, yi = header.index(x_col), header.index("E_max")
    except ValueError as exc:
        raise ConfigError(f"CSV is missing expected columns: {exc}") from exc
    xs, ys = [], []
    for line in lines[1:]:
        parts = line.split(",")
        x, y = float(parts[xi]), float(parts[yi])
        if np.isfinite(x) and np.isfinite(y):
            xs.append(x)
            ys.append(y)
    try:
        xk, yk = exclude_plateau(xs, ys, factor=args.floor_factor)
        fit = slope_fit(xk, yk)
    except ValueError as exc:
        raise ConfigError(f"cannot fit a slope to {args.csv}: {exc}") from exc
    print(
        f"slope={fit.slope:.4f} intercept={fit.intercept:.4f} "
        f"r2={fit.r_squared:.4f} points={xk.size}/{len(xs)}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrtdrom",
        description="Tensor-compressed reduced-order models for parametric parabolic problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("snapshots", help="generate and store the snapshot tensor")
    p.add_argument("--config", required=True, help="study config (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_snapshots)

    p = sub.add_parser("compress", help="tensor-train compression of stored snapshots")
    p.add_argument("--eps", type=float, required=True, help="trajectory-norm tolerance")
    p.add_argument("--dir", default=".", help="directory holding snapshots.lrt")
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("rom", help="solve the reduced model at one parameter value")
    p.add_argument("--alpha", required=True, help="comma-separated parameter values")
    p.add_argument("--ell", type=int, required=True, help="reduced basis size")
    p.add_argument("--dir", default=".", help="directory holding the compressed tensor")
    p.add_argument("--eps", type=float, default=None, help="pick the tensor compressed at this tolerance")
    p.set_defaults(func=_cmd_rom)

    p = sub.add_parser("study", help="run a sweep study from a config")
    p.add_argument("--config", required=True, help="study config (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None, help="worker threads")
    p.set_defaults(func=_cmd_study)

    p = sub.add_parser("slopes", help="log-log slope fit over a results CSV")
    p.add_argument("--csv", required=True, help="results.csv from a study")
    p.add_argument("--var", required=True, choices=sorted(_X_COLUMN), help="swept variable")
    p.add_argument(
        "--floor-factor",
        type=float,
        default=2.0,
        help="plateau exclusion factor (0 disables)",
    )
    p.set_defaults(func=_cmd_slopes)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LrtdRomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
