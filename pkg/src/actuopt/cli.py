"""Configuration-driven command-line front end.

Subcommands: simulate, gradcheck, optimize, gridsearch, oracle-compare.
Outputs are CSV time series / landscapes plus a summary.json per run.
Exit codes: 0 success, 1 contract failure (tolerance violation, blow-up,
non-convergence), 2 configuration or usage error.

All files are written atomically (temp file in the target directory, then
rename). CSV numbers use 17 significant digits so 64-bit floats round-trip
exactly; line endings are LF.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from .adjoint_grad import adjoint_compare, duality_check, gradient_fd_check
from .beam_model import greens_apply, stiffness_solve
from .config import (
    ConfigError,
    build_problem,
    canonical_text,
    control_series,
    load_config,
)
from .core_system import BlowUpError, TimeGrid, energy_series, solve_forward
from .optimizer import grid_search_r, optimize

DUALITY_TOL = 1e-10
FD_TOL = 1e-5
ORACLE_TOL = 1e-2


def _fmt(x):
    return "%.17g" % float(x)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _fmt(v)


def _write_text(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path, header, rows, trailer=None):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    if trailer is not None:
        lines.append(trailer)
    _write_text(path, "\n".join(lines) + "\n")


def _json_text(obj):
    return json.dumps(obj, indent=2) + "\n"


def _finite_or_none(x):
    x = float(x)
    return x if np.isfinite(x) else None


def _summary(cfg, command, status, converged, wall, files, threads, extra=None):
    out = {
        "command": command,
        "model": cfg.model,
        "status": status,
        "converged": converged,
        "wall_time_s": wall,
        "threads": threads,
    }
    if extra:
        out.update(extra)
    out["files"] = files
    out["config_text"] = canonical_text(cfg)
    return out


def _probe_columns(cfg, prob, traj):
    """Resolve probe points to (header names, displacement column arrays)."""
    disc = prob["disc"]
    m = disc.n_space
    names = []
    cols = []
    if cfg.model == "beam":
        params = cfg.beam
        xp = np.concatenate(([0.0], params.nodes, [params.length]))
        for (px,) in prob["probe_pts"]:
            names.append("w_at_%g" % px)
            col = np.array([
                np.interp(px, xp, np.concatenate(([0.0], row, [0.0])))
                for row in traj[:, :m]
            ])
            cols.append(col)
    else:
        idx = disc.meta["free_idx"]
        xc = disc.meta["xcoord"][idx]
        yc = disc.meta["ycoord"][idx]
        for (px, py) in prob["probe_pts"]:
            j = int(np.argmin((xc - px) ** 2 + (yc - py) ** 2))
            names.append("w_at_%g_%g" % (px, py))
            cols.append(traj[:, j].copy())
    return names, cols


def cmd_simulate(cfg, out_dir, threads):
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    disc, grid = prob["disc"], prob["grid"]
    status = "ok"
    exit_code = 0
    trailer = None
    try:
        traj = solve_forward(disc, prob["x0"], prob["u0"], prob["r_init"], grid)
        times = grid.times
    except BlowUpError as exc:
        traj = exc.partial
        times = grid.times[: traj.shape[0]]
        trailer = f"# truncated at step {exc.step}, t = {_fmt(exc.time)}"
        status = "blow_up"
        exit_code = 1
        print(f"actuopt simulate: {exc}", file=sys.stderr)

    energy = energy_series(disc, traj)
    names, cols = _probe_columns(cfg, prob, traj)
    rows = list(zip(times, energy, *cols))
    _write_csv(os.path.join(out_dir, "trajectory.csv"),
               ["t", "energy"] + names, rows, trailer)

    files = ["trajectory.csv", "summary.json"]
    summary = _summary(
        cfg, "simulate", status, None, time.perf_counter() - t0, files, threads,
        extra={
            "j_history": None,
            "final_residuals": None,
            "n_steps_completed": int(traj.shape[0] - 1),
        },
    )
    _write_text(os.path.join(out_dir, "summary.json"), _json_text(summary))
    return exit_code


def cmd_gradcheck(cfg, out_dir, threads):
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    disc, grid, cost = prob["disc"], prob["grid"], prob["cost"]
    x0, r = prob["x0"], prob["r_init"]
    u = prob["u0"]
    if not np.any(u):
        # a zero control would make J independent of r; exercise the design
        # gradient with a deterministic unit sine instead
        u = np.sin(2.0 * np.pi * grid.times / grid.t_final)

    x_traj = solve_forward(disc, x0, u, r, grid)
    rng = np.random.default_rng(cfg.seed)
    duality_max = 0.0
    for _ in range(5):
        u_tilde = rng.standard_normal(u.size)
        x_hat = rng.standard_normal(x_traj.shape)
        duality_max = max(
            duality_max, duality_check(disc, x_traj, r, u_tilde, x_hat, grid)
        )
    fd = gradient_fd_check(
        disc, cost, x0, u, r, grid,
        n_directions=cfg.n_directions, seed=cfg.seed, corrupt=cfg.corrupt,
    )

    failed = []
    if not duality_max <= DUALITY_TOL:
        failed.append("duality")
    if not fd["fd_u_rel"] <= FD_TOL:
        failed.append("fd_u")
    if not fd["fd_r_rel"] <= FD_TOL:
        failed.append("fd_r")

    report = {
        "duality_rel": duality_max,
        "fd_u_rel": fd["fd_u_rel"],
        "fd_r_rel": fd["fd_r_rel"],
        "j": fd["j"],
        "tolerances": {"duality": DUALITY_TOL, "fd": FD_TOL},
        "pass": not failed,
        "failed_checks": failed,
    }
    _write_text(os.path.join(out_dir, "gradcheck.json"), _json_text(report))

    files = ["gradcheck.json", "summary.json"]
    status = "ok" if not failed else "check_failed"
    summary = _summary(
        cfg, "gradcheck", status, None, time.perf_counter() - t0, files, threads,
        extra={"j_history": None, "final_residuals": None},
    )
    _write_text(os.path.join(out_dir, "summary.json"), _json_text(summary))
    if failed:
        print(f"actuopt gradcheck: failed checks: {', '.join(failed)}",
              file=sys.stderr)
        return 1
    return 0


def cmd_optimize(cfg, out_dir, threads):
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    try:
        run = optimize(
            prob["disc"], prob["cost"], prob["x0"], prob["u0"], prob["r_init"],
            prob["pspec"], cfg.opt, prob["grid"],
        )
    except BlowUpError as exc:
        # the initial point already explodes; there is no iterate to report
        summary = _summary(
            cfg, "optimize", "blow_up", False, time.perf_counter() - t0,
            ["summary.json"], threads,
            extra={"blow_up_step": exc.step, "blow_up_time": exc.time},
        )
        _write_text(os.path.join(out_dir, "summary.json"), _json_text(summary))
        print(f"actuopt optimize: forward solve blew up at the initial point "
              f"(step {exc.step}, t = {exc.time:g})", file=sys.stderr)
        return 1

    r_dim = run.r.size
    hist_cols = (["iter", "j", "res_u", "res_r"]
                 + [f"r{c + 1}" for c in range(r_dim)]
                 + ["alpha_u", "alpha_r", "backtracks", "u_norm"])
    hist_rows = [[row[c] for c in hist_cols] for row in run.history]
    _write_csv(os.path.join(out_dir, "optim_history.csv"), hist_cols, hist_rows)

    _write_csv(os.path.join(out_dir, "optimal_u.csv"), ["t", "u"],
               list(zip(prob["grid"].times, run.u)))

    r_report = {
        "r": [float(v) for v in run.r],
        "j_final": run.j_final,
        "converged": run.converged,
        "status": run.status,
        "n_iters": run.n_iters,
    }
    _write_text(os.path.join(out_dir, "optimal_r.json"), _json_text(r_report))

    last = run.history[-1]
    files = ["optim_history.csv", "optimal_u.csv", "optimal_r.json", "summary.json"]
    summary = _summary(
        cfg, "optimize", run.status, run.converged,
        time.perf_counter() - t0, files, threads,
        extra={
            "j_history": [row["j"] for row in run.history],
            "final_residuals": {"res_u": last["res_u"], "res_r": last["res_r"]},
        },
    )
    _write_text(os.path.join(out_dir, "summary.json"), _json_text(summary))
    if not run.converged:
        print(f"actuopt optimize: did not converge (status: {run.status})",
              file=sys.stderr)
        return 1
    return 0


def cmd_gridsearch(cfg, out_dir, threads):
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    r_dim = prob["r_init"].size
    try:
        best, table = grid_search_r(
            prob["disc"], prob["cost"], prob["x0"], prob["pspec"],
            n_grid=cfg.n_grid, grid=prob["grid"], threads=threads,
        )
    except RuntimeError as exc:
        print(f"actuopt gridsearch: {exc}", file=sys.stderr)
        summary = _summary(cfg, "gridsearch", "failed", None,
                           time.perf_counter() - t0, ["summary.json"], threads,
                           extra={"j_history": None, "final_residuals": None})
        _write_text(os.path.join(out_dir, "summary.json"), _json_text(summary))
        return 1

    header = [f"r{c + 1}" for c in range(r_dim)] + ["j", "converged"]
    _write_csv(os.path.join(out_dir, "landscape.csv"), header, table)

    best_j = min(row[r_dim] for row in table
                 if row[r_dim + 1] and np.isfinite(row[r_dim]))
    files = ["landscape.csv", "summary.json"]
    summary = _summary(
        cfg, "gridsearch", "ok", None, time.perf_counter() - t0, files, threads,
        extra={
            "j_history": None,
            "final_residuals": None,
            "best_r": [float(v) for v in best],
            "best_j": best_j,
        },
    )
    _write_text(os.path.join(out_dir, "summary.json"), _json_text(summary))
    return 0


def _greens_gap(params, n_cells):
    """Max gap between Green's quadrature and the direct 4th-order solve."""
    p = dataclasses.replace(params, n_cells=n_cells)
    xi = p.nodes
    f = np.sin(np.pi * xi / p.length) + xi * (p.length - xi)
    return float(np.max(np.abs(greens_apply(p, f) - stiffness_solve(p, f))))


def cmd_oracle_compare(cfg, out_dir, threads):
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    disc, cost = prob["disc"], prob["cost"]
    # refine the time grid: the oracle and the discrete adjoint only have to
    # agree up to time-discretization error
    grid2 = TimeGrid(cfg.t_final, 2 * cfg.n_steps)
    u2 = control_series(cfg, grid2.times)
    x_traj = solve_forward(disc, prob["x0"], u2, prob["r_init"], grid2)
    rel = adjoint_compare(disc, cost, x_traj, prob["r_init"], grid2)
    ok = bool(rel <= ORACLE_TOL)

    greens = None
    if cfg.model == "beam" and cfg.beam.ei == 1.0 and cfg.beam.k == 0.0:
        e_h = _greens_gap(cfg.beam, cfg.beam.n_cells)
        e_h2 = _greens_gap(cfg.beam, 2 * cfg.beam.n_cells)
        g_ok = e_h < 1e-12 or e_h2 <= 0.35 * e_h
        greens = {
            "e_h": e_h,
            "e_half_h": e_h2,
            "ratio": e_h2 / e_h if e_h > 0 else 0.0,
            "pass": bool(g_ok),
        }
        ok = ok and g_ok

    report = {
        "adjoint_rel_linf": _finite_or_none(rel),
        "tol": ORACLE_TOL,
        "n_steps_used": grid2.n_steps,
        "greens": greens,
        "pass": ok,
    }
    _write_text(os.path.join(out_dir, "oracle_compare.json"), _json_text(report))

    files = ["oracle_compare.json", "summary.json"]
    summary = _summary(
        cfg, "oracle-compare", "ok" if ok else "check_failed", None,
        time.perf_counter() - t0, files, threads,
        extra={"j_history": None, "final_residuals": None},
    )
    _write_text(os.path.join(out_dir, "summary.json"), _json_text(summary))
    if not ok:
        print(f"actuopt oracle-compare: relative error {rel:.3e} "
              f"(tolerance {ORACLE_TOL:g})", file=sys.stderr)
        return 1
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "gradcheck": cmd_gradcheck,
    "optimize": cmd_optimize,
    "gridsearch": cmd_gridsearch,
    "oracle-compare": cmd_oracle_compare,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="actuopt",
        description="Optimal control and actuator design for semi-linear "
                    "beam and wave models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "integrate the forward model and write a trajectory CSV",
        "gradcheck": "verify adjoint gradients against duality and finite "
                     "differences",
        "optimize": "run the projected-gradient solver for (u, r)",
        "gridsearch": "sweep actuator positions with per-point control solves",
        "oracle-compare": "compare the discrete adjoint against the "
                          "continuous-adjoint oracle",
    }
    for name in _COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="path to config file")
        p.add_argument("--out", default=None,
                       help="output directory (overrides [output] out_dir)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes for gridsearch "
                            "(default: ACTUOPT_THREADS or 1)")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 2

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"actuopt: config error: {exc}", file=sys.stderr)
        return 2

    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)

    threads = args.threads
    if threads is None:
        env = os.environ.get("ACTUOPT_THREADS", "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError:
                print(f"actuopt: ACTUOPT_THREADS must be an integer, "
                      f"got {env!r}", file=sys.stderr)
                return 2
        else:
            threads = 1
    if threads < 1:
        print("actuopt: --threads must be >= 1", file=sys.stderr)
        return 2

    os.makedirs(cfg.out_dir, exist_ok=True)
    return _COMMANDS[args.command](cfg, cfg.out_dir, threads)


if __name__ == "__main__":
    sys.exit(main())
