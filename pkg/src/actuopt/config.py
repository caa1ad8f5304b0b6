"""Plain sectioned key-value experiment configuration.

Grammar: `[section]` headers, `key = value` lines, `#` comments, blank
lines ignored. Every key belongs to a fixed per-section schema; unknown
sections or keys, duplicates, type errors, and cross-field violations are
rejected with the offending line number. All keys have defaults, so the
minimal valid file is just

    [run]
    model = beam

The canonical serialization (canonical_text) writes every key of every
applicable section in a fixed order; it reparses to an equal
ExperimentConfig, which is the round-trip contract echoed in summary.json.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .beam_model import BeamParams, assemble_beam, BeamActuator, beam_b
from .core_system import CostSpec, TimeGrid
from .optimizer import OptimizerConfig, ProjectionSpec
from .wave_model import WaveParams, assemble_wave


class ConfigError(ValueError):
    """Configuration file rejected; message carries line/field context."""


@dataclass
class ExperimentConfig:
    model: str
    seed: int
    t_final: float
    n_steps: int
    beam: BeamParams
    wave: WaveParams
    act_width: float
    r_init: object  # "center" or tuple of floats
    q1: str
    q2: str
    r_weight: float
    init_kind: str
    init_amplitude: float
    init_mode: int
    init_center: tuple
    init_sigma: float
    control_kind: str
    control_amplitude: float
    control_freq: float
    r_ad: float
    r_box: object  # "auto" or flat tuple (lo1, hi1[, lo2, hi2])
    opt: OptimizerConfig
    n_directions: int
    corrupt: bool
    n_grid: int
    out_dir: str
    probe: object  # "center" or tuple of floats (beam) / tuple of pairs (wave)


def _f(s):
    return float(s)


def _i(s):
    if not s.lstrip("+-").isdigit():
        raise ValueError(f"expected an integer, got {s!r}")
    return int(s)


def _b(s):
    low = s.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean (true/false), got {s!r}")


def _s(s):
    return s


_SCHEMA = {
    "run": {"model": _s, "seed": _i},
    "time": {"t_final": _f, "n_steps": _i},
    "beam": {
        "ei": _f, "rho_a": _f, "length": _f, "k": _f, "alpha": _f,
        "mu": _f, "c_d": _f, "n_cells": _i,
    },
    "wave": {
        "lx": _f, "ly": _f, "nx": _i, "ny": _i, "gamma1_edges": _s,
        "nonlinearity": _s, "kg_exponent": _i,
    },
    "actuator": {"width": _f, "r_init": _s},
    "cost": {"q1": _s, "q2": _s, "r_weight": _f},
    "init": {"kind": _s, "amplitude": _f, "mode": _i, "center": _s, "sigma": _f},
    "control": {"kind": _s, "amplitude": _f, "freq": _f},
    "admissible": {"r_ad": _f, "r_box": _s},
    "optimizer": {"max_iters": _i, "tol_grad": _f, "armijo_c": _f, "backtrack": _f},
    "gradcheck": {"n_directions": _i, "corrupt": _b},
    "gridsearch": {"n_grid": _i},
    "output": {"out_dir": _s, "probe": _s},
}


def _floats(spec, what, count=None):
    parts = [p.strip() for p in spec.split(",") if p.strip() != ""]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from None
    if count is not None and len(vals) != count:
        raise ConfigError(f"{what}: expected {count} number(s), got {len(vals)}")
    return vals


def parse_config_text(text, source="<config>"):
    """Parse configuration text into an ExperimentConfig (strict)."""
    raw = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{lineno}"
        if body.startswith("[") and body.endswith("]"):
            section = body[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(
                    f"{where}: unknown section [{section}] "
                    f"(known: {', '.join(sorted(_SCHEMA))})"
                )
            continue
        if "=" not in body:
            raise ConfigError(f"{where}: expected 'key = value', got {body!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside of any [section]")
        key, _, val = body.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _SCHEMA[section]:
            raise ConfigError(
                f"{where}: unknown key {key!r} in section [{section}] "
                f"(known: {', '.join(sorted(_SCHEMA[section]))})"
            )
        if (section, key) in raw:
            raise ConfigError(f"{where}: duplicate key {key!r} in section [{section}]")
        try:
            raw[(section, key)] = (_SCHEMA[section][key](val), lineno)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None

    def take(section, key, default):
        return raw.pop((section, key), (default, None))[0]

    model = take("run", "model", None)
    if model is None:
        raise ConfigError(f"{source}: missing required key 'model' in [run]")
    if model not in ("beam", "wave"):
        raise ConfigError(f"{source}: model must be 'beam' or 'wave', got {model!r}")
    other = "wave" if model == "beam" else "beam"
    stray = [k for (sec, k) in raw if sec == other]
    if stray:
        raise ConfigError(
            f"{source}: section [{other}] is invalid when model = {model}"
        )

    seed = take("run", "seed", 0)
    t_final = take("time", "t_final", 2.0)
    n_steps = take("time", "n_steps", 400)

    try:
        beam = BeamParams(
            ei=take("beam", "ei", 1.0),
            rho_a=take("beam", "rho_a", 1.0),
            length=take("beam", "length", 1.0),
            k=take("beam", "k", 1.0),
            alpha=take("beam", "alpha", 1.0),
            mu=take("beam", "mu", 0.1),
            c_d=take("beam", "c_d", 0.01),
            n_cells=take("beam", "n_cells", 64),
        ) if model == "beam" else None
        wave = WaveParams(
            lx=take("wave", "lx", 1.0),
            ly=take("wave", "ly", 1.0),
            nx=take("wave", "nx", 24),
            ny=take("wave", "ny", 24),
            gamma1_edges=tuple(
                e.strip()
                for e in take("wave", "gamma1_edges", "").split(",")
                if e.strip()
            ),
            nonlinearity=take("wave", "nonlinearity", "sine_gordon"),
            kg_exponent=take("wave", "kg_exponent", 2),
        ) if model == "wave" else None
    except ValueError as exc:
        raise ConfigError(f"{source}: [{model}] section: {exc}") from None

    r_dim = 1 if model == "beam" else 2
    if model == "beam":
        domain = (beam.length,)
    else:
        domain = (wave.lx, wave.ly)

    act_width = take("actuator", "width", 0.05 if model == "beam" else 0.1)
    if not (act_width > 0.0):
        raise ConfigError(f"{source}: actuator width must be positive")
    r_init_s = take("actuator", "r_init", "center")
    r_init = "center" if r_init_s == "center" else _floats(
        r_init_s, f"{source}: [actuator] r_init", r_dim
    )

    q1 = take("cost", "q1", "uniform")
    q2 = take("cost", "q2", "uniform")
    for name, preset in (("q1", q1), ("q2", q2)):
        _check_preset(preset, model, f"{source}: [cost] {name}")
    r_weight = take("cost", "r_weight", 1.0)
    if not (r_weight > 0.0 and math.isfinite(r_weight)):
        raise ConfigError(f"{source}: [cost] r_weight must be positive")

    init_kind = take("init", "kind", "sine")
    if init_kind not in ("sine", "gaussian", "zero"):
        raise ConfigError(
            f"{source}: [init] kind must be sine, gaussian, or zero, got {init_kind!r}"
        )
    init_amplitude = take("init", "amplitude", 1.0)
    init_mode = take("init", "mode", 1)
    if init_mode < 1:
        raise ConfigError(f"{source}: [init] mode must be >= 1")
    default_center = ",".join(repr(d / 2.0) for d in domain)
    init_center = _floats(
        take("init", "center", default_center), f"{source}: [init] center", r_dim
    )
    init_sigma = take("init", "sigma", 0.1)
    if not (init_sigma > 0.0):
        raise ConfigError(f"{source}: [init] sigma must be positive")

    control_kind = take("control", "kind", "zero")
    if control_kind not in ("zero", "sine"):
        raise ConfigError(
            f"{source}: [control] kind must be zero or sine, got {control_kind!r}"
        )
    control_amplitude = take("control", "amplitude", 1.0)
    control_freq = take("control", "freq", 1.0)

    r_ad = take("admissible", "r_ad", 10.0)
    if not (r_ad > 0.0 and math.isfinite(r_ad)):
        raise ConfigError(f"{source}: [admissible] r_ad must be positive")
    r_box_s = take("admissible", "r_box", "auto")
    if r_box_s == "auto":
        r_box = "auto"
    else:
        r_box = _floats(r_box_s, f"{source}: [admissible] r_box", 2 * r_dim)
        for c in range(r_dim):
            lo, hi = r_box[2 * c], r_box[2 * c + 1]
            if not lo <= hi:
                raise ConfigError(
                    f"{source}: [admissible] r_box component {c + 1} empty (lo > hi)"
                )
            if lo < act_width or hi > domain[c] - act_width:
                raise ConfigError(
                    f"{source}: [admissible] r_box component {c + 1} lets the "
                    f"actuator support leave the domain (valid range "
                    f"[{act_width}, {domain[c] - act_width}])"
                )

    try:
        opt = OptimizerConfig(
            max_iters=take("optimizer", "max_iters", 500),
            tol_grad=take("optimizer", "tol_grad", 2e-6),
            armijo_c=take("optimizer", "armijo_c", 1e-4),
            backtrack=take("optimizer", "backtrack", 0.5),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: [optimizer] section: {exc}") from None

    n_directions = take("gradcheck", "n_directions", 10)
    if n_directions < 1:
        raise ConfigError(f"{source}: [gradcheck] n_directions must be >= 1")
    corrupt = take("gradcheck", "corrupt", False)
    n_grid = take("gridsearch", "n_grid", 64)

    out_dir = take("output", "out_dir", "runs/out")
    probe_s = take("output", "probe", "center")
    if probe_s == "center":
        probe = "center"
    elif model == "beam":
        probe = _floats(probe_s, f"{source}: [output] probe")
        if not probe:
            raise ConfigError(f"{source}: [output] probe is empty")
    else:
        probe = tuple(
            _floats(pair, f"{source}: [output] probe", 2)
            for pair in probe_s.split(";")
            if pair.strip()
        )
        if not probe:
            raise ConfigError(f"{source}: [output] probe is empty")

    if raw:
        (sec, key), (_, lineno) = next(iter(raw.items()))
        raise ConfigError(f"{source}:{lineno}: key {key!r} not consumed from [{sec}]")

    cfg = ExperimentConfig(
        model=model, seed=seed, t_final=t_final, n_steps=n_steps, beam=beam,
        wave=wave, act_width=act_width, r_init=r_init, q1=q1, q2=q2,
        r_weight=r_weight, init_kind=init_kind, init_amplitude=init_amplitude,
        init_mode=init_mode, init_center=init_center, init_sigma=init_sigma,
        control_kind=control_kind, control_amplitude=control_amplitude,
        control_freq=control_freq, r_ad=r_ad, r_box=r_box, opt=opt,
        n_directions=n_directions, corrupt=corrupt, n_grid=n_grid,
        out_dir=out_dir, probe=probe,
    )
    try:
        TimeGrid(cfg.t_final, cfg.n_steps)
    except ValueError as exc:
        raise ConfigError(f"{source}: [time] section: {exc}") from None
    return cfg


def _check_preset(preset, model, where):
    if preset in ("uniform", "zero"):
        return
    if preset.startswith("gaussian(") and preset.endswith(")"):
        n_args = 2 if model == "beam" else 3
        _floats(preset[len("gaussian("):-1], f"{where}: gaussian arguments", n_args)
        return
    raise ConfigError(
        f"{where}: unknown preset {preset!r} "
        "(use uniform, zero, or gaussian(center...,width))"
    )


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text, source=str(path))


def canonical_text(cfg):
    """Serialize with every applicable key explicit, in schema order."""
    lines = []

    def sec(name, pairs):
        lines.append(f"[{name}]")
        for k, v in pairs:
            lines.append(f"{k} = {v}")
        lines.append("")

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(v)
        return str(v)

    def fmt_tuple(t):
        return ",".join(repr(float(x)) for x in t)

    sec("run", [("model", cfg.model), ("seed", cfg.seed)])
    sec("time", [("t_final", fmt(cfg.t_final)), ("n_steps", cfg.n_steps)])
    if cfg.model == "beam":
        b = cfg.beam
        sec("beam", [
            ("ei", fmt(b.ei)), ("rho_a", fmt(b.rho_a)), ("length", fmt(b.length)),
            ("k", fmt(b.k)), ("alpha", fmt(b.alpha)), ("mu", fmt(b.mu)),
            ("c_d", fmt(b.c_d)), ("n_cells", b.n_cells),
        ])
    else:
        w = cfg.wave
        sec("wave", [
            ("lx", fmt(w.lx)), ("ly", fmt(w.ly)), ("nx", w.nx), ("ny", w.ny),
            ("gamma1_edges", ",".join(w.gamma1_edges)),
            ("nonlinearity", w.nonlinearity), ("kg_exponent", w.kg_exponent),
        ])
    r_init = cfg.r_init if cfg.r_init == "center" else fmt_tuple(cfg.r_init)
    sec("actuator", [("width", fmt(cfg.act_width)), ("r_init", r_init)])
    sec("cost", [("q1", cfg.q1), ("q2", cfg.q2), ("r_weight", fmt(cfg.r_weight))])
    sec("init", [
        ("kind", cfg.init_kind), ("amplitude", fmt(cfg.init_amplitude)),
        ("mode", cfg.init_mode), ("center", fmt_tuple(cfg.init_center)),
        ("sigma", fmt(cfg.init_sigma)),
    ])
    sec("control", [
        ("kind", cfg.control_kind), ("amplitude", fmt(cfg.control_amplitude)),
        ("freq", fmt(cfg.control_freq)),
    ])
    r_box = cfg.r_box if cfg.r_box == "auto" else fmt_tuple(cfg.r_box)
    sec("admissible", [("r_ad", fmt(cfg.r_ad)), ("r_box", r_box)])
    sec("optimizer", [
        ("max_iters", cfg.opt.max_iters), ("tol_grad", fmt(cfg.opt.tol_grad)),
        ("armijo_c", fmt(cfg.opt.armijo_c)), ("backtrack", fmt(cfg.opt.backtrack)),
    ])
    sec("gradcheck", [("n_directions", cfg.n_directions), ("corrupt", fmt(cfg.corrupt))])
    sec("gridsearch", [("n_grid", cfg.n_grid)])
    if cfg.probe == "center":
        probe = "center"
    elif cfg.model == "beam":
        probe = fmt_tuple(cfg.probe)
    else:
        probe = ";".join(fmt_tuple(pair) for pair in cfg.probe)
    sec("output", [("out_dir", cfg.out_dir), ("probe", probe)])
    return "\n".join(lines)


def _eval_preset(preset, model, coords):
    """Evaluate a q1/q2 preset on coordinate arrays.

    coords: (xi,) for the beam, (x, y) for the wave.
    """
    if preset == "uniform":
        return np.ones_like(coords[0])
    if preset == "zero":
        return np.zeros_like(coords[0])
    args = _floats(preset[len("gaussian("):-1], "gaussian preset")
    if model == "beam":
        c, width = args
        d2 = (coords[0] - c) ** 2
    else:
        cx, cy, width = args
        d2 = (coords[0] - cx) ** 2 + (coords[1] - cy) ** 2
    return np.exp(-d2 / (2.0 * width**2))


def control_series(cfg, times):
    """Sample the configured control signal on a vector of time nodes."""
    if cfg.control_kind == "zero":
        return np.zeros_like(np.asarray(times, dtype=float))
    return cfg.control_amplitude * np.sin(
        2.0 * np.pi * cfg.control_freq * np.asarray(times, dtype=float)
    )


def build_problem(cfg):
    """Materialize runtime objects for a parsed configuration.

    Returns a dict with disc, grid, cost, x0, u0, pspec, r_init (array),
    and probe points resolved to coordinates.
    """
    grid = TimeGrid(cfg.t_final, cfg.n_steps)
    if cfg.model == "beam":
        params = cfg.beam
        disc = assemble_beam(params, act_width=cfg.act_width)
        xi = params.nodes
        q1 = _eval_preset(cfg.q1, "beam", (xi,))
        q2 = _eval_preset(cfg.q2, "beam", (xi,))
        m = disc.n_space
        x0 = np.zeros(disc.n_dof)
        if cfg.init_kind == "sine":
            x0[:m] = cfg.init_amplitude * np.sin(
                cfg.init_mode * np.pi * xi / params.length
            )
        elif cfg.init_kind == "gaussian":
            x0[:m] = cfg.init_amplitude * np.exp(
                -((xi - cfg.init_center[0]) ** 2) / (2.0 * cfg.init_sigma**2)
            )
        if cfg.r_box == "auto":
            lo = cfg.act_width + params.dx
            hi = params.length - cfg.act_width - params.dx
            box = np.array([[lo, hi]])
        else:
            box = np.asarray(cfg.r_box, dtype=float).reshape(1, 2)
        domain_center = (params.length / 2.0,)
        probe_pts = (
            (domain_center,) if cfg.probe == "center"
            else tuple((p,) for p in cfg.probe)
        )
    else:
        params = cfg.wave
        disc = assemble_wave(params, act_width=cfg.act_width)
        xc = disc.meta["xcoord"]
        yc = disc.meta["ycoord"]
        q1 = _eval_preset(cfg.q1, "wave", (xc, yc))
        q2 = _eval_preset(cfg.q2, "wave", (xc, yc))
        m = disc.n_space
        idx = disc.meta["free_idx"]
        xf = xc[idx]
        yf = yc[idx]
        x0 = np.zeros(disc.n_dof)
        if cfg.init_kind == "sine":
            x0[:m] = cfg.init_amplitude * (
                np.sin(cfg.init_mode * np.pi * xf / params.lx)
                * np.sin(cfg.init_mode * np.pi * yf / params.ly)
            )
        elif cfg.init_kind == "gaussian":
            d2 = (xf - cfg.init_center[0]) ** 2 + (yf - cfg.init_center[1]) ** 2
            x0[:m] = cfg.init_amplitude * np.exp(-d2 / (2.0 * cfg.init_sigma**2))
        if cfg.r_box == "auto":
            box = np.array([
                [cfg.act_width + params.hx, params.lx - cfg.act_width - params.hx],
                [cfg.act_width + params.hy, params.ly - cfg.act_width - params.hy],
            ])
        else:
            box = np.asarray(cfg.r_box, dtype=float).reshape(2, 2)
        domain_center = (params.lx / 2.0, params.ly / 2.0)
        probe_pts = (domain_center,) if cfg.probe == "center" else tuple(cfg.probe)

    cost = CostSpec(q1=q1, q2=q2, r_weight=cfg.r_weight)
    pspec = ProjectionSpec(r_ad=cfg.r_ad, r_box=box)
    r_init = (
        box.mean(axis=1) if cfg.r_init == "center"
        else np.asarray(cfg.r_init, dtype=float)
    )

    u0 = control_series(cfg, grid.times)

    return {
        "disc": disc,
        "grid": grid,
        "cost": cost,
        "x0": x0,
        "u0": u0,
        "pspec": pspec,
        "r_init": r_init,
        "probe_pts": probe_pts,
    }
