"""Command-line front end: flat key=value configs, CSV/SVG/JSON output.

Exit codes: 0 success, 1 config error, 2 solver failure, 3 failed
checks under `verify`.  CSV is the canonical output (one `#` unit
comment, one header row, 17 significant digits, so identical runs are
byte-identical); the SVGs are minimal polyline renderings of the same
data.  LANS_OUTDIR overrides the output directory.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import acceptance
from .channel_evolution import (
    ChannelState,
    SingularSystemError,
    make_lifting,
    run_to_steady,
    step,
    temporal_order_check,
)
from .covariance import (
    boundary_decay_fit,
    covariance_field,
    eigenvalues_closed_form,
    sup_norm_trajectory,
)
from .operators1d import (
    CHANNEL,
    GridFunction1D,
    PhysicalParams,
    SingularBandedError,
    make_grid,
)
from .steady_profiles import (
    SolverError,
    channel_rho_residual,
    pipe_rho_residual,
    poiseuille_velocity,
    shear_rho_closed_form,
    shear_velocity,
    solve_channel_rho_collocation,
    solve_channel_rho_shooting,
    solve_pipe_rho,
)
from .torus_isotropic import (
    TorusWorkspace,
    alpha_limit_study,
    energy_balance_check,
    random_divfree_state,
    rhs_lans1,
    rhs_lans2,
    run_with_ledger,
    taylor_green_state,
    write_snapshot,
)

__all__ = ["ConfigError", "RunConfig", "main", "parse_config", "serialize_config"]

COMMANDS = ("channel-rho", "pipe-rho", "covariance", "evolve-channel", "torus", "verify")

USAGE = """\
usage: lans <command> [--config FILE] [--key value ...]

commands:
  channel-rho     steady channel profile rho(z): CSV/SVG, near-wall fit
  pipe-rho        steady pipe profile rho(r): CSV/SVG, refinement indicator
  covariance      eigenvalue profiles at fixed t and the sup-norm trajectory
  evolve-channel  time integration to the steady channel flow; shear statics
  torus           periodic spectral run with an energy ledger
  verify          run the acceptance checks, emit a JSON summary (exit 3 on failure)

Keys are flat `key = value` pairs; a config file (TOML-compatible subset)
is applied first, then `--key value` (or `--key=value`) overrides in
order.  Boolean flags may omit the value.  LANS_OUTDIR overrides the
`outdir` key.  See README for the key reference.
"""


class ConfigError(ValueError):
    """Unusable configuration: unknown key, bad value, missing file."""


@dataclass(frozen=True)
class RunConfig:
    """One run's scalar knobs.  0 (or "") means the command default."""

    command: str = ""
    alpha: float = 0.1
    nu: float = 1.0
    beta: float = 1.0
    h: float = 1.0
    a: float = 1.0
    U: float = 1.0
    n: int = 1025
    tol: float = 0.0
    dt: float = 0.0
    t_final: float = 0.0
    steady_tol: float = 1e-5
    t: float = 2.0
    times: str = ""
    method: str = ""
    boundary: str = "rest"
    dimension: int = 2
    resolution: int = 64
    eps: float = 0.3
    initial: str = "taylor-green"
    alpha_sweep: str = ""
    check_forms: bool = False
    order_check: bool = False
    snapshot: bool = False
    seed: int = 0
    jobs: int = 1
    outdir: str = "."


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_BOOLS = {"true": True, "false": False}


def _coerce(key: str, raw: str):
    typ = _FIELDS[key]
    raw = raw.strip()
    if typ == "bool":
        if raw.lower() not in _BOOLS:
            raise ConfigError(f"{key}: expected true/false, got {raw!r}")
        return _BOOLS[raw.lower()]
    if typ == "int":
        try:
            return int(raw, 10)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if typ == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if len(raw) >= 2 and raw[0] == '"' and raw[-1] == '"':
        raw = raw[1:-1]
    return raw


def parse_config(text: str) -> dict:
    """Flat `key = value` lines into typed values.  `#` starts a
    comment; string values may be double-quoted."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, _, val = stripped.partition("=")
        key = key.strip().replace("-", "_")
        val = val.strip()
        if val.startswith('"'):
            close = val.find('"', 1)
            if close < 0:
                raise ConfigError(f"config line {lineno}: unterminated string")
            val = val[: close + 1]
        else:
            val = val.split("#", 1)[0].strip()
        if key not in _FIELDS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def serialize_config(cfg: RunConfig) -> str:
    """The inverse of parse_config: sorted key = value lines."""
    lines = []
    for key in sorted(_FIELDS):
        value = getattr(cfg, key)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, str):
            text = f'"{value}"'
        else:
            text = repr(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def _validate(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r} (expected one of {', '.join(COMMANDS)})")
    if cfg.alpha < 0 or cfg.nu < 0:
        raise ConfigError("alpha and nu must be >= 0")
    if cfg.h <= 0 or cfg.a <= 0:
        raise ConfigError("h and a must be > 0")
    if cfg.n < 9 or cfg.n % 2 == 0:
        raise ConfigError(f"n must be odd and >= 9, got {cfg.n}")
    for name in ("tol", "dt", "t_final"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be >= 0 (0 selects the command default)")
    if cfg.steady_tol <= 0:
        raise ConfigError("steady_tol must be > 0")
    if cfg.dimension not in (2, 3):
        raise ConfigError(f"dimension must be 2 or 3, got {cfg.dimension}")
    if cfg.resolution < 8:
        raise ConfigError(f"resolution must be >= 8, got {cfg.resolution}")
    if cfg.eps < 0:
        raise ConfigError("eps must be >= 0")
    if cfg.boundary not in ("rest", "shear"):
        raise ConfigError(f"boundary must be rest or shear, got {cfg.boundary!r}")
    if cfg.initial not in ("taylor-green", "random"):
        raise ConfigError(f"initial must be taylor-green or random, got {cfg.initial!r}")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if cfg.seed < 0:
        raise ConfigError("seed must be >= 0")


def build_config(argv: list[str]) -> RunConfig:
    command = argv[0]
    values: dict = {}
    overrides: list[tuple[str, str]] = []
    config_path = None
    i = 1
    while i < len(argv):
        tok = argv[i]
        if not tok.startswith("--"):
            raise ConfigError(f"expected --key, got {tok!r}")
        body = tok[2:]
        if "=" in body:
            key, _, val = body.partition("=")
            i += 1
        else:
            key = body
            norm = key.replace("-", "_")
            if norm != "config" and _FIELDS.get(norm) == "bool":
                if i + 1 < len(argv) and argv[i + 1].lower() in _BOOLS:
                    val = argv[i + 1]
                    i += 2
                else:
                    val = "true"
                    i += 1
            else:
                if i + 1 >= len(argv):
                    raise ConfigError(f"--{key} is missing its value")
                val = argv[i + 1]
                i += 2
        key = key.replace("-", "_")
        if key == "config":
            config_path = val
        else:
            if key not in _FIELDS:
                raise ConfigError(f"unknown key {key!r}")
            if key == "command":
                raise ConfigError("command is positional, not a --key")
            overrides.append((key, val))
    if config_path is not None:
        try:
            with open(config_path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from None
        values.update(parse_config(text))
    for key, val in overrides:
        values[key] = _coerce(key, val)
    values["command"] = command
    cfg = RunConfig(**values)
    env = os.environ.get("LANS_OUTDIR")
    if env:
        cfg = dataclasses.replace(cfg, outdir=env)
    _validate(cfg)
    return cfg


# ---------------------------------------------------------------- output

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path: str, units: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {units}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def write_svg(path, title, xlabel, ylabel, curves, logx=False, logy=False):
    """Minimal polyline chart: curves is a list of (label, x, y)."""
    width, height = 720.0, 480.0
    left, right, top, bottom = 70.0, 20.0, 36.0, 48.0

    def tx(v):
        return np.log10(v) if logx else np.asarray(v, dtype=float)

    def ty(v):
        return np.log10(v) if logy else np.asarray(v, dtype=float)

    pts = []
    for _, x, y in curves:
        with np.errstate(divide="ignore", invalid="ignore"):
            xv, yv = tx(np.asarray(x, float)), ty(np.asarray(y, float))
        keep = np.isfinite(xv) & np.isfinite(yv)
        pts.append((xv, yv, keep))
    finite_x = np.concatenate([xv[k] for xv, _, k in pts]) if pts else np.array([])
    finite_y = np.concatenate([yv[k] for _, yv, k in pts]) if pts else np.array([])
    if finite_x.size == 0:
        xlo, xhi, ylo, yhi = 0.0, 1.0, 0.0, 1.0
    else:
        xlo, xhi = float(finite_x.min()), float(finite_x.max())
        ylo, yhi = float(finite_y.min()), float(finite_y.max())
    if xhi <= xlo:
        xlo, xhi = xlo - 0.5, xlo + 0.5
    if yhi <= ylo:
        ylo, yhi = ylo - 0.5, ylo + 0.5

    def sx(v):
        return left + (v - xlo) / (xhi - xlo) * (width - left - right)

    def sy(v):
        return height - bottom - (v - ylo) / (yhi - ylo) * (height - top - bottom)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}" '
        'font-family="sans-serif" font-size="12">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for i in range(5):
        fx = xlo + (xhi - xlo) * i / 4
        fy = ylo + (yhi - ylo) * i / 4
        gx, gy = sx(fx), sy(fy)
        out.append(
            f'<line x1="{gx:.2f}" y1="{sy(ylo):.2f}" x2="{gx:.2f}" y2="{sy(yhi):.2f}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        out.append(
            f'<line x1="{sx(xlo):.2f}" y1="{gy:.2f}" x2="{sx(xhi):.2f}" y2="{gy:.2f}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        lx = 10.0**fx if logx else fx
        ly = 10.0**fy if logy else fy
        out.append(
            f'<text x="{gx:.2f}" y="{height - bottom + 18:.2f}" text-anchor="middle">{lx:.4g}</text>'
        )
        out.append(
            f'<text x="{left - 8:.2f}" y="{gy + 4:.2f}" text-anchor="end">{ly:.4g}</text>'
        )
    out.append(
        f'<rect x="{left:.1f}" y="{top:.1f}" width="{width - left - right:.1f}" '
        f'height="{height - top - bottom:.1f}" fill="none" stroke="black" stroke-width="1"/>'
    )
    out.append(
        f'<text x="{(left + width - right) / 2:.1f}" y="{height - 10:.1f}" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    out.append(
        f'<text x="16" y="{(top + height - bottom) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(top + height - bottom) / 2:.1f})">{ylabel}</text>'
    )
    for ci, ((label, _, _), (xv, yv, keep)) in enumerate(zip(curves, pts)):
        color = _PALETTE[ci % len(_PALETTE)]
        run = []
        chunks = []
        for ok, px, py in zip(keep, xv, yv):
            if ok:
                run.append(f"{sx(px):.2f},{sy(py):.2f}")
            elif run:
                chunks.append(run)
                run = []
        if run:
            chunks.append(run)
        for chunk in chunks:
            out.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                f'points="{" ".join(chunk)}"/>'
            )
        ly = top + 16 + 16 * ci
        out.append(
            f'<line x1="{width - right - 150:.1f}" y1="{ly - 4:.1f}" '
            f'x2="{width - right - 126:.1f}" y2="{ly - 4:.1f}" stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{width - right - 120:.1f}" y="{ly:.1f}">{label}</text>')
    out.append("</svg>")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(out) + "\n")


def _parse_floats(text: str, key: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{key}: empty list")
    return vals


def _params(cfg: RunConfig, **extra) -> PhysicalParams:
    try:
        return PhysicalParams(
            alpha=cfg.alpha, nu=cfg.nu, beta=cfg.beta, h=cfg.h, a=cfg.a, **extra
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _decay_fit_column(rho, say):
    d = rho.grid.wall_distance
    try:
        fit = boundary_decay_fit(rho)
    except ValueError as exc:
        say(f"decay fit skipped: {exc}")
        return None, np.full(rho.grid.n, np.nan)
    say(f"near-wall fit C*d*sqrt(|log d|): C = {fit.coefficient:.10g}, goodness = {fit.goodness:.6f}")
    col = np.zeros(rho.grid.n)
    pos = d > 0
    col[pos] = fit.coefficient * d[pos] * np.sqrt(np.abs(np.log(d[pos])))
    return fit, col


# ---------------------------------------------------------------- commands


def cmd_channel_rho(cfg: RunConfig, outdir: str, say) -> int:
    method = cfg.method or "collocation"
    if method not in ("collocation", "shooting", "both"):
        raise ConfigError(f"channel-rho method must be collocation, shooting or both, got {method!r}")
    p = _params(cfg)
    tol = cfg.tol or 1e-8
    coll = shoot = None
    if method in ("collocation", "both"):
        coll, _ = solve_channel_rho_collocation(p, tol=tol)
    if method in ("shooting", "both"):
        shoot, srep = solve_channel_rho_shooting(p, n=cfg.n)
        say(f"shooting route defect: {srep.residual:.3e}")
    profile = coll if coll is not None else shoot
    say(f"A = rho(0) = {profile.center_value:.15g}")
    if coll is not None:
        res = float(np.abs(channel_rho_residual(coll, p).values).max())
        say(f"certified residual max: {res:.3e} (grid n = {coll.grid.n})")
    if method == "both":
        stride, rem = divmod(coll.grid.n - 1, shoot.grid.n - 1)
        if rem == 0 and np.array_equal(coll.grid.nodes[::stride], shoot.grid.nodes):
            disc = float(np.abs(coll.values[::stride] - shoot.values).max())
        else:
            disc = float(
                np.abs(
                    np.interp(shoot.grid.nodes, coll.grid.nodes, coll.values) - shoot.values
                ).max()
            )
        say(f"shooting/collocation sup-norm discrepancy: {disc:.3e}")
    _, fitcol = _decay_fit_column(profile, say)
    z = profile.grid.nodes
    d = profile.grid.wall_distance
    rows = zip(z, profile.values, d, fitcol)
    write_csv(
        os.path.join(outdir, "rho_channel.csv"),
        "z: length; rho: dimensionless; d: normalized wall distance; rho_cs_fit: C*d*sqrt(|log d|)",
        ["z", "rho", "d", "rho_cs_fit"],
        rows,
    )
    write_svg(
        os.path.join(outdir, "rho_channel.svg"),
        "steady channel profile",
        "z",
        "rho",
        [("rho", z, profile.values), ("near-wall fit", z, fitcol)],
    )
    say(f"wrote rho_channel.csv, rho_channel.svg in {outdir}")
    return 0


def cmd_pipe_rho(cfg: RunConfig, outdir: str, say) -> int:
    method = cfg.method or "collocation"
    if method not in ("collocation", "shooting"):
        raise ConfigError(f"pipe-rho method must be collocation or shooting, got {method!r}")
    p = _params(cfg)
    tol = cfg.tol or 1e-6
    rho, rep = solve_pipe_rho(p, tol=tol, method=method, n=cfg.n)
    say(f"axis value rho(0) = {rho.center_value:.15g}")
    if p.alpha == 0.0:
        flat = float(np.abs(rho.values[:-1] - 1.0).max())
        say(f"alpha = 0: exact constant profile, interior deviation from 1: {flat:.3e}")
    else:
        res = float(np.abs(pipe_rho_residual(rho, p).values).max())
        say(f"residual max on output grid: {res:.3e} (n = {rho.grid.n}, route residual {rep.residual:.3e})")
    # coarse-vs-fine indicator on the pointwise (shooting) route; the
    # alpha=0 profile has a pinned wall node no interpolant can track
    n2 = (cfg.n - 1) // 2 + 1
    if n2 >= 9 and p.alpha > 0.0:
        fine, _ = solve_pipe_rho(p, tol=tol, method="shooting", n=cfg.n)
        half, _ = solve_pipe_rho(p, tol=tol, method="shooting", n=n2)
        diff = float(
            np.abs(
                fine.values - np.interp(fine.grid.nodes, half.grid.nodes, half.values)
            ).max()
        )
        say(f"refinement difference (n={n2} vs n={cfg.n}): {diff:.3e}")
    _, fitcol = _decay_fit_column(rho, say)
    r = rho.grid.nodes
    rows = zip(r, rho.values, rho.grid.wall_distance, fitcol)
    write_csv(
        os.path.join(outdir, "rho_pipe.csv"),
        "r: length; rho: dimensionless; d: normalized wall distance; rho_cs_fit: C*d*sqrt(|log d|)",
        ["r", "rho", "d", "rho_cs_fit"],
        rows,
    )
    write_svg(
        os.path.join(outdir, "rho_pipe.svg"),
        "steady pipe profile",
        "r",
        "rho",
        [("rho", r, rho.values), ("near-wall fit", r, fitcol)],
    )
    say(f"wrote rho_pipe.csv, rho_pipe.svg in {outdir}")
    return 0


def cmd_covariance(cfg: RunConfig, outdir: str, say) -> int:
    p = _params(cfg)
    rho, _ = solve_channel_rho_shooting(p, n=cfg.n)
    u = poiseuille_velocity(rho.grid, p)
    field = covariance_field(rho, u, p)
    z = rho.grid.nodes
    lam_ax = rho.values.copy()
    lam_hi = np.empty_like(lam_ax)
    lam_lo = np.empty_like(lam_ax)
    for i in range(rho.grid.n):
        trip = eigenvalues_closed_form(rho.values[i], field.shear_integral(cfg.t, i))
        lam_hi[i], lam_lo[i] = trip.lam1, trip.lam3
    write_csv(
        os.path.join(outdir, "eigen_t2.csv"),
        f"eigenvalues at t = {cfg.t:g}; lam1: axial (= rho); lam2, lam3: shear-plane pair, lam2*lam3 = lam1^2",
        ["z", "lam1", "lam2", "lam3"],
        zip(z, lam_ax, lam_hi, lam_lo),
    )
    write_svg(
        os.path.join(outdir, "eigen_t2.svg"),
        f"covariance eigenvalues at t = {cfg.t:g}",
        "z",
        "lambda",
        [("lam1 (axial)", z, lam_ax), ("lam2", z, lam_hi), ("lam3", z, lam_lo)],
    )
    if cfg.times:
        marks = _parse_floats(cfg.times, "times")
        times = np.geomspace(marks[0], marks[1], 25) if len(marks) == 2 else np.asarray(marks)
    else:
        times = np.geomspace(10.0, 100.0, 25)
    if not np.all(np.diff(times) > 0) or times[0] <= 0:
        raise ConfigError("times must be positive and strictly increasing")
    series = sup_norm_trajectory(times, rho, u, p)
    slope = float(np.polyfit(np.log(series.times), np.log(series.value), 1)[0])
    say(f"sup-norm growth exponent over [{times[0]:g}, {times[-1]:g}]: {slope:.4f}")
    say(f"argmax |z| at t = {times[-1]:g}: {abs(float(series.location[-1])):.5f}")
    write_csv(
        os.path.join(outdir, "fmax.csv"),
        "t: time; max: sup-norm of the covariance; argmax_z: refined location",
        ["t", "max", "argmax_z"],
        zip(series.times, series.value, series.location),
    )
    write_svg(
        os.path.join(outdir, "fmax.svg"),
        "covariance sup-norm growth",
        "t",
        "max |F|",
        [("max", series.times, series.value)],
        logx=True,
        logy=True,
    )
    say(f"wrote eigen_t2.csv, eigen_t2.svg, fmax.csv, fmax.svg in {outdir}")
    return 0


def cmd_evolve_channel(cfg: RunConfig, outdir: str, say) -> int:
    if cfg.boundary == "shear":
        p = _params(cfg, bigU=cfg.U, c=0.0)
        grid = make_grid(CHANNEL, cfg.n, h=cfg.h)
        rho = shear_rho_closed_form(grid, p)
        lifted = make_lifting((0.0, cfg.U), grid, p, rho)
        fmax = float(np.abs(lifted.f.values).max())
        say(f"closed-form shear profile rho(0) = {rho.center_value:.15g}")
        say(f"lifted forcing max (identically zero for this rho): {fmax:.3e}")
        u = shear_velocity(grid, p)
        write_csv(
            os.path.join(outdir, "shear_profile.csv"),
            "z: length; u: streamwise velocity; rho: dimensionless; forcing: lifted source term",
            ["z", "u", "rho", "forcing"],
            zip(grid.nodes, u.values, rho.values, lifted.f.values),
        )
        write_svg(
            os.path.join(outdir, "shear_profile.svg"),
            "steady shear flow",
            "z",
            "value",
            [("u", grid.nodes, u.values), ("rho", grid.nodes, rho.values)],
        )
        say(
            "shear rho is sign-changing, so only the steady identities are "
            "reported; the time stepper is not run (anti-dissipative modes)"
        )
        say(f"wrote shear_profile.csv, shear_profile.svg in {outdir}")
        return 0

    p = _params(cfg)
    tol = cfg.tol or 1e-8
    rho, _ = solve_channel_rho_collocation(p, tol=tol)
    grid = rho.grid
    dt = cfg.dt or 2e-3
    t_max = cfg.t_final or 40.0
    state = ChannelState(0.0, GridFunction1D(grid, np.zeros(grid.n)), rho, p)
    cold = state
    if cfg.times:
        for target in sorted(_parse_floats(cfg.times, "times")):
            while state.t < target - dt / 2:
                state = step(state, dt)
            name = f"profile_t{target:g}.csv"
            write_csv(
                os.path.join(outdir, name),
                f"snapshot at t = {state.t:.6g}; z: length; u: streamwise velocity",
                ["z", "u"],
                zip(grid.nodes, state.u.values),
            )
            say(f"wrote {name} (t = {state.t:.6g})")
    final, report = run_to_steady(state, dt=dt, t_max=t_max, steady_tol=cfg.steady_tol)
    say(
        f"steady run: converged = {report.converged}, steps = {report.steps}, "
        f"t = {report.t_final:.4g}, final rate = {report.final_rate:.3e}"
    )
    if report.diverged:
        print(f"solver failure: run diverged at t = {report.t_final:.4g}", file=sys.stderr)
        return 2
    exact = poiseuille_velocity(grid, p)
    err = float(np.abs(final.u.values - exact.values).max())
    say(f"final max error vs beta*(h^2 - z^2): {err:.3e}")
    if cfg.order_check:
        order = temporal_order_check(cold, [1e-2, 5e-3, 2.5e-3])
        say(f"observed temporal order under dt halving: {order:.3f}")
    write_csv(
        os.path.join(outdir, "profile_final.csv"),
        "z: length; u: streamwise velocity; u_exact: parabolic steady profile; rho: dimensionless",
        ["z", "u", "u_exact", "rho"],
        zip(grid.nodes, final.u.values, exact.values, rho.values),
    )
    write_svg(
        os.path.join(outdir, "evolve_channel.svg"),
        "channel evolution endpoint",
        "z",
        "u",
        [("u(final)", grid.nodes, final.u.values), ("steady", grid.nodes, exact.values)],
    )
    say(f"wrote profile_final.csv, evolve_channel.svg in {outdir}")
    return 0


def cmd_torus(cfg: RunConfig, outdir: str, say) -> int:
    dt = cfg.dt or 1e-3
    t_final = cfg.t_final or 1.0
    n_steps = int(round(t_final / dt))
    if n_steps < 1 or abs(n_steps * dt - t_final) > 1e-9 * max(t_final, 1.0):
        raise ConfigError(f"t_final = {t_final} is not an integer number of dt = {dt} steps")
    ws = TorusWorkspace(cfg.dimension, cfg.resolution, cfg.alpha, nu=cfg.nu)
    if cfg.initial == "taylor-green":
        state0 = taylor_green_state(ws, eps=cfg.eps)
    else:
        state0 = random_divfree_state(ws, np.random.default_rng(cfg.seed))
    say(
        f"torus run: d = {cfg.dimension}, N = {cfg.resolution}, alpha = {cfg.alpha:g}, "
        f"nu = {cfg.nu:g}, dt = {dt:g}, T = {t_final:g}"
    )
    state, ledger = run_with_ledger(state0, dt, n_steps)
    drift = abs(ledger.energy[-1] - ledger.energy[0]) / ledger.energy[0] / t_final
    say(f"E1(0) = {ledger.energy[0]:.12g}, E1(T) = {ledger.energy[-1]:.12g}")
    say(f"|dE1|/E1 per unit time: {drift:.3e}")
    if cfg.nu > 0 and len(ledger.times) >= 3:
        say(f"energy balance residual max: {energy_balance_check(ledger):.3e}")
    m = len(ledger.times)
    res_col = [""] + ["%.17g" % v for v in ledger.residual] + [""] if m >= 3 else [""] * m
    write_csv(
        os.path.join(outdir, "ledger.csv"),
        "t: time; e1: filtered energy; dissipation, work: instantaneous rates; residual: centered balance defect (blank at endpoints)",
        ["t", "e1", "dissipation", "work", "residual"],
        zip(ledger.times, ledger.energy, ledger.dissipation, ledger.work, res_col),
    )
    write_svg(
        os.path.join(outdir, "torus_ledger.svg"),
        "energy ledger",
        "t",
        "value",
        [
            ("E1", ledger.times, ledger.energy),
            ("dissipation", ledger.times, ledger.dissipation),
            ("work", ledger.times, ledger.work),
        ],
    )
    if cfg.check_forms:
        rng = np.random.default_rng(cfg.seed)
        worst = 0.0
        for _ in range(10):
            probe = random_divfree_state(ws, rng, forcing_hat=state0.f_hat)
            r1, r2 = rhs_lans1(probe), rhs_lans2(probe)
            worst = max(worst, float(np.abs(ws.helmholtz * r1 - r2).max() / np.abs(r2).max()))
        say(f"form equivalence max relative discrepancy (10 states): {worst:.3e}")
    if cfg.alpha_sweep:
        alphas = _parse_floats(cfg.alpha_sweep, "alpha_sweep")
        u0 = np.stack([ws.ifft(c) for c in state0.u_hat])
        study = alpha_limit_study(u0, cfg.nu, None, t_final, alphas, dt=dt, jobs=cfg.jobs)
        for a, e in zip(study.alphas, study.errors):
            say(f"  alpha = {a:<6g} error vs alpha=0: {e:.6e}")
        say(f"alpha-sweep log-log slope: {study.slope:.3f}")
        write_csv(
            os.path.join(outdir, "alpha_sweep.csv"),
            f"final-time L2 distance to the alpha=0 run at T = {t_final:g}",
            ["alpha", "error"],
            zip(study.alphas, study.errors),
        )
    if cfg.snapshot:
        snap = os.path.join(outdir, "torus_final.bin")
        write_snapshot(snap, state)
        say(f"wrote binary snapshot {snap}")
    say(f"wrote ledger.csv, torus_ledger.svg in {outdir}")
    return 0


def cmd_verify(cfg: RunConfig, outdir: str, say) -> int:
    results = acceptance.run_criteria()
    for r in results:
        print(r.line(), file=sys.stderr)
    payload = {
        "criteria": [
            {
                "index": r.index,
                "name": r.name,
                "passed": r.passed,
                "detail": r.detail,
                "seconds": round(r.seconds, 3),
                "budget": r.budget,
            }
            for r in results
        ],
        "n_passed": sum(r.passed for r in results),
        "n_failed": sum(not r.passed for r in results),
        "all_passed": all(r.passed for r in results),
    }
    text = json.dumps(payload, indent=2)
    print(text)
    with open(os.path.join(outdir, "verify.json"), "w", newline="") as fh:
        fh.write(text + "\n")
    return 0 if payload["all_passed"] else 3


_DISPATCH = {
    "channel-rho": cmd_channel_rho,
    "pipe-rho": cmd_pipe_rho,
    "covariance": cmd_covariance,
    "evolve-channel": cmd_evolve_channel,
    "torus": cmd_torus,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    if argv and argv[0] in ("-h", "--help", "help"):
        print(USAGE, end="")
        return 0
    try:
        if not argv:
            raise ConfigError("missing command")
        cfg = build_config(argv)
        outdir = cfg.outdir
        try:
            os.makedirs(outdir, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create outdir {outdir!r}: {exc}") from None
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        print(USAGE, file=sys.stderr, end="")
        return 1
    try:
        return _DISPATCH[cfg.command](cfg, outdir, print)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, SingularSystemError, SingularBandedError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
