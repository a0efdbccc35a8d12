"""Command-line driver: every probe as a subcommand, CSV reports and SVG plots.

Exit codes: 0 when every scientific check passes, 1 when one fails, 2 on
infrastructure errors (bad config, solver failure, I/O).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import covering, probes
from .errors import DegenerateInputError, OrliczLabError
from .fields import (BallGrid, ScalarField, hessian_fd, narrow_bump_field, random_bandlimited_field,
                     write_field_csv)
from .modular import modular_direct, modular_layercake
from .solvers import solve_fd_disk, solve_green_ball
from .young import check_delta2, check_nabla2, is_young, parse_phi

COLUMNS = ["config_hash", "seed", "experiment", "row_key", "phi", "m", "parameter", "quantity", "value", "flag"]

# resolution defaults: the necessity probes need m = 513 to resolve max |D^2 eta|
DEFAULT_M = {"check-young": 129, "solve": 257, "modular": 257, "ratio-sweep": 129,
             "theorem-demo": 513, "covering-demo": 257, "cone-bound": 513}

POSITIVE_BATTERY = ["power:p=1.5", "power:p=2", "power:p=3", "powerlog:alpha=2"]
DEFAULTS = {
    "phi": None,
    "m": None,  # per-subcommand default, see DEFAULT_M
    "m_list": "129,257",
    "backend": "fd",
    "seed": 0,
    "out": "out",
    "t_list": "1,2,3,4,5,6,7,8,9,10",
    "eps_list": "0.1,0.05,0.025,0.0125",
    "lambda_list": None,
    "p": 1.5,
    "mweight": 4.0,
    "count": 20,
    "modes": 4,
    "source": None,
    "direction": "sufficiency",
    "tolerance": 0.15,
}


def fmt(x) -> str:
    """Deterministic text for a CSV cell: repr for floats, str otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "" if x is None else str(x)


def float_list(text: str) -> list[float]:
    return [float(s) for s in str(text).split(",") if s.strip()]


def int_list(text: str) -> list[int]:
    return [int(s) for s in str(text).split(",") if s.strip()]


def read_config(path) -> dict:
    """Plain key=value lines; '#' starts a comment; keys use flag names."""
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise OrliczLabError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in DEFAULTS:
            raise OrliczLabError(f"{path}:{lineno}: unknown key {key!r}")
        cfg[key] = value
    return cfg


@dataclass
class RunConfig:
    subcommand: str
    values: dict

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def hash(self) -> str:
        keyed = {k: fmt(v) for k, v in sorted(self.values.items()) if k != "out"}
        keyed["subcommand"] = self.subcommand
        return hashlib.sha256(json.dumps(keyed, sort_keys=True).encode()).hexdigest()[:12]

    @property
    def out_dir(self) -> Path:
        return Path(self.values["out"])


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags (flags win)."""
    values = dict(DEFAULTS)
    if args.config:
        values.update(read_config(args.config))
    for key in DEFAULTS:
        given = getattr(args, key, None)
        if given is not None:
            values[key] = given
    if values["m"] is None:
        values["m"] = DEFAULT_M[args.command]
    casts = {"m": int, "seed": int, "p": float, "mweight": float, "count": int, "modes": int,
             "tolerance": float}
    for key, cast in casts.items():
        values[key] = cast(values[key])
    if values["m"] < 65 or values["m"] % 2 == 0:
        raise OrliczLabError("m must be odd and >= 65")
    if values["backend"] not in ("fd", "green"):
        raise OrliczLabError("backend must be fd or green")
    return RunConfig(args.command, values)


@dataclass
class Report:
    config: RunConfig
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def add(self, experiment, row_key, quantity, value, phi="", m="", parameter="", flag=""):
        self.rows.append({"config_hash": self.config.hash, "seed": self.config.seed,
                          "experiment": experiment, "row_key": row_key, "phi": phi, "m": m,
                          "parameter": parameter, "quantity": quantity, "value": value, "flag": flag})

    def check(self, experiment, name, passed: bool, detail="") -> bool:
        self.add(experiment, "verdict", name, detail, flag="pass" if passed else "fail")
        if not passed:
            self.failures.append(f"{experiment}: {name}")
        return passed

    def write(self) -> Path:
        out = self.config.out_dir
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for row in self.rows:
                w.writerow([fmt(row[c]) for c in COLUMNS])
        return path


# -- plotting ---------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "orlicz-lab"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def save_svg(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    fig.clf()


def plot_curve(path: Path, x, ys: dict, xlabel: str, ylabel: str, loglog=True) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, y in ys.items():
        ax.plot(x, y, "o-", label=label)
    if loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    save_svg(fig, path)
    plt.close(fig)


def plot_cover(path: Path, pair, balls) -> None:
    plt = _pyplot()
    grid = pair.grid
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.add_patch(plt.Circle((0, 0), 1.0, fill=False, color="k", lw=0.8))
    if pair is not None and np.any(pair.level_set):
        pts = grid.points(pair.level_set)
        ax.plot(pts[:, 0], pts[:, 1], ",", color="tab:red")
    for b in balls:
        c = b.center_point(grid)
        ax.add_patch(plt.Circle(c, b.rho, fill=False, color="tab:blue", lw=0.8))
        ax.add_patch(plt.Circle(c, 5.0 * b.rho, fill=False, color="tab:blue", lw=0.4, ls="--"))
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_aspect("equal")
    fig.tight_layout()
    save_svg(fig, path)
    plt.close(fig)


def write_table(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


# -- shared helpers -----------------------------------------------------------

def make_source(kind: str, grid: BallGrid, seed: int, modes: int = 4) -> ScalarField:
    if kind == "ones":
        # f = 1, restricted to |x| <= 1 - 2h so both backends accept it
        return ScalarField(grid, (grid.radius <= 1.0 - 2.0 * grid.h).astype(float))
    if kind == "zeros":
        return ScalarField(grid, np.zeros(grid.shape))
    if kind == "random":
        return random_bandlimited_field(grid, modes, seed)
    if kind == "bumps":
        return narrow_bump_field(grid, modes, seed)
    raise OrliczLabError(f"unknown source kind {kind!r}")


def solve(f: ScalarField, backend: str) -> ScalarField:
    return solve_fd_disk(f)[0] if backend == "fd" else solve_green_ball(f)


def modular_ratio(phi, u: ScalarField, f: ScalarField) -> float:
    num = modular_direct(phi, hessian_fd(u).abs_sum).value
    den = modular_direct(phi, f).value
    if den == 0.0:
        raise DegenerateInputError("modular of f vanishes")
    return num / den


def phi_specs(cfg: RunConfig, default: list[str]) -> list[str]:
    return default if cfg.phi is None else [s for s in str(cfg.phi).split(";") if s]


# -- subcommands --------------------------------------------------------------

def cmd_check_young(cfg: RunConfig, rep: Report) -> None:
    specs = phi_specs(cfg, POSITIVE_BATTERY + ["linear", "exp"])
    cone = probes.default_cone(2)
    c1 = 1.0
    c2 = cone.r_floor ** -2
    t_probe = np.geomspace(1e-3, 1e3, 13)
    for spec in specs:
        phi = parse_phi(spec)
        d2, n2 = check_delta2(phi), check_nabla2(phi)
        rep.add("check_young", spec, "is_young", is_young(phi), phi=phi.name)
        rep.add("check_young", spec, "delta2_satisfied", d2.satisfied, phi=phi.name)
        rep.add("check_young", spec, "K", d2.K, phi=phi.name)
        rep.add("check_young", spec, "alpha1", d2.alpha1, phi=phi.name)
        rep.add("check_young", spec, "delta2_witness_t", d2.witness_t, phi=phi.name)
        rep.add("check_young", spec, "nabla2_satisfied", n2.satisfied, phi=phi.name)
        rep.add("check_young", spec, "a", n2.a, phi=phi.name)
        rep.add("check_young", spec, "alpha2", n2.alpha2, phi=phi.name)
        rep.add("check_young", spec, "nabla2_witness_t", n2.witness_t, phi=phi.name)
        R = probes.integral_condition_probe(phi, t_probe, c1, c2)
        for t, r in zip(t_probe, R):
            rep.add("integral_condition", spec, "R", r, phi=phi.name, parameter=t)
        rep.add("integral_condition", spec, "max_over_min", float(R.max() / R.min()), phi=phi.name)


def cmd_solve(cfg: RunConfig, rep: Report) -> None:
    grid = BallGrid(2, cfg.m)
    f = make_source(cfg.source or "random", grid, cfg.seed, cfg.modes)
    if cfg.backend == "fd":
        u, sr = solve_fd_disk(f)
        rep.add("solve", "fd", "residual", sr.residual, m=cfg.m)
        rep.add("solve", "fd", "iterations", sr.iterations, m=cfg.m)
        rep.add("solve", "fd", "boundary_max", sr.boundary_max, m=cfg.m)
    else:
        u = solve_green_ball(f)
    rep.add("solve", cfg.backend, "u_center", float(u.values[grid.center_index]), m=cfg.m)
    rep.add("solve", cfg.backend, "max_abs_u", u.max_abs(), m=cfg.m)
    rep.add("solve", cfg.backend, "max_abs_hessian", hessian_fd(u).abs_sum.max_abs(), m=cfg.m)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_field_csv(u, cfg.out_dir / "u.csv")


def cmd_modular(cfg: RunConfig, rep: Report) -> None:
    grid = BallGrid(2, cfg.m)
    specs = phi_specs(cfg, ["power:p=2", "powerlog:alpha=2"])
    for k in range(cfg.count):
        g = random_bandlimited_field(grid, cfg.modes, cfg.seed + k)
        name = f"random_{cfg.seed + k}"
        for spec in specs:
            phi = parse_phi(spec)
            d = modular_direct(phi, g)
            lc = modular_layercake(phi, g)
            gap = abs(lc.value - d.value) / d.value
            key = f"{name}/{spec}"
            rep.add("modular", key, "direct", d.value, phi=phi.name, m=cfg.m)
            rep.add("modular", key, "layercake", lc.value, phi=phi.name, m=cfg.m)
            rep.add("modular", key, "mask_volume", d.mask_volume, phi=phi.name, m=cfg.m)
            rep.add("modular", key, "relative_gap", gap, phi=phi.name, m=cfg.m)
            rep.check("modular", f"gap<=1% {key}", gap <= 0.01, gap)


def ratio_sweep(cfg: RunConfig, rep: Report, specs: list[str]) -> dict:
    """Max and median of R(f) per phi and resolution, plus cross-resolution stability."""
    m_list = int_list(cfg.m_list)
    phis = [parse_phi(s) for s in specs]
    for spec, phi in zip(specs, phis):
        d2, n2 = check_delta2(phi), check_nabla2(phi)
        if not (d2.satisfied and n2.satisfied):
            rep.add("ratio_sweep", spec, "warning", "phi not in Delta2 cap Nabla2", phi=phi.name)
    ratios = {(s, m): [] for s in specs for m in m_list}
    for m in m_list:
        grid = BallGrid(2, m)
        for k in range(cfg.count):
            seed = cfg.seed + k
            key = f"seed={seed}"
            try:
                f = make_source(cfg.source or "random", grid, seed, cfg.modes)
                u = solve(f, cfg.backend)
                a = hessian_fd(u).abs_sum
            except OrliczLabError as exc:
                rep.add("ratio_sweep", key, "error", type(exc).__name__, m=m, flag="error")
                continue
            for spec, phi in zip(specs, phis):
                try:
                    den = modular_direct(phi, f).value
                    if den == 0.0:
                        rep.add("ratio_sweep", key, "R", "", phi=phi.name, m=m, flag="degenerate")
                        continue
                    r = modular_direct(phi, a).value / den
                except OrliczLabError as exc:
                    rep.add("ratio_sweep", key, "error", type(exc).__name__, phi=phi.name, m=m, flag="error")
                    continue
                ratios[(spec, m)].append(r)
                rep.add("ratio_sweep", key, "R", r, phi=phi.name, m=m)
    summary = {}
    for spec, phi in zip(specs, phis):
        maxima = []
        for m in m_list:
            rs = np.array(ratios[(spec, m)])
            if rs.size == 0:
                continue
            maxima.append(float(rs.max()))
            rep.add("ratio_sweep", "summary", "estimated lower bound of C", float(rs.max()), phi=phi.name, m=m)
            rep.add("ratio_sweep", "summary", "median R", float(np.median(rs)), phi=phi.name, m=m)
        stability = (max(maxima) - min(maxima)) / max(maxima) if len(maxima) > 1 else 0.0
        finite = bool(maxima) and all(math.isfinite(v) for v in maxima)
        rep.add("ratio_sweep", "summary", "cross_resolution_spread", stability, phi=phi.name)
        summary[spec] = (finite, stability, maxima)
    return summary


def cmd_ratio_sweep(cfg: RunConfig, rep: Report) -> None:
    specs = phi_specs(cfg, POSITIVE_BATTERY)
    summary = ratio_sweep(cfg, rep, specs)
    for spec, (finite, spread, _) in summary.items():
        rep.check("ratio_sweep", f"bounded and stable {spec}", finite and spread <= cfg.tolerance, spread)
    _plot_sweep(cfg, rep)


def _plot_sweep(cfg: RunConfig, rep: Report) -> None:
    series = {}
    for row in rep.rows:
        if row["experiment"] == "ratio_sweep" and row["quantity"] == "R" and row["value"] != "":
            series.setdefault(f"{row['phi']} m={row['m']}", []).append(row["value"])
    if not series:
        return
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, ys in series.items():
        ax.plot(np.arange(len(ys)), ys, "o", ms=3, label=label)
    ax.set_xlabel("source index")
    ax.set_ylabel("modular ratio R")
    ax.legend(fontsize=6)
    fig.tight_layout()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_svg(fig, cfg.out_dir / "ratio_sweep.svg")
    plt.close(fig)


def cmd_theorem_demo(cfg: RunConfig, rep: Report) -> None:
    direction = cfg.direction
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if direction == "sufficiency":
        specs = phi_specs(cfg, POSITIVE_BATTERY)
        summary = ratio_sweep(cfg, rep, specs)
        for spec, (finite, spread, _) in summary.items():
            rep.check("theorem_demo", f"bounded {spec}", finite and spread <= cfg.tolerance, spread)
        _plot_sweep(cfg, rep)
    elif direction == "delta2_necessity":
        specs = phi_specs(cfg, ["exp", "power:p=2"])
        grid = BallGrid(2, cfg.m)
        cutoff = probes.default_cutoff(grid)
        t_list = float_list(cfg.t_list)
        curves = {}
        for spec in specs:
            phi = parse_phi(spec)
            curve = probes.delta2_forcing_pair(phi, cutoff, t_list)
            curves[phi.name] = curve
            for t, r, l, rr in zip(curve.parameter, curve.ratio, curve.lhs, curve.rhs):
                rep.add("delta2_forcing", spec, "ratio", r, phi=phi.name, m=cfg.m, parameter=t)
            growth = float(curve.ratio[-1] / curve.ratio[0])
            increasing = bool(np.all(np.diff(curve.ratio) > 0))
            spread = float(curve.ratio.max() / curve.ratio.min() - 1.0)
            rep.add("delta2_forcing", spec, "growth", growth, phi=phi.name, m=cfg.m)
            rep.add("delta2_forcing", spec, "C1", cutoff.C1, m=cfg.m)
            rep.add("delta2_forcing", spec, "gamma", cutoff.gamma, m=cfg.m)
            d2 = check_delta2(phi)
            if d2.satisfied:
                rep.check("theorem_demo", f"bounded control {spec}", spread < 0.05, spread)
            else:
                rep.check("theorem_demo", f"divergent {spec}", increasing and growth > 100.0, growth)
        plot_curve(cfg.out_dir / "delta2_forcing.svg", t_list,
                   {k: c.ratio for k, c in curves.items()}, "t", "modular ratio")
    elif direction == "nabla2_necessity":
        specs = phi_specs(cfg, ["linear", "power:p=2"])
        grid = BallGrid(2, cfg.m)
        eps = float_list(cfg.eps_list)
        curves = {}
        for spec in specs:
            phi = parse_phi(spec)
            curve = probes.nabla2_failure_demo(eps, grid, phi, cfg.backend)
            curves[phi.name] = curve
            for e, r in zip(curve.parameter, curve.ratio):
                rep.add("nabla2_failure", spec, "ratio", r, phi=phi.name, m=cfg.m, parameter=e)
            slope = probes.log_slope(curve)
            spread = float(curve.ratio.max() / curve.ratio.min() - 1.0)
            rep.add("nabla2_failure", spec, "log_slope", slope, phi=phi.name, m=cfg.m)
            rep.add("nabla2_failure", spec, "spread", spread, phi=phi.name, m=cfg.m)
            if check_nabla2(phi).satisfied:
                rep.check("theorem_demo", f"bounded control {spec}", spread < 0.2, spread)
            else:
                increasing = bool(np.all(np.diff(curve.ratio) > 0))
                rep.check("theorem_demo", f"growing {spec}", increasing and slope > 0, slope)
        plot_curve(cfg.out_dir / "nabla2_failure.svg", eps,
                   {k: c.ratio for k, c in curves.items()}, "epsilon", "modular ratio")
    else:
        raise OrliczLabError(f"unknown direction {direction!r}")


def cmd_covering_demo(cfg: RunConfig, rep: Report) -> None:
    grid = BallGrid(2, cfg.m)
    kind = cfg.source or "ones"
    f = make_source(kind, grid, cfg.seed, cfg.modes)
    u = solve(f, cfg.backend)
    phi = parse_phi(cfg.phi or "power:p=2")
    p, M = cfg.p, cfg.mweight
    n2 = check_nabla2(phi)
    alpha2 = n2.alpha2 if n2.satisfied else 1.0
    a = hessian_fd(u).abs_sum
    E = covering.normalization_energy(u, f, p, M, a)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if E == 0.0:
        rep.add("covering", "pair", "E", 0.0, m=cfg.m)
        rep.check("covering", "vacuous (empty level sets)", True)
        plot_cover(cfg.out_dir / "cover.svg", covering.NormalizedPair(u, f, a, 0.0, 1.0, p, M), [])
        write_table(cfg.out_dir / "balls.csv", ["lambda", "center_x", "center_y", "rho", "J"], [])
        return
    if cfg.lambda_list:
        lams = float_list(cfg.lambda_list)
    else:
        # three decades below the level where E_lambda(1) empties out
        top = a.max_abs() / E
        lams = list(top * np.geomspace(1e-3, 0.9, 4))
    table = covering.level_set_cascade(u, f, phi, p, M, lams)
    ball_rows = []
    last_pair, last_balls = None, []
    for lam in lams:
        pair = covering.normalize(u, f, p, M, lam, alpha2=alpha2)
        balls = covering.select_balls(pair)
        splits = [covering.measure_split_check(pair, b) for b in balls]
        for b, s in zip(balls, splits):
            c = b.center_point(grid)
            ball_rows.append([lam, c[0], c[1], b.rho, b.J_value, s.lhs, s.rhs, s.passed])
        level = float(pair.level_set.sum()) * grid.cell_volume
        deficit = covering.coverage_deficit(pair, balls)
        rep.add("covering", f"lambda={fmt(lam)}", "n_balls", len(balls), m=cfg.m, parameter=lam)
        rep.add("covering", f"lambda={fmt(lam)}", "level_set_measure", level, m=cfg.m, parameter=lam)
        rep.add("covering", f"lambda={fmt(lam)}", "coverage_deficit", deficit, m=cfg.m, parameter=lam)
        rep.check("covering", f"split lambda={fmt(lam)}", all(s.passed for s in splits), sum(s.passed for s in splits))
        rep.check("covering", f"coverage lambda={fmt(lam)}", deficit <= 0.01 * level, deficit)
        rep.check("covering", f"J within 5% lambda={fmt(lam)}", all(abs(b.J_value - 1) <= 0.05 for b in balls))
        if balls:
            last_pair, last_balls = pair, balls
    for r in table.rows:
        rep.add("cascade", f"lambda={fmt(r.lam)}", "lhs", r.lhs, m=cfg.m, parameter=r.lam)
        rep.add("cascade", f"lambda={fmt(r.lam)}", "rhs", r.rhs, m=cfg.m, parameter=r.lam)
        rep.add("cascade", f"lambda={fmt(r.lam)}", "C1", r.C1, m=cfg.m, parameter=r.lam)
    rep.add("cascade", "summary", "N1", table.N1, m=cfg.m)
    rep.add("cascade", "summary", "reassembled_ratio", table.reassembled_ratio, m=cfg.m)
    rep.check("covering", "cascade holds at every lambda", table.all_hold)
    write_table(cfg.out_dir / "balls.csv",
                ["lambda", "center_x", "center_y", "rho", "J", "split_lhs", "split_rhs", "split_pass"], ball_rows)
    write_table(cfg.out_dir / "cascade.csv",
                ["lambda", "mu", "n_balls", "coverage_deficit", "split_pass", "lhs", "bracket", "C1", "rhs"],
                [[r.lam, r.mu, r.n_balls, r.coverage_deficit, r.split_pass, r.lhs, r.bracket, r.C1, r.rhs]
                 for r in table.rows])
    if last_pair is None:
        last_pair = covering.normalize(u, f, p, M, lams[-1], alpha2=alpha2)
    plot_cover(cfg.out_dir / "cover.svg", last_pair, last_balls)


def cmd_cone_bound(cfg: RunConfig, rep: Report) -> None:
    grid = BallGrid(2, cfg.m)
    cutoff = probes.default_cutoff(grid)
    cone = probes.default_cone(2)
    t_list = float_list(cfg.t_list)
    bounds = [probes.cone_lower_bound(t, cone, cutoff, grid) for t in t_list]
    for t, b in zip(t_list, bounds):
        rep.add("cone_bound", f"t={fmt(t)}", "c_min", b.c_min, m=cfg.m, parameter=t)
        rep.add("cone_bound", f"t={fmt(t)}", "axis_slope", b.axis_slope, m=cfg.m, parameter=t)
    base = bounds[0]
    rep.check("cone_bound", "c_min positive", all(b.c_min > 0 for b in bounds), base.c_min)
    rep.check("cone_bound", "axis slope -n +- 0.2", abs(base.axis_slope + grid.n) <= 0.2, base.axis_slope)
    on_axis = np.all(np.abs(base.points[:, 1:]) < 0.5 * grid.h, axis=1)
    r = np.sqrt((base.points[on_axis] ** 2).sum(axis=1))
    order = np.argsort(r)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_table(cfg.out_dir / "cone_axis.csv", ["r", "d11"], list(zip(r[order], base.d11[on_axis][order])))
    plot_curve(cfg.out_dir / "cone_axis.svg", r[order], {"D11 u_t / t": base.d11[on_axis][order] / t_list[0]},
               "|x|", "D11 u_t / t")


COMMANDS = {
    "check-young": cmd_check_young,
    "solve": cmd_solve,
    "modular": cmd_modular,
    "ratio-sweep": cmd_ratio_sweep,
    "theorem-demo": cmd_theorem_demo,
    "covering-demo": cmd_covering_demo,
    "cone-bound": cmd_cone_bound,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; explicit flags override it")
    common.add_argument("--phi", help="Young function spec, ';'-separated for several")
    common.add_argument("--m", type=int, help="grid nodes per axis (odd, >= 65)")
    common.add_argument("--m-list", dest="m_list", help="resolutions for sweeps, e.g. 129,257")
    common.add_argument("--backend", choices=["fd", "green"])
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--t-list", dest="t_list")
    common.add_argument("--eps-list", dest="eps_list")
    common.add_argument("--lambda-list", dest="lambda_list")
    common.add_argument("--p", type=float)
    common.add_argument("--mweight", type=float)
    common.add_argument("--count", type=int, help="number of random sources")
    common.add_argument("--modes", type=int, help="bumps per random source")
    common.add_argument("--source", choices=["ones", "zeros", "random", "bumps"])
    common.add_argument("--tolerance", type=float, help="cross-resolution tolerance for sweeps")

    parser = argparse.ArgumentParser(prog="orlicz-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "theorem-demo":
            sp.add_argument("--direction", choices=["sufficiency", "delta2_necessity", "nabla2_necessity"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        rep = Report(cfg)
        COMMANDS[cfg.subcommand](cfg, rep)
        path = rep.write()
    except (OrliczLabError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for msg in rep.failures:
        print(f"FAIL {msg}", file=sys.stderr)
    print(f"wrote {path} ({len(rep.rows)} rows)")
    return 1 if rep.failures else 0


if __name__ == "__main__":
    sys.exit(main())
