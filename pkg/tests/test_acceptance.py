"""Acceptance criteria 1-10: one pass/fail line each, with the stated tolerances and time budgets."""
import math
import time

import numpy as np

from orlicz_lab import cli
from orlicz_lab.covering import (coverage_deficit, level_set_cascade, normalization_energy, normalize,
                                 select_balls)
from orlicz_lab.fields import BallGrid, ScalarField, hessian_fd, narrow_bump_field, random_bandlimited_field
from orlicz_lab.modular import modular_direct, modular_layercake
from orlicz_lab.probes import (band_constants, cone_lower_bound, default_cone, default_cutoff,
                               delta2_forcing_pair, integral_condition_probe, log_slope, nabla2_failure_demo)
from orlicz_lab.solvers import solve_fd_disk, solve_green_ball
from orlicz_lab.young import check_delta2, check_nabla2, exp_type, linear, power, power_log

POSITIVE = {"power(1.5)": power(1.5), "power(2)": power(2), "power(3)": power(3), "powerlog(2)": power_log(2)}


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def indicator_source(grid):
    return ScalarField(grid, (grid.radius <= 1.0 - 2.0 * grid.h).astype(float))


def test_criterion_01_young_analytics(record_criterion):
    with Timer() as tm:
        fails = []
        for p in (1.5, 2.0, 3.0):
            d2, n2 = check_delta2(power(p)), check_nabla2(power(p))
            if abs(d2.K / 2.0**p - 1) > 1e-9 or abs(d2.alpha1 / p - 1) > 1e-9:
                fails.append(f"delta2 p={p}: K={d2.K!r} alpha1={d2.alpha1!r}")
            target = 2.0 ** (1.0 / (p - 1.0))
            step = 2.0 ** (1.0 / 8.0)
            if not (target * (1 - 1e-12) <= n2.a <= target * step * (1 + 1e-12)):
                fails.append(f"nabla2 p={p}: a={n2.a!r} vs {target!r}")
            # alpha2 = log_a 2 + 1, so an a within one step of the target bounds alpha2
            lo = math.log(2) / math.log(target * step) + 1
            if not (lo * (1 - 1e-12) <= n2.alpha2 <= p * (1 + 1e-12)):
                fails.append(f"alpha2 p={p}: {n2.alpha2!r} not in [{lo:.6f}, {p}]")
        if check_nabla2(linear()).satisfied:
            fails.append("linear passes nabla2")
        if check_delta2(exp_type()).satisfied:
            fails.append("exp passes delta2")
    ok = not fails and tm.seconds < 5
    record_criterion(1, ok, f"Young analytics {'; '.join(fails) or 'all exact'} in {tm.seconds:.2f} s (< 5 s)")
    assert ok


def manufactured_error(m):
    g = BallGrid(2, m)
    exact = ScalarField.from_function(g, lambda x, y: (1 - x * x - y * y) ** 2)
    f = ScalarField.from_function(g, lambda x, y: 8 - 16 * (x * x + y * y))
    u, _ = solve_fd_disk(f)
    return np.abs(u.values - exact.values)[g.inside_mask].max()


def test_criterion_02_solver_convergence(record_criterion):
    with Timer() as tm:
        ratio = manufactured_error(129) / manufactured_error(257)
        g = BallGrid(2, 257)
        sources = [indicator_source(g)] + [random_bandlimited_field(g, 4, s) for s in range(3)]
        gaps = [np.abs(solve_fd_disk(f)[0].values - solve_green_ball(f).values).max() for f in sources]
    ok = 3.4 <= ratio <= 4.6 and max(gaps) <= 1e-3 and tm.seconds < 60
    record_criterion(2, ok, f"FD error ratio 129->257 = {ratio:.3f} (in [3.4, 4.6]); "
                            f"max |Green - FD| = {max(gaps):.2e} (<= 1e-3); {tm.seconds:.1f} s (< 60 s)")
    assert ok


def test_criterion_03_modular_equivalence(record_criterion):
    with Timer() as tm:
        g = BallGrid(2, 257)
        worst = 0.0
        for seed in range(10):
            field = random_bandlimited_field(g, 4, seed)
            for phi in (power(2), power_log(2)):
                d = modular_direct(phi, field).value
                worst = max(worst, abs(modular_layercake(phi, field).value - d) / d)
    ok = worst <= 0.01 and tm.seconds < 30
    record_criterion(3, ok, f"worst layer-cake gap {worst:.2e} (<= 1e-2) over 10 fields x 2 phi; "
                            f"{tm.seconds:.1f} s (< 30 s)")
    assert ok


def test_criterion_04_sufficiency_sweep(record_criterion):
    with Timer() as tm:
        maxima = {name: {} for name in POSITIVE}
        for m in (129, 257):
            g = BallGrid(2, m)
            for seed in range(20):
                f = random_bandlimited_field(g, 4, seed)
                a = hessian_fd(solve_fd_disk(f)[0]).abs_sum
                for name, phi in POSITIVE.items():
                    r = modular_direct(phi, a).value / modular_direct(phi, f).value
                    maxima[name][m] = max(maxima[name].get(m, 0.0), r)
        g = BallGrid(2, 257)
        f1 = indicator_source(g)
        r_ones = (modular_direct(power(2), hessian_fd(solve_fd_disk(f1)[0]).abs_sum).value
                  / modular_direct(power(2), f1).value)
    spreads = {k: abs(v[257] - v[129]) / v[129] for k, v in maxima.items()}
    finite = all(math.isfinite(x) for v in maxima.values() for x in v.values())
    ok = finite and max(spreads.values()) <= 0.15 and abs(r_ones - 1) <= 0.05 and tm.seconds < 300
    detail = ", ".join(f"{k} max R {v[257]:.3f} (spread {spreads[k]:.1%})" for k, v in maxima.items())
    record_criterion(4, ok, f"{detail}; f=1 power(2) R = {r_ones:.4f} (1 +- 0.05); {tm.seconds:.1f} s (< 300 s)")
    assert ok


def test_criterion_05_delta2_necessity(record_criterion):
    with Timer() as tm:
        cutoff = default_cutoff(BallGrid(2, 513))
        t = list(range(1, 11))
        exp_curve = delta2_forcing_pair(exp_type(), cutoff, t)
        ctrl = delta2_forcing_pair(power(2), cutoff, t)
    growth = exp_curve.ratio[-1] / exp_curve.ratio[0]
    increasing = bool(np.all(np.diff(exp_curve.ratio) > 0))
    spread = ctrl.ratio.max() / ctrl.ratio.min() - 1
    ok = increasing and growth > 100 and spread < 0.05 and tm.seconds < 60
    record_criterion(5, ok, f"m=513 exp ratio(10)/ratio(1) = {growth:.1f} (> 100), increasing={increasing}; "
                            f"power(2) spread {spread:.1e} (< 5%); {tm.seconds:.1f} s (< 60 s)")
    assert ok


def test_criterion_06_nabla2_necessity(record_criterion):
    with Timer() as tm:
        g = BallGrid(2, 513)
        eps = [0.1, 0.05, 0.025, 0.0125]
        lin = nabla2_failure_demo(eps, g, linear())
        ctrl = nabla2_failure_demo(eps, g, power(2))
    increasing = bool(np.all(np.diff(lin.ratio) > 0))
    slope = log_slope(lin)
    spread = ctrl.ratio.max() / ctrl.ratio.min() - 1
    ok = increasing and slope > 0 and spread < 0.2 and tm.seconds < 300
    record_criterion(6, ok, f"m=513 linear increasing={increasing}, slope vs ln(1/eps) = {slope:.3f} (> 0); "
                            f"power(2) spread {spread:.1%} (< 20%); {tm.seconds:.1f} s (< 300 s)")
    assert ok


def test_criterion_07_integral_probe(record_criterion):
    with Timer() as tm:
        t = np.geomspace(1e-3, 1e3, 61)
        lit1, lit2 = band_constants(2)
        # same band width c2/c1, anchored at c1 = 1
        c1, c2 = 1.0, lit2 / lit1
        worst = 0.0
        for p in (1.5, 2.0, 3.0):
            R = integral_condition_probe(power(p), t, c1, c2)
            worst = max(worst, np.abs(R / ((c2 ** (p - 1) - c1 ** (p - 1)) / (p - 1)) - 1).max())
        R = integral_condition_probe(linear(), t, c1, c2)
        worst = max(worst, np.abs(R / math.log(c2 / c1) - 1).max())
        R = integral_condition_probe(power_log(2), t, c1, c2)
        spread = R.max() / R.min()
        R_lit = integral_condition_probe(power_log(2), t, lit1, lit2)
    ok = worst <= 1e-6 and spread <= 10 and tm.seconds < 5
    record_criterion(7, ok, f"closed-form rel. error {worst:.1e} (<= 1e-6); powerlog(2) max/min {spread:.3f} "
                            f"(<= 10) on band [t, {c2:.4f} t]; {tm.seconds:.2f} s (< 5 s)")
    record_criterion(7, None, f"band [{lit1:.3e} t, {lit2:.3e} t] gives powerlog(2) max/min "
                                     f"{R_lit.max() / R_lit.min():.2f}")
    assert ok


def test_criterion_08_cone_bound(record_criterion):
    with Timer() as tm:
        cmin, slopes = {}, {}
        linear_ok = True
        for m in (257, 513):
            g = BallGrid(2, m)
            cut = default_cutoff(g)
            b1 = cone_lower_bound(1.0, default_cone(2), cut, g)
            b5 = cone_lower_bound(5.0, default_cone(2), cut, g)
            cmin[m], slopes[m] = b1.c_min, b1.axis_slope
            linear_ok &= bool(np.allclose(b5.d11, 5.0 * b1.d11, rtol=1e-13, atol=0))
    variation = abs(cmin[513] - cmin[257]) / cmin[513]
    ok = (min(cmin.values()) > 0 and variation <= 0.2 and all(abs(s + 2) <= 0.2 for s in slopes.values())
          and linear_ok and tm.seconds < 120)
    record_criterion(8, ok, f"c_min {cmin[257]:.4e}/{cmin[513]:.4e} (variation {variation:.2%} <= 20%); "
                            f"axis slopes {slopes[257]:.3f}/{slopes[513]:.3f} (-2 +- 0.2); "
                            f"linear in t={linear_ok}; {tm.seconds:.1f} s (< 120 s)")
    assert ok


COVER_P, COVER_M, COVER_LEVELS = 1.1, 1.5, (0.4, 0.6, 0.8)


def covering_run(m, seed):
    g = BallGrid(2, m)
    f = narrow_bump_field(g, 4, seed)
    u = solve_fd_disk(f)[0]
    a = hessian_fd(u).abs_sum
    E = normalization_energy(u, f, COVER_P, COVER_M, a)
    lams = [c * a.max_abs() / E for c in COVER_LEVELS]
    table = level_set_cascade(u, f, power(2), COVER_P, COVER_M, lams)
    problems = []
    for lam, row in zip(lams, table.rows):
        pair = normalize(u, f, COVER_P, COVER_M, lam)
        balls = select_balls(pair)
        pts = np.array([b.center_point(g) for b in balls])
        for i in range(len(balls)):
            for j in range(i + 1, len(balls)):
                if np.linalg.norm(pts[i] - pts[j]) <= balls[i].rho + balls[j].rho:
                    problems.append(f"overlap seed={seed} m={m}")
        if any(abs(b.J_value - 1) > 0.05 for b in balls):
            problems.append(f"J seed={seed} m={m}")
        level = pair.level_set.sum() * g.cell_volume
        if coverage_deficit(pair, balls) > 0.01 * level:
            problems.append(f"coverage seed={seed} m={m}")
        if row.split_pass != row.n_balls or row.n_balls != len(balls):
            problems.append(f"split seed={seed} m={m}")
    if not table.all_hold:
        problems.append(f"cascade seed={seed} m={m}")
    sup_v = max((c.sup_D2v for c in table.comparisons), default=0.0)
    n_balls = sum(r.n_balls for r in table.rows)
    return table.N1, sup_v, n_balls, problems


def test_criterion_09_covering_engine(record_criterion):
    with Timer() as tm:
        results = {(m, s): covering_run(m, s) for s in range(5) for m in (129, 257)}
    problems = [p for r in results.values() for p in r[3]]
    n1_var, supv_var = [], []
    for s in range(5):
        lo, hi = results[(129, s)], results[(257, s)]
        n1_var.append(abs(hi[0] - lo[0]) / hi[0])
        supv_var.append(abs(hi[1] - lo[1]) / hi[1] if hi[1] > 0 else math.inf)
    finite = all(math.isfinite(r[0]) and math.isfinite(r[1]) for r in results.values())
    balls = sum(r[2] for r in results.values())
    ok = not problems and finite and max(n1_var) <= 0.25 and max(supv_var) <= 0.25 and tm.seconds < 300
    record_criterion(9, ok, f"{balls} balls over 5 pairs x 3 lambda x 2 grids; issues: {problems or 'none'}; "
                            f"N1 variation {max(n1_var):.1%}, raw max sup|D2v| variation {max(supv_var):.1%} "
                            f"(<= 25%); {tm.seconds:.1f} s (< 300 s)")
    assert ok


DETERMINISM_RUNS = {
    "check-young": [],
    "solve": [],
    "modular": ["--count", "10"],
    "ratio-sweep": ["--count", "5"],
    "theorem-demo": ["--direction", "delta2_necessity"],
    "covering-demo": [],
    "cone-bound": ["--m", "257"],
}


def test_criterion_10_determinism(record_criterion, tmp_path):
    differing = []
    with Timer() as tm:
        for command, extra in DETERMINISM_RUNS.items():
            outs = []
            for k in range(2):
                out = tmp_path / f"{command}-{k}"
                assert cli.main([command, *extra, "--out", str(out)]) in (0, 1)
                outs.append(out)
            for path in sorted(outs[0].glob("*.csv")):
                if path.read_bytes() != (outs[1] / path.name).read_bytes():
                    differing.append(f"{command}/{path.name}")
    ok = not differing
    record_criterion(10, ok, f"7 subcommands run twice: differing CSV {differing or 'none'}; {tm.seconds:.1f} s")
    assert ok
