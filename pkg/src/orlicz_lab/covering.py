"""Discrete iteration-covering machinery for the modular Calderon-Zygmund estimate.

Given a solution pair (u, f) the level sets of |D^2 u| are covered by
stopping-radius balls, each ball is compared with a harmonic replacement, and
the resulting bookkeeping is checked level by level.

Balls are soft: a node at distance d from the centre carries weight
clip((rho - d) / h, 0, 1). This makes the averaged functional J continuous in
rho, so the stopping radius can be located by bisection, and keeps the
support of a ball strictly inside the open ball of radius rho. Fields are
extended by zero outside B_1, so averages always divide by the full
(weighted) ball measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import DegenerateInputError, ParameterError, PreconditionError
from .fields import BallGrid, ScalarField, hessian_fd, lattice_offsets
from .modular import modular_direct
from .solvers import solve_dirichlet, unit_ball_volume
from .young import YoungFunction, evaluate

SELECTION_TOL = 0.05
RADIUS_STEP = 1.12


@dataclass(frozen=True, eq=False)
class NormalizedPair:
    """u_lambda = u / (E lambda), f_lambda = f / (E lambda) with
    E^p = int |D^2 u|^p + M^p int |f|^p."""

    u_lambda: ScalarField
    f_lambda: ScalarField
    hess_abs: ScalarField  # |D^2 u_lambda|, on the Hessian valid mask
    E: float
    lam: float
    p: float
    M_weight: float

    @property
    def grid(self) -> BallGrid:
        return self.u_lambda.grid

    @property
    def density(self) -> np.ndarray:
        """|D^2 u_lambda|^p + M^p |f_lambda|^p per node (zero off the masks)."""
        return self.hess_abs.values**self.p + self.M_weight**self.p * np.abs(self.f_lambda.values) ** self.p

    @property
    def level_set(self) -> np.ndarray:
        """E_lambda(1) = {|D^2 u_lambda| > 1}."""
        return self.hess_abs.mask & (self.hess_abs.values > 1.0)


def normalization_energy(u: ScalarField, f: ScalarField, p: float, M_weight: float, hess_abs=None) -> float:
    a = hessian_fd(u).abs_sum if hess_abs is None else hess_abs
    cell = u.grid.cell_volume
    total = np.sum(a.masked_values() ** p) * cell + M_weight**p * np.sum(np.abs(f.masked_values()) ** p) * cell
    return float(total ** (1.0 / p))


def normalize(u: ScalarField, f: ScalarField, p: float, M_weight: float, lam: float,
              alpha2: float | None = None) -> NormalizedPair:
    if p <= 1.0 or (alpha2 is not None and p >= alpha2):
        raise ParameterError(f"need 1 < p < alpha2, got p = {p:g}")
    if M_weight <= 1.0:
        raise ParameterError("M_weight must exceed 1")
    if lam <= 0:
        raise ParameterError("lambda must be positive")
    a = hessian_fd(u).abs_sum
    E = normalization_energy(u, f, p, M_weight, a)
    if E == 0.0:
        raise DegenerateInputError("u and f both vanish; the normalization is undefined")
    s = 1.0 / (E * lam)
    return NormalizedPair(u.scaled(s), f.scaled(s), a.scaled(s), E, lam, p, M_weight)


@dataclass(frozen=True)
class BallSelection:
    center: tuple
    rho: float
    J_value: float

    def center_point(self, grid: BallGrid) -> np.ndarray:
        return np.array([grid.axis[k] for k in self.center])


_OFFSETS: dict = {}


def _sorted_offsets(n: int, radius_nodes: float):
    """Lattice offsets with length < radius_nodes, sorted by length (stable)."""
    cached = _OFFSETS.get(n)
    if cached is None or cached[2] < radius_nodes:
        R = max(radius_nodes, 2.0 * cached[2] if cached else 8.0)
        offs = lattice_offsets(R, n)
        d = np.sqrt((offs**2).sum(axis=1))
        order = np.argsort(d, kind="stable")
        cached = _OFFSETS[n] = (offs[order], d[order], R)
    offs, d, _ = cached
    k = np.searchsorted(d, radius_nodes, side="left")
    return offs[:k], d[:k]


def _soft_sum(d_sorted: np.ndarray, q_prefix: np.ndarray, dq_prefix: np.ndarray, R: float) -> float:
    """sum_k clip(R - d_k, 0, 1) q_k from prefix sums over distance-sorted offsets."""
    i_full = np.searchsorted(d_sorted, R - 1.0, side="right")
    i_any = np.searchsorted(d_sorted, R, side="left")
    ramp_q = q_prefix[i_any] - q_prefix[i_full]
    ramp_dq = dq_prefix[i_any] - dq_prefix[i_full]
    return float(q_prefix[i_full] + R * ramp_q - ramp_dq)


_EXACT_MEASURE_NODES = 400.0


def ball_measure(grid: BallGrid, rho: float) -> float:
    """Weighted measure h^n sum clip((rho - d)/h, 0, 1) over the infinite lattice.

    Exact lattice sum up to 400 nodes of radius; beyond that the lattice count
    is replaced by w_n r^n, i.e. h^n w_n (R^(n+1) - (R-1)^(n+1)) / (n+1).
    """
    R = rho / grid.h
    if R > _EXACT_MEASURE_NODES:
        n = grid.n
        return unit_ball_volume(n) * (R ** (n + 1) - (R - 1.0) ** (n + 1)) / (n + 1) * grid.cell_volume
    _, d = _sorted_offsets(grid.n, R)
    return float(np.clip(R - d, 0.0, 1.0).sum()) * grid.cell_volume


class _CenterProfile:
    """J(rho) at one centre from distance-sorted prefix sums of the density.

    Offsets are only stored up to the grid diameter; beyond it the numerator
    is saturated and the denominator comes from ``ball_measure``.
    """

    def __init__(self, density: np.ndarray, grid: BallGrid, center: tuple, rho_max: float):
        reach = min(rho_max / grid.h + 1.0, (grid.m - 1) * math.sqrt(grid.n) + 1.0)
        offs, d = _sorted_offsets(grid.n, reach)
        idx = offs + np.asarray(center)
        inb = np.all((idx >= 0) & (idx < grid.m), axis=1)
        q = np.zeros(len(d))
        q[inb] = density[tuple(idx[inb].T)]
        self.grid = grid
        self.d = d
        self.q_prefix = np.concatenate([[0.0], np.cumsum(q)])
        self.dq_prefix = np.concatenate([[0.0], np.cumsum(d * q)])

    def J(self, rho: float) -> float:
        num = _soft_sum(self.d, self.q_prefix, self.dq_prefix, rho / self.grid.h)
        return num * self.grid.cell_volume / ball_measure(self.grid, rho)

    def bisect(self, lo: float, hi: float, iters: int = 60) -> tuple[float, float]:
        """Radius in [lo, hi] where J crosses 1, assuming J(lo) >= 1 > J(hi)."""
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if self.J(mid) >= 1.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12 * hi:
                break
        return lo, self.J(lo)


def j_functional(pair: NormalizedPair, center, rho: float) -> float:
    """J_lambda[B_rho(center)]: soft-ball average of |D^2 u_l|^p + M^p |f_l|^p.

    Evaluated by a direct weighted sum, independent of the FFT sweep used by
    ``select_balls``.
    """
    grid = pair.grid
    center = tuple(int(c) for c in center)
    if rho <= 0:
        raise ParameterError("rho must be positive")
    w = _soft_weights(grid, center, rho)
    if not np.any(grid.inside_mask & (w > 0)):
        raise PreconditionError("ball does not meet the unit ball")
    return float(np.sum(w * pair.density)) * grid.cell_volume / ball_measure(grid, rho)


def stopping_radius_cap(pair: NormalizedPair) -> float:
    """Radius beyond which lambda^p |B_rho| > 1, hence J < 1 everywhere."""
    grid = pair.grid
    target = pair.lam ** (-pair.p)
    lo, hi = grid.h, grid.h
    while ball_measure(grid, hi) <= target:
        lo, hi = hi, hi * 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ball_measure(grid, mid) <= target:
            lo = mid
        else:
            hi = mid
    return hi


def _soft_kernel(grid: BallGrid, rho: float) -> np.ndarray:
    R = rho / grid.h
    r = int(math.ceil(R))
    ax = np.arange(-r, r + 1)
    d = np.sqrt(sum(a * a for a in np.meshgrid(*([ax] * grid.n), indexing="ij")))
    return np.clip(R - d, 0.0, 1.0)


def select_balls(pair: NormalizedPair, step: float = RADIUS_STEP) -> list[BallSelection]:
    """Stopping-radius balls for the level set E_lambda(1), greedily made disjoint.

    Every level-set node gets a bracket [rho_j, rho_j * step] on a geometric
    radius grid: J >= 1 at rho_j and J < 1 at every larger grid radius (FFT
    sweep). Nodes are visited by decreasing bracket, then decreasing
    |D^2 u_lambda|, then node index; a node whose bracket already forces an
    overlap with a kept ball is skipped, otherwise its radius is bisected to
    J = 1 and the ball is kept if disjoint from all kept balls.
    """
    grid = pair.grid
    level = pair.level_set
    if not np.any(level):
        return []
    density = pair.density
    rho_cap = stopping_radius_cap(pair)
    diameter = 2.0 * math.sqrt(grid.n)
    radii = [0.5 * grid.h]
    while radii[-1] * step < min(rho_cap, diameter + grid.h):
        radii.append(radii[-1] * step)
    radii = np.array(radii + [rho_cap])  # J < 1 at rho_cap by construction

    nodes = np.nonzero(level)
    bracket = np.zeros(nodes[0].size, dtype=int)
    for j, rho in enumerate(radii[:-1]):
        ker = _soft_kernel(grid, rho)
        num = fftconvolve(density, ker, mode="same")[nodes]
        J = num * grid.cell_volume / ball_measure(grid, rho)
        bracket[J >= 1.0] = j
    values = pair.hess_abs.values[nodes]
    flat = np.ravel_multi_index(nodes, grid.shape)
    order = np.lexsort((flat, -values, -bracket))

    pts = np.stack([grid.axis[k] for k in nodes], axis=1)
    kept: list[BallSelection] = []
    kept_pts = np.empty((0, grid.n))
    kept_rho = np.empty(0)
    for k in order:
        j = bracket[k]
        lo = radii[j]
        hi = radii[j + 1]
        if kept:
            dist = np.sqrt(((kept_pts - pts[k]) ** 2).sum(axis=1))
            if np.any(dist <= lo + kept_rho):
                continue
        center = tuple(int(c[k]) for c in nodes)
        prof = _CenterProfile(density, grid, center, hi)
        rho, Jv = prof.bisect(lo, hi)
        if kept and np.any(dist <= rho + kept_rho):
            continue
        kept.append(BallSelection(center, float(rho), float(Jv)))
        kept_pts = np.vstack([kept_pts, pts[k]])
        kept_rho = np.append(kept_rho, rho)
    return kept


def coverage_deficit(pair: NormalizedPair, balls: list[BallSelection], dilation: float = 5.0) -> float:
    """Measure of E_lambda(1) not covered by the dilated balls."""
    grid = pair.grid
    level = pair.level_set
    if not np.any(level):
        return 0.0
    pts = grid.points(level)
    covered = np.zeros(len(pts), dtype=bool)
    for b in balls:
        c = b.center_point(grid)
        covered |= ((pts - c) ** 2).sum(axis=1) < (dilation * b.rho) ** 2
    return float((~covered).sum()) * grid.cell_volume


def _soft_weights(grid: BallGrid, center: tuple, rho: float) -> np.ndarray:
    d = np.sqrt(sum((x - grid.axis[c]) ** 2 for x, c in zip(grid.coords, center)))
    return np.clip((rho - d) / grid.h, 0.0, 1.0)


@dataclass(frozen=True)
class SplitCheck:
    passed: bool
    lhs: float
    rhs: float


def measure_split_check(pair: NormalizedPair, ball: BallSelection, tol: float = SELECTION_TOL) -> SplitCheck:
    """|B| <= 2^(p-1)/(2^(p-1)-1) * (int_{a > 1/2} a^p + M^p int_{|f| > 1/(2M)} |f|^p) over the ball."""
    grid, p, M = pair.grid, pair.p, pair.M_weight
    w = _soft_weights(grid, ball.center, ball.rho)
    a = pair.hess_abs.values
    fl = np.abs(pair.f_lambda.values)
    big_a = (a > 0.5) & pair.hess_abs.mask
    big_f = (fl > 0.5 / M) & pair.f_lambda.mask
    X = (np.sum(w * a**p * big_a) + M**p * np.sum(w * fl**p * big_f)) * grid.cell_volume
    cp = 2.0 ** (p - 1) / (2.0 ** (p - 1) - 1.0)
    lhs = ball_measure(grid, ball.rho)
    rhs = cp * X
    return SplitCheck(bool(lhs <= rhs * (1.0 + tol)), float(lhs), float(rhs))


@dataclass(frozen=True)
class ComparisonReport:
    ball: BallSelection
    sup_D2v: float  # sup of |D^2 v| over the 5 rho ball
    sup_D2w: float  # sup of |D^2 w| over the 10 rho domain
    wp_ratio: float  # sum |D^2 w|^p / sum |f_lambda|^p over the 10 rho domain
    N1: float
    clipped: bool  # the 10 rho ball leaves B_1
    ball_ratio: float = 0.0  # max(1, J[B_{10 rho + h}]) |B_{10 rho + h}| / |B_rho|


def harmonic_split(pair: NormalizedPair, ball: BallSelection):
    """(domain, v, w): v discrete-harmonic on B_{10 rho} cap B_1 with v = u_lambda off it, w = u_lambda - v."""
    grid = pair.grid
    c = ball.center_point(grid)
    dist = np.sqrt(sum((x - ci) ** 2 for x, ci in zip(grid.coords, c)))
    domain = grid.inside_mask & (dist < 10.0 * ball.rho)
    if not np.any(domain):
        raise PreconditionError("comparison ball misses the unit ball")
    u = pair.u_lambda.values
    v_vals, _, _ = solve_dirichlet(grid, domain, np.zeros(grid.shape), data=u)
    return domain, ScalarField(grid, v_vals), ScalarField(grid, u - v_vals)


def harmonic_compare(pair: NormalizedPair, ball: BallSelection, n1_prev: float = 0.0) -> ComparisonReport:
    """Compare u_lambda with its harmonic replacement on B_{10 rho} cap B_1."""
    grid, p = pair.grid, pair.p
    domain, v, w = harmonic_split(pair, ball)
    c = ball.center_point(grid)
    dist = np.sqrt(sum((x - ci) ** 2 for x, ci in zip(grid.coords, c)))
    Hv = hessian_fd(v).abs_sum
    Hw = hessian_fd(w).abs_sum
    inner = (dist < 5.0 * ball.rho) & Hv.mask
    sup_v = float(Hv.values[inner].max()) if np.any(inner) else 0.0
    on_domain = domain & Hw.mask
    sup_w = float(Hw.values[on_domain].max()) if np.any(on_domain) else 0.0
    num = float(np.sum(Hw.values[on_domain] ** p))
    den = float(np.sum(np.abs(pair.f_lambda.values[domain]) ** p))
    if den > 0:
        wp = num / den
    else:
        # f_lambda = 0: w should vanish up to solver tolerance
        wp = 0.0 if sup_w <= 1e-6 * max(1.0, sup_v) else math.inf
    clipped = bool(np.linalg.norm(c) + 10.0 * ball.rho >= 1.0)
    # mass of B_{10 rho + h} over |B_rho|; J there is normally < 1, floor it at 1 so the bound stays valid
    big = 10.0 * ball.rho + grid.h
    j_big = j_functional(pair, ball.center, big)
    ratio = max(1.0, j_big) * ball_measure(grid, big) / ball_measure(grid, ball.rho)
    return ComparisonReport(ball, sup_v, sup_w, wp, max(n1_prev, sup_v), clipped, ratio)


def cascade_coefficients(C1: float, M_weight: float, p: float, mu: float) -> tuple[float, float]:
    """Coefficients of the |D^2 u| term and of the f term in the level-set bound."""
    return C1 / (M_weight**p * mu**p), C1 / mu**p


@dataclass(frozen=True, eq=False)
class CascadeRow:
    lam: float
    mu: float
    n_balls: int
    coverage_deficit: float
    split_pass: int
    lhs: float
    bracket: float
    C1: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-9) + 1e-300


@dataclass(frozen=True, eq=False)
class CascadeTable:
    rows: list
    N1: float
    E: float
    modular_lhs: float = math.nan
    reassembled_rhs: float = math.nan
    comparisons: list = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return all(r.holds for r in self.rows)

    @property
    def reassembled_ratio(self) -> float:
        if not math.isfinite(self.reassembled_rhs) or self.reassembled_rhs == 0:
            return math.nan
        return self.modular_lhs / self.reassembled_rhs


def _bracket_mass(a: np.ndarray, f: np.ndarray, mu: float, p: float, M: float, cell: float) -> float:
    """int_{|D^2 u| > mu/2} |D^2 u|^p + M^p int_{|f| > mu/(2M)} |f|^p."""
    return float((np.sum(a[a > mu / 2.0] ** p) + M**p * np.sum(f[f > mu / (2.0 * M)] ** p)) * cell)


def level_set_cascade(u: ScalarField, f: ScalarField, phi: YoungFunction, p: float, M_weight: float,
                      lambda_grid, reassembly_points: int = 2000) -> CascadeTable:
    """Level-by-level check of |{|D^2 u| > 2 N1 mu}| <= C1 / (M^p mu^p) * bracket(mu).

    C1 = W * K * c_p / N1^p is assembled from measured quantities: W the largest
    L^p ratio of w to f on the comparison balls, K the largest mass ratio
    max(1, J) |B_{10 rho + h}| / |B_rho|, and c_p = max 1 / (J_i - 2^(1-p)).
    """
    grid = u.grid
    lam_arr = np.asarray(lambda_grid, dtype=float)
    a_field = hessian_fd(u).abs_sum
    E = normalization_energy(u, f, p, M_weight, a_field)
    a_vals = a_field.masked_values()
    f_vals = np.abs(f.masked_values())
    cell = grid.cell_volume
    if E == 0.0:
        rows = [CascadeRow(float(l), 0.0, 0, 0.0, 0, 0.0, 0.0, 0.0, 0.0) for l in lam_arr]
        return CascadeTable(rows, 1.0, 0.0, 0.0, 0.0)

    per_level = []
    comparisons = []
    N1 = 1.0
    for lam in lam_arr:
        pair = normalize(u, f, p, M_weight, float(lam))
        balls = select_balls(pair)
        reports = []
        for b in balls:
            rep = harmonic_compare(pair, b, N1)
            N1 = rep.N1
            reports.append(rep)
        splits = [measure_split_check(pair, b) for b in balls]
        per_level.append((float(lam), pair, balls, reports, splits))
        comparisons.extend(reports)

    rows = []
    C1_max = 0.0
    for lam, pair, balls, reports, splits in per_level:
        mu = lam * E
        lhs = float(np.count_nonzero(a_vals > 2.0 * N1 * mu)) * cell
        bracket = _bracket_mass(a_vals, f_vals, mu, p, M_weight, cell)
        if balls:
            W = max(r.wp_ratio for r in reports)
            K = max(r.ball_ratio for r in reports)
            cp = max(1.0 / (b.J_value - 2.0 ** (1.0 - p)) for b in balls)
            C1 = W * K * cp / N1**p
        else:
            C1 = 0.0
        C1_max = max(C1_max, C1)
        du_coef, _ = cascade_coefficients(C1, M_weight, p, mu)
        rows.append(CascadeRow(lam, mu, len(balls), coverage_deficit(pair, balls),
                               sum(s.passed for s in splits), lhs, bracket, C1, du_coef * bracket))

    modular_lhs = modular_direct(phi, a_field).value
    top = float(a_vals.max()) if a_vals.size else 0.0
    reassembled = math.nan
    if top > 0 and C1_max > 0:
        mus = np.concatenate([[0.0], np.geomspace(top * 1e-8, top, reassembly_points)]) / (2.0 * N1)
        inc = np.diff(evaluate(phi, 2.0 * N1 * mus))
        mid = np.sqrt(mus[:-1] * mus[1:])
        mid[0] = mus[1] / 2.0
        brk = np.array([_bracket_mass(a_vals, f_vals, m_, p, M_weight, cell) for m_ in mid])
        reassembled = float(np.sum(C1_max / (M_weight**p * mid**p) * brk * inc))
    return CascadeTable(rows, N1, E, modular_lhs, reassembled, comparisons)
