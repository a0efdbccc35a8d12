"""Necessity constructions: cutoff, cone lower bound, integral condition, forcing pairs.

These are the extremal sources used to show that a modular Calderon-Zygmund
estimate forces phi into Delta_2 cap nabla_2. Numeric constants are measured on
the grid, never taken from closed-form chains.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import DegenerateFunctionError, ParameterError, PreconditionError
from .fields import BallGrid, HessianField, ScalarField, hessian_fd, smooth_step
from .modular import modular_direct
from .solvers import hessian_kernel_far, solve_fd_disk, solve_green_ball
from .young import YoungFunction, evaluate, linear


def default_cutoff_radii(n: int) -> tuple[float, float]:
    """Plateau radius 1/(12 sqrt n) and support radius 1/(6 sqrt n)."""
    return 1.0 / (12.0 * math.sqrt(n)), 1.0 / (6.0 * math.sqrt(n))


def _psi(s):
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)


def smooth_step_derivatives(s):
    """(S, S', S'') of the smooth step S(s) = psi(1-s) / (psi(1-s) + psi(s))."""
    s = np.asarray(s, dtype=float)
    S = smooth_step(s)
    d1 = np.zeros_like(s)
    d2 = np.zeros_like(s)
    inner = (s > 0) & (s < 1)
    x = s[inner]
    y = 1.0 - x
    A, B = _psi(y), _psi(x)
    A1 = -A / y**2
    A2 = A * (1.0 / y**4 - 2.0 / y**3)
    B1 = B / x**2
    B2 = B * (1.0 / x**4 - 2.0 / x**3)
    D = A + B
    D1 = A1 + B1
    N = A1 * B - A * B1
    N1 = A2 * B - A * B2
    d1[inner] = N / D**2
    d2[inner] = N1 / D**2 - 2.0 * N * D1 / D**3
    return S, d1, d2


@dataclass(frozen=True, eq=False)
class Cutoff:
    r_in: float
    r_out: float
    field: ScalarField
    C1: float
    C2: float

    @property
    def C3(self) -> float:
        return 0.5 * (self.C1 + self.C2)

    @property
    def gamma(self) -> float:
        return self.C3 / self.C1

    @property
    def grid(self) -> BallGrid:
        return self.field.grid

    def radial_derivatives(self):
        """eta'(r) and eta''(r) at every node, in closed form."""
        w = self.r_out - self.r_in
        _, d1, d2 = smooth_step_derivatives((self.grid.radius - self.r_in) / w)
        return d1 / w, d2 / (w * w)

    def laplacian(self) -> ScalarField:
        """Closed-form Laplace(eta) = eta'' + (n-1) eta' / r."""
        grid = self.grid
        e1, e2 = self.radial_derivatives()
        r = grid.radius
        lap = e2 + (grid.n - 1) * np.divide(e1, r, out=np.zeros_like(r), where=r > 0)
        return ScalarField(grid, lap)


def make_cutoff(n: int, r_in: float, r_out: float, grid: BallGrid) -> Cutoff:
    if grid.n != n:
        raise ParameterError("cutoff dimension does not match the grid")
    if not (0 < r_in < r_out < 1):
        raise ParameterError("need 0 < r_in < r_out < 1")
    vals = smooth_step((grid.radius - r_in) / (r_out - r_in))
    vals[grid.radius >= r_out] = 0.0
    eta = ScalarField(grid, vals)
    H = hessian_fd(eta)
    C1 = float(np.abs(H.laplacian.values).max())
    C2 = float(H.abs_sum.values.max())
    return Cutoff(r_in, r_out, eta, C1, C2)


def default_cutoff(grid: BallGrid) -> Cutoff:
    return make_cutoff(grid.n, *default_cutoff_radii(grid.n), grid)


@dataclass(frozen=True)
class ConeRegion:
    """{x in B_1 : |x| >= r_floor and |x_1| >= c0 |x|}."""

    r_floor: float
    c0: float
    reflect: bool = False  # mirror x_1 -> -x_1 (used for symmetry checks)

    def __post_init__(self):
        if not (0 < self.c0 < 1) or not (0 <= self.r_floor < 1):
            raise ParameterError("need 0 < c0 < 1 and 0 <= r_floor < 1")

    def mask(self, grid: BallGrid) -> np.ndarray:
        r = grid.radius
        x1 = -grid.coords[0] if self.reflect else grid.coords[0]
        return grid.inside_mask & (r >= self.r_floor) & (np.abs(x1) >= self.c0 * r)


def default_cone(n: int) -> ConeRegion:
    return ConeRegion(0.5 + 7.0 / (12.0 * math.sqrt(n)), 0.75)


@dataclass(frozen=True, eq=False)
class ConeBound:
    c_min: float
    points: np.ndarray
    d11: np.ndarray
    scaled: np.ndarray  # d11 * |x|^n / t
    axis_slope: float


def cone_lower_bound(t: float, cone: ConeRegion, cutoff: Cutoff, grid: BallGrid) -> ConeBound:
    """D_{x1x1} u_t on the cone for f_t = t * eta, via the far-field kernel.

    ``axis_slope`` is the least-squares slope of log D_{x1x1} u_t against
    log |x| over cone nodes on the x_1 axis (the |x|^{-n} profile).
    """
    if t <= 0:
        raise ParameterError("t must be positive")
    mask = cone.mask(grid)
    if not np.any(mask):
        raise PreconditionError("cone contains no grid nodes")
    pts = grid.points(mask)
    radii = np.sqrt((pts**2).sum(axis=1))
    if radii.min() - cutoff.r_out < 4.0 * grid.h:
        raise PreconditionError("cone is closer than 4h to the support of eta")
    f_t = cutoff.field.scaled(t)
    d11 = hessian_kernel_far(f_t, pts)[:, 0, 0]
    scaled = d11 * radii**grid.n / t
    on_axis = np.all(np.abs(pts[:, 1:]) < 0.5 * grid.h, axis=1)
    slope = math.nan
    if on_axis.sum() >= 2 and np.all(d11[on_axis] > 0):
        slope = float(np.polyfit(np.log(radii[on_axis]), np.log(d11[on_axis]), 1)[0])
    return ConeBound(float(scaled.min()), pts, d11, scaled, slope)


def band_constants(n: int) -> tuple[float, float]:
    """Integration band [c1 t, c2 t] obtained from the cone bound after the change of variable."""
    M = 36.0 * math.sqrt(n)
    c1 = M**-n / n**2
    c2 = (0.5 + 7.0 / (12.0 * math.sqrt(n))) ** -n * c1
    return c1, c2


def integral_condition_probe(phi: YoungFunction, t_list, c1: float, c2: float) -> np.ndarray:
    """R(t) = [int_{c1 t}^{c2 t} phi(s)/s^2 ds] / [phi(t)/t], by adaptive quadrature."""
    if not (0 < c1 < c2):
        raise ParameterError("need 0 < c1 < c2")
    t_arr = np.asarray(t_list, dtype=float)
    if np.any(t_arr <= 0):
        raise ParameterError("probe values of t must be positive")
    out = np.empty_like(t_arr)
    for k, t in enumerate(t_arr):
        with np.errstate(over="ignore"):
            pt = evaluate(phi, t)
        if math.isinf(pt):
            out[k] = math.nan  # phi overflows double precision here
            continue
        if pt == 0:
            raise DegenerateFunctionError(f"phi({t:g}) = 0")
        # substitute s = t e^y so the integrand is smooth on a fixed interval
        val, _ = integrate.quad(lambda y: evaluate(phi, t * math.exp(y)) * math.exp(-y) / t,
                                math.log(c1), math.log(c2), epsabs=0.0, epsrel=1e-12, limit=200)
        out[k] = val / (pt / t)
    return out


def monotone_slope_check(phi: YoungFunction, scan) -> bool:
    """True iff phi(t)/t is nondecreasing along the (increasing, positive) scan."""
    scan = np.asarray(scan, dtype=float)
    slope = evaluate(phi, scan) / scan
    return bool(np.all(np.diff(slope) >= -1e-12 * np.abs(slope[:-1])))


@dataclass(frozen=True, eq=False)
class RatioCurve:
    parameter: np.ndarray
    ratio: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def divergent(self) -> bool:
        return bool(np.any(np.isinf(self.ratio)))


def forcing_pair(cutoff: Cutoff, t: float) -> tuple[ScalarField, ScalarField]:
    """u_t = t eta / C1 and f_t = -t Laplace(eta) / C1, an exact solution pair."""
    # scale the t = 1 fields last so the pair is exactly linear in t
    return cutoff.field.scaled(1.0 / cutoff.C1).scaled(t), cutoff.laplacian().scaled(-1.0 / cutoff.C1).scaled(t)


def delta2_forcing_pair(phi: YoungFunction, cutoff: Cutoff, t_list, grid: BallGrid | None = None) -> RatioCurve:
    grid = cutoff.grid if grid is None else grid
    if grid != cutoff.grid:
        raise ParameterError("cutoff was built on a different grid")
    u1, f1 = forcing_pair(cutoff, 1.0)
    a1 = hessian_fd(u1).abs_sum
    t_arr = np.asarray(t_list, dtype=float)
    lhs, rhs = np.empty_like(t_arr), np.empty_like(t_arr)
    for k, t in enumerate(t_arr):
        lhs[k] = modular_direct(phi, a1.scaled(t)).value
        rhs[k] = modular_direct(phi, f1.scaled(t)).value
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(np.isinf(lhs), np.inf, lhs / rhs)
    return RatioCurve(t_arr, ratio, lhs, rhs)


def concentrated_source(grid: BallGrid, eps: float) -> ScalarField:
    """Exp-bump of radius eps at the origin with discrete unit mass."""
    if not (2.0 * grid.h < eps < 0.2):
        raise ParameterError(f"eps must lie in (2h, 0.2) = ({2 * grid.h:g}, 0.2)")
    s = grid.radius / eps
    with np.errstate(divide="ignore", over="ignore"):
        bump = np.where(s < 1.0, np.exp(-1.0 / np.maximum(1.0 - s * s, 1e-300)), 0.0)
    bump /= bump.sum() * grid.cell_volume
    return ScalarField(grid, bump)


@lru_cache(maxsize=8)
def _concentrated_solution(grid: BallGrid, eps: float, backend: str) -> tuple[ScalarField, HessianField]:
    f = concentrated_source(grid, eps)
    u = solve_fd_disk(f)[0] if backend == "fd" else solve_green_ball(f)
    return f, hessian_fd(u)


def nabla2_failure_demo(epsilon_list, grid: BallGrid, phi: YoungFunction | None = None,
                        backend: str = "fd") -> RatioCurve:
    """ratio(eps) = modular(phi, |D^2 u_eps|) / modular(phi, f_eps) for concentrating sources."""
    phi = linear() if phi is None else phi
    eps_arr = np.asarray(epsilon_list, dtype=float)
    lhs, rhs = np.empty_like(eps_arr), np.empty_like(eps_arr)
    for k, eps in enumerate(eps_arr):
        f, H = _concentrated_solution(grid, float(eps), backend)
        lhs[k] = modular_direct(phi, H.abs_sum).value
        rhs[k] = modular_direct(phi, f).value
    return RatioCurve(eps_arr, lhs / rhs, lhs, rhs)


def log_slope(curve: RatioCurve) -> float:
    """Least-squares slope of ratio against ln(1/parameter)."""
    return float(np.polyfit(np.log(1.0 / curve.parameter), curve.ratio, 1)[0])
