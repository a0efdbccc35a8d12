"""Dirichlet-Poisson solvers on the unit ball and explicit kernel representations.

Two independent backends solve -Laplace(u) = f in B_1, u = 0 on the sphere:

* ``solve_fd_disk``: 5-point Shortley-Weller finite differences (n = 2), arms
  cut at the circle, Jacobi-preconditioned BiCGSTAB.
* ``solve_green_ball``: quadrature against the Dirichlet Green's function of
  the ball (fundamental solution minus its image at xi/|xi|^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.signal import fftconvolve

from .errors import ParameterError, PreconditionError, SolverFailure
from .fields import BallGrid, ScalarField

RESIDUAL_TOL = 1e-10
MAX_ITER = 100_000


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True)
class FundamentalSolution:
    """Gamma(x) for -Laplace: -(1/2pi) ln|x| if n = 2, |x|^(2-n) / (n(n-2) w_n) if n > 2."""

    n: int

    @property
    def w_n(self) -> float:
        return unit_ball_volume(self.n)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            if self.n == 2:
                return -np.log(r) / (2.0 * math.pi)
            return r ** (2 - self.n) / (self.n * (self.n - 2) * self.w_n)

    def of_squared(self, r2):
        """Gamma evaluated from |x|^2, avoiding a square root."""
        r2 = np.asarray(r2, dtype=float)
        with np.errstate(divide="ignore"):
            if self.n == 2:
                return -np.log(r2) / (4.0 * math.pi)
            return r2 ** ((2 - self.n) / 2) / (self.n * (self.n - 2) * self.w_n)

    def cell_integral(self, h: float) -> float:
        """Integral of Gamma over the ball whose volume equals the cell volume h^n."""
        R = (h**self.n / self.w_n) ** (1.0 / self.n)
        if self.n == 2:
            return R * R / 4.0 - R * R * math.log(R) / 2.0
        # n = 3: int_0^R (1 / (4 pi r)) 4 pi r^2 dr
        return R * R / 2.0


@dataclass(frozen=True)
class SolveReport:
    backend: str
    m: int
    residual: float
    boundary_max: float
    iterations: int = 0


def outer_layer(mask: np.ndarray) -> np.ndarray:
    """Mask nodes having at least one axis neighbour outside the mask."""
    out = np.zeros_like(mask)
    for ax in range(mask.ndim):
        for s in (1, -1):
            nb = np.roll(mask, s, axis=ax)
            edge = [slice(None)] * mask.ndim
            edge[ax] = 0 if s == 1 else -1
            nb[tuple(edge)] = False
            out |= mask & ~nb
    return out


def assemble_shortley_weller(grid: BallGrid, domain: np.ndarray, data=None):
    """Sparse matrix of -Laplace_h on ``domain`` nodes with Shortley-Weller arms.

    Arms to nodes outside B_1 are cut at the unit sphere (zero data there).
    Arms to nodes inside B_1 but outside ``domain`` take their value from
    ``data`` (zero if None). Returns ``(A, b_bc, index)``: the operator, the
    boundary contribution to move to the right-hand side, and the node -> row
    map (-1 off the domain).
    """
    domain = np.asarray(domain, bool)
    if np.any(domain & ~grid.inside_mask):
        raise ParameterError("domain must lie inside the unit ball")
    h, m = grid.h, grid.m
    data = np.zeros(grid.shape) if data is None else np.asarray(data, float)
    index = -np.ones(grid.shape, dtype=np.int64)
    nodes = np.nonzero(domain)
    N = nodes[0].size
    index[nodes] = np.arange(N)
    coords = [c[nodes] for c in grid.coords]
    diag = np.zeros(N)
    b_bc = np.zeros(N)
    rows, cols, vals = [], [], []
    for ax in range(grid.n):
        arms = []
        for s in (-1, 1):
            nb = list(nodes)
            nb[ax] = nodes[ax] + s
            in_box = (nb[ax] >= 0) & (nb[ax] < m)
            nbc = tuple(np.clip(k, 0, m - 1) for k in nb)
            nb_ball = in_box & grid.inside_mask[nbc]
            nb_dom = in_box & domain[nbc]
            other2 = sum(coords[k] ** 2 for k in range(grid.n) if k != ax)
            crossing = s * np.sqrt(np.maximum(1.0 - other2, 0.0))
            theta = np.where(nb_ball, 1.0, np.abs(crossing - coords[ax]) / h)
            theta = np.maximum(theta, 1e-8)
            value = np.where(nb_ball & ~nb_dom, data[nbc], 0.0)
            arms.append((theta, nb_dom, index[nbc], value))
        (tm, dm, jm, vm), (tp, dp, jp, vp) = arms
        cm = 2.0 / (tm * (tm + tp) * h * h)
        cp = 2.0 / (tp * (tm + tp) * h * h)
        diag += cm + cp
        for c, d, j, v in ((cm, dm, jm, vm), (cp, dp, jp, vp)):
            k = np.nonzero(d)[0]
            rows.append(k)
            cols.append(j[k])
            vals.append(-c[k])
            b_bc += np.where(d, 0.0, c * v)
    rows.append(np.arange(N))
    cols.append(np.arange(N))
    vals.append(diag)
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )
    return A, b_bc, index


def _krylov_solve(A, b, tol=RESIDUAL_TOL, maxiter=MAX_ITER):
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0
    d = A.diagonal()
    M = spla.LinearOperator(A.shape, matvec=lambda v: v / d, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.bicgstab(A, b, rtol=tol * 0.05, atol=0.0, maxiter=maxiter, M=M, callback=cb)
    if info < 0:
        # Krylov breakdown, typically from a near-degenerate boundary arm: use sparse LU instead
        x, info = spla.spsolve(A.tocsc(), b), 0
    res = float(np.linalg.norm(A @ x - b)) / bnorm
    if info < 0 or res > tol:
        raise SolverFailure(f"BiCGSTAB stopped at relative residual {res:.3e} (info={info})", res)
    return x, res, count[0]


def solve_dirichlet(grid: BallGrid, domain, rhs, data=None, tol=RESIDUAL_TOL, maxiter=MAX_ITER):
    """Solve -Laplace_h v = rhs on ``domain`` with Shortley-Weller boundary arms.

    Off the domain the returned array holds ``data`` inside B_1 and 0 outside.
    """
    A, b_bc, index = assemble_shortley_weller(grid, domain, data)
    b = np.asarray(rhs, float)[domain] + b_bc
    x, res, its = _krylov_solve(A, b, tol, maxiter)
    out = np.zeros(grid.shape) if data is None else np.where(grid.inside_mask, data, 0.0)
    out[domain] = x
    return out, res, its


def solve_fd_disk(f: ScalarField, tol: float = RESIDUAL_TOL, maxiter: int = MAX_ITER):
    grid = f.grid
    if grid.n != 2:
        raise ParameterError("the finite-difference backend is two-dimensional only")
    vals, res, its = solve_dirichlet(grid, grid.inside_mask, f.values, tol=tol, maxiter=maxiter)
    u = ScalarField(grid, vals)
    leak = float(np.abs(vals[outer_layer(grid.inside_mask)]).max())
    return u, SolveReport("fd", grid.m, res, leak, its)


def check_green_support(f: ScalarField) -> None:
    grid = f.grid
    bad = (grid.radius > 1.0 - 2.0 * grid.h) & (f.values != 0.0)
    if np.any(bad):
        raise PreconditionError("Green backend needs f = 0 on nodes with |x| > 1 - 2h")


def _target_mask(grid: BallGrid, targets) -> np.ndarray:
    if targets is None:
        return grid.inside_mask
    t = np.asarray(targets)
    if t.dtype == bool:
        if t.shape != grid.shape:
            raise ParameterError("boolean target mask must match the grid shape")
        return t & grid.inside_mask
    mask = np.zeros(grid.shape, dtype=bool)
    mask[tuple(t.T.astype(int))] = True
    return mask & grid.inside_mask


def newtonian_potential(f: ScalarField) -> ScalarField:
    """Free-space potential sum_xi Gamma(x - xi) f(xi) h^n on every inside node (FFT)."""
    grid = f.grid
    gam = FundamentalSolution(grid.n)
    offs = np.arange(-(grid.m - 1), grid.m) * grid.h
    r2 = sum(o * o for o in np.meshgrid(*([offs] * grid.n), indexing="ij"))
    kernel = gam.of_squared(np.where(r2 == 0, 1.0, r2)) * grid.cell_volume
    kernel[(grid.m - 1,) * grid.n] = gam.cell_integral(grid.h)
    conv = fftconvolve(f.values, kernel, mode="same")
    return ScalarField(grid, conv)


def _image_series_2d(f: ScalarField, target_mask: np.ndarray) -> np.ndarray:
    """Image-charge sum -(1/2pi) sum f(w) h^2 ln|1 - z conj(w)| as a power series in z."""
    grid = f.grid
    src = f.values != 0.0
    w = (grid.coords[0][src] + 1j * grid.coords[1][src]).conj()
    fw = f.values[src] * grid.cell_volume
    rmax = float(np.abs(w).max())
    z = grid.coords[0][target_mask] + 1j * grid.coords[1][target_mask]
    zmax = float(np.abs(z).max()) if z.size else 0.0
    q = max(rmax * zmax, 1e-3)
    K = int(min(max(math.ceil(math.log(1e-17) / math.log(q)), 8), 20000))
    moments = np.empty(K + 1, dtype=complex)
    moments[0] = 0.0
    pw = np.ones_like(w)
    for k in range(1, K + 1):
        pw = pw * w
        moments[k] = np.dot(fw, pw) / k
    acc = np.zeros_like(z)
    for k in range(K, 0, -1):
        acc = (acc + moments[k]) * z
    return acc.real / (2.0 * math.pi)


def _direct_green_sum(f: ScalarField, target_mask: np.ndarray, chunk: int = 2048) -> np.ndarray:
    grid = f.grid
    gam = FundamentalSolution(grid.n)
    src = f.values != 0.0
    xi = grid.points(src)
    fw = f.values[src] * grid.cell_volume
    xi2 = (xi**2).sum(axis=1)
    x = grid.points(target_mask)
    out = np.empty(len(x))
    self_w = gam.cell_integral(grid.h) / grid.cell_volume
    for s in range(0, len(x), chunk):
        xs = x[s:s + chunk]
        d2 = ((xs[:, None, :] - xi[None, :, :]) ** 2).sum(axis=2)
        same = d2 < (1e-6 * grid.h) ** 2
        g = gam.of_squared(np.where(same, 1.0, d2))
        g = np.where(same, self_w, g)
        x2 = (xs**2).sum(axis=1)
        img2 = x2[:, None] * xi2[None, :] - 2.0 * xs @ xi.T + 1.0
        g -= gam.of_squared(img2)
        out[s:s + chunk] = g @ fw
    return out


def solve_green_ball(f: ScalarField, targets=None, method: str = "auto") -> ScalarField:
    """u(x) = sum_xi G(x, xi) f(xi) h^n with the Dirichlet Green's function of B_1.

    ``method`` is ``"direct"`` (pairwise sum, any n) or ``"fast"`` (n = 2: FFT
    for the free-space part plus a convergent power series for the image
    part); ``"auto"`` picks ``fast`` for n = 2.
    """
    grid = f.grid
    check_green_support(f)
    tmask = _target_mask(grid, targets)
    vals = np.zeros(grid.shape)
    if not np.any(f.values != 0.0) or not np.any(tmask):
        return ScalarField(grid, vals, tmask)
    if method == "auto":
        method = "fast" if grid.n == 2 else "direct"
    if method == "fast":
        if grid.n != 2:
            raise ParameterError("fast Green path is two-dimensional only")
        free = newtonian_potential(f).values
        vals[tmask] = free[tmask] - _image_series_2d(f, tmask)
    elif method == "direct":
        vals[tmask] = _direct_green_sum(f, tmask)
    else:
        raise ParameterError(f"unknown method {method!r}")
    return ScalarField(grid, vals, tmask)


def hessian_kernel_far(f: ScalarField, x, min_separation: float | None = None, chunk: int = 1024) -> np.ndarray:
    """All second derivatives of the Newtonian potential of f at far points.

    Direct quadrature of the smooth kernel
    (1 / (w_n |y|^n)) * (y_i y_j / |y|^2 - delta_ij / n), y = x - xi.
    ``x`` is a point (n,) or an array of points (k, n); the result has shape
    (n, n) or (k, n, n).
    """
    grid = f.grid
    n, h = grid.n, grid.h
    sep = 4.0 * h if min_separation is None else min_separation
    if sep < 4.0 * h:
        raise PreconditionError("separation must be at least 4h")
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[1] != n:
        raise ParameterError("point dimension does not match the grid")
    if np.any((pts**2).sum(axis=1) >= 1.0):
        raise PreconditionError("evaluation points must lie inside B_1")
    src = f.values != 0.0
    out = np.zeros((len(pts), n, n))
    if not np.any(src):
        return out[0] if np.ndim(x) == 1 else out
    xi = grid.points(src)
    fw = f.values[src] * grid.cell_volume
    w_n = unit_ball_volume(n)
    for s in range(0, len(pts), chunk):
        y = pts[s:s + chunk, None, :] - xi[None, :, :]
        r2 = (y**2).sum(axis=2)
        if np.sqrt(r2.min()) < sep:
            raise PreconditionError("evaluation point too close to the support of f")
        base = 1.0 / (w_n * r2 ** (n / 2))
        for i in range(n):
            for j in range(i, n):
                k = base * (y[..., i] * y[..., j] / r2 - (1.0 / n if i == j else 0.0))
                out[s:s + chunk, i, j] = k @ fw
                out[s:s + chunk, j, i] = out[s:s + chunk, i, j]
    return out[0] if np.ndim(x) == 1 else out
