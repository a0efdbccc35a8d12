"""Uniform grids over the unit ball, sampled fields and finite-difference Hessians."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import GridTooCoarseError, ParameterError


@dataclass(frozen=True)
class BallGrid:
    """Nodes of [-1, 1]^n with spacing h = 2/(m-1); m odd so the origin is a node."""

    n: int
    m: int

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ParameterError("only n = 2 and n = 3 are supported")
        if self.m < 3 or self.m % 2 == 0:
            raise ParameterError("m must be odd and >= 3")

    @property
    def h(self) -> float:
        return 2.0 / (self.m - 1)

    @property
    def shape(self) -> tuple:
        return (self.m,) * self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.m)

    @cached_property
    def coords(self) -> tuple:
        return tuple(np.meshgrid(*([self.axis] * self.n), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords))

    @cached_property
    def inside_mask(self) -> np.ndarray:
        return self.radius < 1.0

    @property
    def center_index(self) -> tuple:
        return ((self.m - 1) // 2,) * self.n

    def points(self, mask=None) -> np.ndarray:
        """(k, n) array of node coordinates, row-major over the mask."""
        mask = self.inside_mask if mask is None else mask
        return np.stack([c[mask] for c in self.coords], axis=1)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Node values on a BallGrid; values outside ``mask`` are exactly zero."""

    grid: BallGrid
    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        mask = self.grid.inside_mask if self.mask is None else np.asarray(self.mask, bool)
        vals = np.where(mask, np.asarray(self.values, dtype=float), 0.0)
        if vals.shape != self.grid.shape:
            raise ParameterError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals[mask])):
            raise ParameterError("field has non-finite values on its mask")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_function(cls, grid: BallGrid, fn, mask=None) -> "ScalarField":
        return cls(grid, fn(*grid.coords), mask)

    def scaled(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * c, self.mask)

    def abs(self) -> "ScalarField":
        return ScalarField(self.grid, np.abs(self.values), self.mask)

    def masked_values(self) -> np.ndarray:
        return self.values[self.mask]

    @property
    def mask_volume(self) -> float:
        return float(self.mask.sum()) * self.grid.cell_volume

    def max_abs(self) -> float:
        v = self.masked_values()
        return float(np.abs(v).max()) if v.size else 0.0


@dataclass(frozen=True, eq=False)
class HessianField:
    grid: BallGrid
    components: np.ndarray  # shape (n, n, *grid.shape), zero off the valid mask
    valid: np.ndarray

    def component(self, i: int, j: int) -> ScalarField:
        return ScalarField(self.grid, self.components[i, j], self.valid)

    @cached_property
    def abs_sum(self) -> ScalarField:
        return ScalarField(self.grid, np.abs(self.components).sum(axis=(0, 1)), self.valid)

    @property
    def laplacian(self) -> ScalarField:
        n = self.grid.n
        return ScalarField(self.grid, sum(self.components[i, i] for i in range(n)), self.valid)


def stencil_valid_mask(grid: BallGrid, mask=None, margin: int = 1) -> np.ndarray:
    """Nodes whose full 3^n stencil, eroded ``margin`` times, stays inside ``mask``."""
    mask = grid.inside_mask if mask is None else mask
    if margin < 1:
        raise ParameterError("margin must be >= 1")
    structure = np.ones((3,) * grid.n, dtype=bool)
    return ndimage.binary_erosion(mask, structure=structure, iterations=margin, border_value=0)


def _shift(a: np.ndarray, axis: int, s: int) -> np.ndarray:
    """a shifted so out[k] = a[k + s] along axis, zero-padded."""
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if s > 0:
        src[axis], dst[axis] = slice(s, None), slice(None, -s)
    else:
        src[axis], dst[axis] = slice(None, s), slice(-s, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def hessian_fd(u: ScalarField, margin: int = 1, valid=None) -> HessianField:
    """Second-order central differences for every D_{x_i x_j} u.

    Nodes whose stencil leaves ``u.mask`` are excluded (``margin`` erosion
    layers); a caller-supplied ``valid`` mask is intersected with that set.
    """
    grid = u.grid
    if grid.m < 5:
        raise GridTooCoarseError("hessian_fd needs m >= 5")
    v, h, n = u.values, grid.h, grid.n
    ok = stencil_valid_mask(grid, u.mask, margin)
    if valid is not None:
        ok &= valid
    comps = np.zeros((n, n) + grid.shape)
    for i in range(n):
        comps[i, i] = (_shift(v, i, 1) - 2.0 * v + _shift(v, i, -1)) / h**2
        for j in range(i + 1, n):
            pp = _shift(_shift(v, i, 1), j, 1)
            mm = _shift(_shift(v, i, -1), j, -1)
            pm = _shift(_shift(v, i, 1), j, -1)
            mp = _shift(_shift(v, i, -1), j, 1)
            comps[i, j] = (pp - pm - mp + mm) / (4.0 * h * h)
            comps[j, i] = comps[i, j]
    comps *= ok
    return HessianField(grid, comps, ok)


def smooth_step(s):
    """C-infinity transition: 1 for s <= 0, 0 for s >= 1, monotone in between."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s < 1.0, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
        b = np.where(s > 0.0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    return a / (a + b)


def random_bandlimited_field(grid: BallGrid, modes: int, seed: int,
                             r_flat: float = 0.6, r_zero: float = 0.9) -> ScalarField:
    """Seeded sum of wide Gaussian bumps times a smooth cutoff, sup-normalized to 1.

    Bump parameters are drawn independently of the grid, so the same seed
    describes the same continuous function at every resolution. The cutoff
    vanishes for |x| >= r_zero.
    """
    if modes < 1:
        raise ParameterError("modes must be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-0.55, 0.55, size=(modes, grid.n))
    widths = rng.uniform(0.15, 0.35, size=modes)
    amps = rng.uniform(-1.0, 1.0, size=modes)
    acc = np.zeros(grid.shape)
    for c, w, a in zip(centers, widths, amps):
        d2 = sum((x - ci) ** 2 for x, ci in zip(grid.coords, c))
        acc += a * np.exp(-d2 / (2.0 * w * w))
    acc *= smooth_step((grid.radius - r_flat) / (r_zero - r_flat))
    acc[grid.radius >= r_zero] = 0.0
    peak = np.abs(acc[grid.inside_mask]).max()
    return ScalarField(grid, acc / peak)


def narrow_bump_field(grid: BallGrid, bumps: int, seed: int, widths=(0.03, 0.06)) -> ScalarField:
    """Seeded sum of narrow signed Gaussian bumps centred in |x_i| <= 0.5.

    Unlike ``random_bandlimited_field`` the result is not normalized, so the
    same seed gives the same continuous function at every resolution.
    """
    if bumps < 1:
        raise ParameterError("bumps must be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-0.5, 0.5, size=(bumps, grid.n))
    w = rng.uniform(widths[0], widths[1], size=bumps)
    amps = rng.uniform(0.5, 1.0, size=bumps) * rng.choice([-1.0, 1.0], size=bumps)
    acc = np.zeros(grid.shape)
    for c, wk, a in zip(centers, w, amps):
        d2 = sum((x - ci) ** 2 for x, ci in zip(grid.coords, c))
        acc += a * np.exp(-d2 / (2.0 * wk * wk))
    return ScalarField(grid, acc)


def axis_permuted(u: ScalarField, perm) -> ScalarField:
    return ScalarField(u.grid, np.transpose(u.values, perm), np.transpose(u.mask, perm))


def write_field_csv(u: ScalarField, path) -> None:
    grid = u.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + [f"x{i + 1}" for i in range(grid.n)] + ["value"])
        for flat in np.flatnonzero(u.mask.ravel()):
            idx = np.unravel_index(flat, grid.shape)
            xs = [repr(float(grid.axis[k])) for k in idx]
            w.writerow([int(flat)] + xs + [repr(float(u.values[idx]))])


def read_field_csv(path, grid: BallGrid) -> ScalarField:
    vals = np.zeros(grid.shape)
    mask = np.zeros(grid.shape, dtype=bool)
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        next(rows)
        for row in rows:
            idx = np.unravel_index(int(row[0]), grid.shape)
            vals[idx] = float(row[-1])
            mask[idx] = True
    return ScalarField(grid, vals, mask)


_HEADER = struct.Struct("<qq")


def dump_field(u: ScalarField, path) -> None:
    """Binary dump: little-endian int64 header (n, m) then row-major float64 values."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(u.grid.n, u.grid.m))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def load_field(path) -> ScalarField:
    with open(path, "rb") as fh:
        n, m = _HEADER.unpack(fh.read(_HEADER.size))
        grid = BallGrid(int(n), int(m))
        vals = np.frombuffer(fh.read(), dtype="<f8").reshape(grid.shape)
    return ScalarField(grid, vals.astype(float))


def lattice_offsets(radius_nodes: float, n: int) -> np.ndarray:
    """Integer offset vectors with Euclidean length < radius_nodes."""
    r = int(np.ceil(radius_nodes))
    ax = np.arange(-r, r + 1)
    offs = np.stack([g.ravel() for g in np.meshgrid(*([ax] * n), indexing="ij")], axis=1)
    return offs[np.sqrt((offs**2).sum(axis=1)) < radius_nodes]
