"""Orlicz modular int_{B_1} phi(|g|) dx: direct quadrature and layer-cake form."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, ParameterError, PreconditionError
from .fields import ScalarField
from .young import YoungFunction, check_nabla2, evaluate, stieltjes_increments


@dataclass(frozen=True)
class ModularResult:
    value: float
    method: str
    mask_volume: float

    @property
    def infinite(self) -> bool:
        """Overflow sentinel: g is not in the Orlicz class at this resolution."""
        return math.isinf(self.value)


def modular_direct(phi: YoungFunction, g: ScalarField) -> ModularResult:
    vals = np.abs(g.masked_values())
    with np.errstate(over="ignore"):
        total = float(np.sum(evaluate(phi, vals))) * g.grid.cell_volume
    if math.isnan(total):
        total = math.inf
    return ModularResult(total, "direct", g.mask_volume)


def distribution_function(g: ScalarField, lam) -> float | np.ndarray:
    """|{x : |g(x)| > lam}| as h^n times a node count (vectorized over lam)."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0):
        raise ParameterError("lambda must be >= 0")
    vals = np.sort(np.abs(g.masked_values()))
    counts = vals.size - np.searchsorted(vals, lam_arr, side="right")
    out = counts * g.grid.cell_volume
    return float(out) if lam_arr.ndim == 0 else out


def default_lambda_grid(g: ScalarField, points: int = 10_000, decades: float = 6.0) -> np.ndarray:
    top = g.max_abs()
    if top == 0.0:
        return np.array([0.0, 1.0])
    return np.concatenate([[0.0], np.geomspace(top * 10.0**-decades, top, points)])


def modular_layercake(phi: YoungFunction, g: ScalarField, lambda_grid=None) -> ModularResult:
    """Sum of |{|g| > lambda_i}| * (phi(lambda_{i+1}) - phi(lambda_i))."""
    grid = default_lambda_grid(g) if lambda_grid is None else np.asarray(lambda_grid, float)
    if grid[-1] < g.max_abs():
        raise CoverageError("lambda grid does not reach max|g|")
    with np.errstate(over="ignore", invalid="ignore"):
        inc = stieltjes_increments(phi, grid)
        dist = distribution_function(g, grid[:-1])
        terms = dist * inc
    total = float(np.sum(terms[dist > 0]))
    if math.isnan(total):
        total = math.inf
    return ModularResult(total, "layercake", g.mask_volume)


@dataclass(frozen=True)
class TailIntegral:
    value: float
    modular: float
    ratio: float


def stieltjes_tail_integral(phi: YoungFunction, g: ScalarField, p: float, b1: float, b2: float,
                            points: int = 10_000, alpha2: float | None = None) -> TailIntegral:
    """int_0^inf mu^(-p) (int_{|g| > b1 mu} |g|^p dx) d[phi(b2 mu)] on a geometric mu-grid.

    Returns the value and its ratio to the direct modular of g. Requires
    1 < p < alpha2, with alpha2 taken from the nabla_2 report unless given.
    """
    if alpha2 is None:
        rep = check_nabla2(phi)
        alpha2 = rep.alpha2 if rep.satisfied else 1.0
    if not (1.0 < p < alpha2):
        raise PreconditionError(f"need 1 < p < alpha2 = {alpha2:g}, got p = {p:g}")
    if b1 <= 0 or b2 <= 0:
        raise ParameterError("b1 and b2 must be positive")
    mod = modular_direct(phi, g).value
    vals = np.abs(g.masked_values())
    top = float(vals.max()) if vals.size else 0.0
    if top == 0.0:
        return TailIntegral(0.0, mod, 0.0)
    hmu = top / b1
    # the cell [0, mu_1] carries a share of order (mu_1/hmu)^(alpha2 - p); push it below 1e-8
    decades = min(250.0, max(12.0, 8.0 / (alpha2 - p)))
    mu = np.concatenate([[0.0], np.geomspace(hmu * 10.0**-decades, hmu, points)])
    inc = np.diff(evaluate(phi, b2 * mu))
    mid = np.sqrt(mu[:-1] * mu[1:])
    mid[0] = mu[1] / 2.0
    # S(mu) = int_{|g| > b1 mu} |g|^p dx, from sorted values and suffix sums
    srt = np.sort(vals)
    suffix = np.concatenate([np.cumsum((srt**p)[::-1])[::-1], [0.0]]) * g.grid.cell_volume
    S = suffix[np.searchsorted(srt, b1 * mid, side="right")]
    value = float(np.sum(mid ** (-p) * S * inc))
    return TailIntegral(value, mod, value / mod if mod > 0 else math.inf)
