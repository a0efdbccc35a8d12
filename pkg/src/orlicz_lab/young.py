"""Young functions and numerical checks of the global Delta_2 / nabla_2 conditions.

A Young function here is an evaluable increasing convex map phi: [0, inf) -> [0, inf).
The condition checkers work on a finite log-spaced scan; they cannot prove a
global supremum, so an explicit trend test flags ratios that keep growing
toward the edge of the scan.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DegenerateFunctionError, DomainError, ExtrapolationError, ParameterError

FAMILIES = ("power", "power_log", "linear", "exp_type", "tabulated")

DEFAULT_TOL = 1e-9


def default_scan(points: int = 1201) -> np.ndarray:
    """Log-spaced scan over [1e-6, 1e6]; 1201 points puts t = 1 on the grid."""
    return np.logspace(-6.0, 6.0, points)


def default_a_candidates() -> np.ndarray:
    return 2.0 ** (np.arange(1, 49) / 8.0)


@dataclass(frozen=True)
class YoungFunction:
    family: str
    params: tuple = ()
    table_t: tuple = field(default=(), repr=False)
    table_phi: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}")
        if self.family == "power" and not (len(self.params) == 1 and self.params[0] > 0):
            raise ParameterError("power family needs one exponent p > 0")
        if self.family == "power_log" and not (len(self.params) == 1 and self.params[0] >= 1):
            raise ParameterError("power_log family needs alpha >= 1")
        if self.family == "tabulated":
            t = np.asarray(self.table_t, dtype=float)
            if t.size < 2 or np.any(np.diff(t) <= 0):
                raise ParameterError("tabulated t column must be strictly increasing")
            if t[0] < 0:
                raise ParameterError("tabulated t column must start at t >= 0")

    @property
    def name(self) -> str:
        if self.family == "power":
            return f"power:p={self.params[0]:g}"
        if self.family == "power_log":
            return f"powerlog:alpha={self.params[0]:g}"
        if self.family == "linear":
            return "linear"
        if self.family == "exp_type":
            return "exp"
        return f"tabulated[{len(self.table_t)}]"

    def __call__(self, t):
        return evaluate(self, t)


def power(p: float) -> YoungFunction:
    return YoungFunction("power", (float(p),))


def power_log(alpha: float) -> YoungFunction:
    """phi(t) = t^alpha (1 + |log t|), Young and Delta_2 cap nabla_2 for alpha > 1."""
    return YoungFunction("power_log", (float(alpha),))


def linear() -> YoungFunction:
    return YoungFunction("linear")


def exp_type() -> YoungFunction:
    """phi(t) = e^t - t - 1: a genuine Young function that fails Delta_2."""
    return YoungFunction("exp_type")


def tabulated(t: Iterable[float], phi: Iterable[float]) -> YoungFunction:
    return YoungFunction("tabulated", (), tuple(float(v) for v in t), tuple(float(v) for v in phi))


def load_tabulated_csv(path) -> YoungFunction:
    ts, ps = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                ts.append(float(row[0]))
                ps.append(float(row[1]))
            except ValueError:
                continue  # header line
    return tabulated(ts, ps)


def parse_phi(spec: str) -> YoungFunction:
    """Parse ``power:p=2``, ``powerlog:alpha=2``, ``linear``, ``exp`` or ``table:<csv path>``."""
    spec = spec.strip()
    head, _, rest = spec.partition(":")
    kw = {}
    if rest and head != "table":
        for item in rest.split(","):
            k, _, v = item.partition("=")
            kw[k.strip()] = float(v)
    if head == "power":
        return power(kw.get("p", 2.0))
    if head in ("powerlog", "power_log"):
        return power_log(kw.get("alpha", 2.0))
    if head == "linear":
        return linear()
    if head in ("exp", "exp_type"):
        return exp_type()
    if head == "table":
        return load_tabulated_csv(rest)
    raise ParameterError(f"cannot parse phi spec {spec!r}")


def _exp_type(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    small = t < 1e-2
    ts = t[small]
    # Taylor series avoids cancellation in expm1(t) - t near 0.
    out[small] = ts**2 * (0.5 + ts * (1 / 6 + ts * (1 / 24 + ts * (1 / 120 + ts / 720))))
    with np.errstate(over="ignore"):
        out[~small] = np.expm1(t[~small]) - t[~small]
    return out


def evaluate(phi: YoungFunction, t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("phi is only defined for t >= 0")
    fam = phi.family
    if fam == "power":
        out = arr ** phi.params[0]
    elif fam == "power_log":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = arr ** phi.params[0] * (1.0 + np.abs(np.log(arr)))
        out = np.where(arr == 0, 0.0, out)
    elif fam == "linear":
        out = arr.copy()
    elif fam == "exp_type":
        out = _exp_type(np.atleast_1d(arr)).reshape(arr.shape)
    else:
        tt = np.asarray(phi.table_t)
        if np.any(arr < tt[0]) or np.any(arr > tt[-1]):
            raise ExtrapolationError(f"tabulated phi queried outside [{tt[0]}, {tt[-1]}]")
        out = np.interp(arr, tt, np.asarray(phi.table_phi))
    if np.ndim(t) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class Delta2Report:
    satisfied: bool
    K: float
    alpha1: float
    witness_t: float


@dataclass(frozen=True)
class Nabla2Report:
    satisfied: bool
    a: float
    alpha2: float
    witness_t: float


def _positive_values(phi, scan):
    scan = np.asarray(scan, dtype=float)
    if scan.ndim != 1 or scan.size < 2 or np.any(scan <= 0) or np.any(np.diff(scan) <= 0):
        raise ParameterError("scan must be a strictly increasing positive grid")
    vals = evaluate(phi, scan)
    if np.any(vals == 0):
        t0 = scan[np.argmax(vals == 0)]
        raise DegenerateFunctionError(f"phi({t0:g}) = 0 at a positive argument")
    return scan, vals


def _grows_into_edge(ratio: np.ndarray, scan: np.ndarray, tol: float) -> bool:
    """True if the ratio strictly increases over the last decade of the scan."""
    tail = ratio[scan >= scan[-1] / 10.0]
    if tail.size < 2:
        return False
    return bool(np.all(np.diff(tail) > tol * np.abs(tail[:-1])))


def check_delta2(phi: YoungFunction, scan=None, tol: float = DEFAULT_TOL) -> Delta2Report:
    scan = default_scan() if scan is None else scan
    scan, vals = _positive_values(phi, scan)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = evaluate(phi, 2.0 * scan) / vals
    ratio = np.where(np.isnan(ratio), np.inf, ratio)
    i = int(np.argmax(ratio))
    K = float(ratio[i])
    satisfied = math.isfinite(K) and not _grows_into_edge(ratio, scan, tol)
    alpha1 = math.log2(K) if math.isfinite(K) else math.inf
    return Delta2Report(satisfied, K, alpha1, float(scan[i]))


def check_nabla2(phi: YoungFunction, scan=None, a_candidates=None, tol: float = DEFAULT_TOL) -> Nabla2Report:
    scan = default_scan() if scan is None else scan
    a_candidates = default_a_candidates() if a_candidates is None else np.asarray(a_candidates, float)
    if np.any(a_candidates <= 1) or np.any(np.diff(a_candidates) <= 0):
        raise ParameterError("a_candidates must be increasing and > 1")
    scan, vals = _positive_values(phi, scan)
    worst_t, worst_slack = float(scan[0]), -math.inf
    for a in a_candidates:
        with np.errstate(over="ignore", invalid="ignore"):
            lhs = 2.0 * a * vals
            rhs = evaluate(phi, a * scan) * (1.0 + tol)
            ok = lhs <= rhs
        if np.all(ok):
            with np.errstate(invalid="ignore"):
                worst = np.nan_to_num(lhs / rhs, nan=0.0)
            return Nabla2Report(True, float(a), math.log(2.0, a) + 1.0, float(scan[np.argmax(worst)]))
        with np.errstate(over="ignore", invalid="ignore"):
            slack = np.where(ok, -np.inf, lhs / rhs)
        j = int(np.argmax(slack))
        if slack[j] > worst_slack:
            worst_slack, worst_t = float(slack[j]), float(scan[j])
    return Nabla2Report(False, math.nan, math.nan, worst_t)


def is_young(phi: YoungFunction, scan=None, min_slope: float = 1e-3) -> bool:
    """Heuristic check of phi(t)/t -> 0 at 0 and t/phi(t) -> 0 at infinity on the scan.

    Both limits are judged by the log-log slope of phi(t)/t over the first and
    last decade of the scan, which must be clearly positive.
    """
    scan = default_scan() if scan is None else np.asarray(scan, float)
    scan, vals = _positive_values(phi, scan)
    if not (is_monotone(phi, scan) and is_convex(phi, scan)):
        return False
    with np.errstate(over="ignore", divide="ignore"):
        log_slope = np.log(vals / scan)
    lo = scan <= scan[0] * 10.0
    hi = scan >= scan[-1] / 10.0
    logt = np.log(scan)
    slope_lo = (log_slope[lo][-1] - log_slope[lo][0]) / (logt[lo][-1] - logt[lo][0])
    if np.isinf(log_slope[hi][-1]):
        slope_hi = math.inf
    else:
        slope_hi = (log_slope[hi][-1] - log_slope[hi][0]) / (logt[hi][-1] - logt[hi][0])
    return bool(slope_lo > min_slope and slope_hi > min_slope)


def is_monotone(phi: YoungFunction, t, tol: float = DEFAULT_TOL) -> bool:
    t = np.sort(np.asarray(t, float))
    with np.errstate(over="ignore"):
        v = evaluate(phi, t)
    # an overflowed tail (inf after inf) is still nondecreasing
    with np.errstate(invalid="ignore"):
        ok = np.diff(v) >= -tol * np.abs(v[1:])
    ok |= np.isinf(v[1:]) & (v[1:] > 0)
    return bool(np.all(ok))


def is_convex(phi: YoungFunction, t, tol: float = DEFAULT_TOL) -> bool:
    """Midpoint convexity over consecutive triples of the sorted sample."""
    t = np.unique(np.asarray(t, float))
    if t.size < 3:
        return True
    v = evaluate(phi, t)
    t0, t1, t2 = t[:-2], t[1:-1], t[2:]
    theta = (t2 - t1) / (t2 - t0)
    with np.errstate(invalid="ignore"):
        chord = theta * v[:-2] + (1 - theta) * v[2:]
        ok = v[1:-1] <= chord * (1 + tol) + tol * np.finfo(float).tiny
    ok |= np.isinf(chord)
    return bool(np.all(ok))


def stieltjes_increments(phi: YoungFunction, lambda_grid) -> np.ndarray:
    """Cell masses phi(l_{i+1}) - phi(l_i) of the measure d[phi(lambda)]."""
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ParameterError("lambda grid must be a non-empty 1-D array")
    if grid[0] != 0.0:
        raise ParameterError("lambda grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise ParameterError("lambda grid must be strictly increasing")
    return np.diff(evaluate(phi, grid))
