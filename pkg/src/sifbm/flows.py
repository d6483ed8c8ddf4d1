"""Increasing paths through the rectangle collection and their projections.

A flow maps [0, 1] into rectangles [0, f(t)] with f componentwise
nondecreasing (piecewise linear between knots here, so the running measure
theta(t) = m([0, f(t)]) is an exactly evaluable piecewise polynomial).
Projecting the fractional set-indexed process along a flow produces a
one-parameter Gaussian process whose covariance is the classical fractional
one in the theta clock; inverting theta therefore recovers a standard
fractional Brownian motion, which is what the estimator at the bottom of
this module measures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .covariance import GramMatrix, as_hurst, gram, levy_cov, sheet_cov, sifbm_cov
from .sampler import JitterPolicy, SampleEnsemble, sample
from .set_families import Rectangle, SchemaError, SetFamily


class FlatSegmentError(ValueError):
    """The time change is constant on a subinterval and cannot be inverted."""

    def __init__(self, interval):
        self.interval = interval
        super().__init__(
            f"time change is flat on [{interval[0]:.6g}, {interval[1]:.6g}]"
        )


@dataclass(frozen=True)
class Flow:
    """Piecewise-linear increasing path t -> [0, corner(t)], t in [0, 1]."""

    knots: tuple

    def __post_init__(self):
        knots = tuple((float(t), tuple(float(c) for c in corner)) for t, corner in self.knots)
        if len(knots) < 2:
            raise ValueError("flow needs at least two knots")
        ts = [t for t, _ in knots]
        if ts[0] != 0.0 or ts[-1] != 1.0:
            raise ValueError("flow knots must start at t=0 and end at t=1")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("knot times must be strictly increasing")
        dim = len(knots[0][1])
        for _, corner in knots:
            if len(corner) != dim:
                raise ValueError("all knot corners must share one dimension")
            if any(c < 0 for c in corner):
                raise ValueError("knot corners must be nonnegative")
        for (_, lo), (_, hi) in zip(knots, knots[1:]):
            if any(b < a for a, b in zip(lo, hi)):
                raise ValueError("knot corners must be componentwise nondecreasing")
        object.__setattr__(self, "knots", knots)

    @property
    def dim(self) -> int:
        return len(self.knots[0][1])

    def _segment(self, t: float) -> int:
        ts = [k for k, _ in self.knots]
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"flow parameter {t} outside [0, 1]")
        i = int(np.searchsorted(ts, t, side="right")) - 1
        return min(max(i, 0), len(ts) - 2)

    def corner_at(self, t: float) -> np.ndarray:
        i = self._segment(t)
        (t0, lo), (t1, hi) = self.knots[i], self.knots[i + 1]
        lam = (t - t0) / (t1 - t0)
        lo = np.asarray(lo)
        return lo + lam * (np.asarray(hi) - lo)

    def set_at(self, t: float) -> Rectangle:
        return Rectangle(tuple(self.corner_at(t)))


def theta(flow: Flow, t: float) -> float:
    """Running measure of the flow: the volume of the rectangle at t."""
    return float(np.prod(flow.corner_at(t)))


def projected_cov(flow: Flow, s: float, t: float, h) -> float:
    """Covariance of the projected process: the classical fractional form
    in the theta clock, (th_s^2H + th_t^2H - |th_t - th_s|^2H) / 2."""
    two_h = 2.0 * as_hurst(h).value
    th_s, th_t = theta(flow, s), theta(flow, t)
    return 0.5 * (th_s**two_h + th_t**two_h - abs(th_t - th_s) ** two_h)


@dataclass(frozen=True)
class TimeChange:
    """Sampled (t, theta) pairs with monotone-interpolation lookups."""

    ts: np.ndarray
    thetas: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.ts, dtype=np.float64)
        th = np.asarray(self.thetas, dtype=np.float64)
        if ts.shape != th.shape or ts.ndim != 1:
            raise ValueError("ts and thetas must be matching 1-d arrays")
        if np.any(np.diff(th) < 0):
            raise ValueError("theta must be nondecreasing on the grid")
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "thetas", th)

    def inverse_interp(self, theta_values) -> np.ndarray:
        return np.interp(theta_values, self.thetas, self.ts)


def time_change(flow: Flow, grid_size: int = 257) -> TimeChange:
    ts = np.linspace(0.0, 1.0, grid_size)
    return TimeChange(ts, np.array([theta(flow, t) for t in ts]))


def flow_family(flow: Flow, ts: Sequence[float]) -> SetFamily:
    """Rectangle family {[0, f(t_i)]}; duplicates allowed for flat spans."""
    return SetFamily(
        tuple(flow.set_at(float(t)) for t in ts),
        labels=tuple(f"t{i}" for i in range(len(ts))),
        allow_duplicates=True,
    )


def _grid(grid) -> np.ndarray:
    if isinstance(grid, (int, np.integer)):
        return np.linspace(0.0, 1.0, int(grid))
    ts = np.asarray(grid, dtype=np.float64)
    if ts.ndim != 1 or ts.size < 2:
        raise ValueError("grid must be an integer size or a 1-d array of times")
    return ts


@dataclass
class FlowSamples:
    ts: np.ndarray
    thetas: np.ndarray
    gram: GramMatrix
    ensemble: SampleEnsemble


def sample_along_flow(
    flow: Flow,
    grid,
    h,
    replicates: int,
    master_seed: int,
    policy: JitterPolicy = JitterPolicy(),
) -> FlowSamples:
    """Sample the process on the rectangles {f(t_i)} of a flow grid.

    The Gram of that family coincides with the projected covariance, so the
    returned paths are time-changed fractional Brownian motions.
    """
    ts = _grid(grid)
    family = flow_family(flow, ts)
    g = gram(family, h, "sifbm")
    ensemble = sample(g, replicates, master_seed, policy)
    thetas = np.array([theta(flow, t) for t in ts])
    return FlowSamples(ts=ts, thetas=thetas, gram=g, ensemble=ensemble)


def _theta_poly_solve(flow: Flow, target: float) -> float:
    """Exact inverse of theta at one target value by segment bisection.

    theta restricted to a knot segment is a nondecreasing polynomial in t,
    so bisection to floating convergence recovers t with theta(t) equal to
    the target at machine precision.
    """
    knot_ts = [t for t, _ in flow.knots]
    values = [theta(flow, t) for t in knot_ts]
    if target <= values[0]:
        return knot_ts[0]
    if target >= values[-1]:
        return knot_ts[-1]
    seg = int(np.searchsorted(values, target, side="left")) - 1
    seg = min(max(seg, 0), len(knot_ts) - 2)
    lo, hi = knot_ts[seg], knot_ts[seg + 1]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if theta(flow, mid) < target:
            lo = mid
        else:
            hi = mid
    return hi if abs(theta(flow, hi) - target) < abs(theta(flow, lo) - target) else lo


def invert_time_change(flow: Flow, grid_size: int) -> np.ndarray:
    """t-grid on which theta is uniformly spaced between theta(0) and theta(1).

    Requires theta to be strictly increasing; a flat knot segment raises
    FlatSegmentError naming the interval.  Sampling the flow on the returned
    grid yields the standard fractional covariance in the theta variable.
    """
    if grid_size < 2:
        raise ValueError("grid size must be at least 2")
    knot_ts = [t for t, _ in flow.knots]
    values = [theta(flow, t) for t in knot_ts]
    for i in range(len(values) - 1):
        if values[i + 1] <= values[i]:
            raise FlatSegmentError((knot_ts[i], knot_ts[i + 1]))
    targets = np.linspace(values[0], values[-1], grid_size)
    ts = np.array([_theta_poly_solve(flow, x) for x in targets])
    ts[0], ts[-1] = 0.0, 1.0
    return ts


@dataclass(frozen=True)
class HolderEstimate:
    exponent: float
    scales: tuple
    log_moments: tuple
    in_fbm_regime: bool
    note: str


def holder_estimate(values, min_scale_exp: int = 2) -> HolderEstimate:
    """Path regularity exponent from dyadic quadratic variations.

    For paths on a uniform grid of n points, the mean squared increment at
    lag n * 2^-k (pooled across replicate rows) is regressed on log(2^-k)
    for k = min_scale_exp .. log2(n)/2; half the slope estimates the
    exponent.  Estimates at or above 1 are flagged as outside the fractional
    regime (smooth paths).
    """
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    n = values.shape[1]
    if n < 256:
        raise ValueError("need a grid of at least 256 points")
    k_max = int(np.log2(n) / 2)
    if k_max < min_scale_exp + 1:
        raise ValueError("grid too small for the dyadic scale range")
    xs, ys, scales = [], [], []
    for k in range(min_scale_exp, k_max + 1):
        lag = max(n // 2**k, 1)
        diffs = values[:, lag:] - values[:, :-lag]
        moment = float(np.mean(diffs * diffs))
        if moment <= 0.0:
            raise ValueError("constant path: exponent undefined")
        scales.append(2.0**-k)
        xs.append(np.log(2.0**-k))
        ys.append(np.log(moment))
    slope = float(np.polyfit(xs, ys, 1)[0])
    exponent = slope / 2.0
    in_regime = exponent < 1.0
    note = "" if in_regime else ">=1, outside fBm regime"
    return HolderEstimate(
        exponent=exponent,
        scales=tuple(scales),
        log_moments=tuple(ys),
        in_fbm_regime=in_regime,
        note=note,
    )


@dataclass(frozen=True)
class FlowComparison:
    kernel_id: str
    residual: float
    matches_time_changed_fbm: bool
    fitted_theta: tuple


def comparison_on_flows(flow: Flow, h, grid_size: int = 33, tol: float = 1e-8):
    """Which point kernels look like a time-changed fractional BM on a flow.

    For each kernel the candidate clock is read off the diagonal,
    theta_hat(t) = K(t, t)^(1/2H), and the residual is the largest absolute
    deviation of K(s, t) from the fractional form evaluated in that clock.
    The set-indexed kernel matches exactly on every flow; the product and
    Euclidean point kernels generally do not.
    """
    hv = as_hurst(h)
    two_h = 2.0 * hv.value
    ts = np.linspace(0.0, 1.0, grid_size)
    corners = [flow.corner_at(t) for t in ts]
    rects = [Rectangle(tuple(c)) for c in corners]

    def kernel_matrix(fn):
        return np.array([[fn(i, j) for j in range(grid_size)] for i in range(grid_size)])

    evaluators = {
        "sifbm": lambda i, j: sifbm_cov(rects[i], rects[j], hv),
        "levy": lambda i, j: levy_cov(corners[i], corners[j], hv.value),
        "sheet": lambda i, j: sheet_cov(corners[i], corners[j], hv.value),
    }
    reports = []
    for kernel_id, fn in evaluators.items():
        k = kernel_matrix(fn)
        fitted = np.power(np.maximum(np.diag(k), 0.0), 1.0 / two_h)
        model = 0.5 * (
            fitted[:, None] ** two_h
            + fitted[None, :] ** two_h
            - np.abs(fitted[None, :] - fitted[:, None]) ** two_h
        )
        residual = float(np.max(np.abs(k - model)))
        reports.append(
            FlowComparison(
                kernel_id=kernel_id,
                residual=residual,
                matches_time_changed_fbm=residual <= tol,
                fitted_theta=tuple(fitted),
            )
        )
    return reports


def flow_from_json(doc: dict) -> Flow:
    if not isinstance(doc, dict) or set(doc) != {"knots"}:
        raise SchemaError('flow document must be exactly {"knots": [[t, [c...]], ...]}')
    try:
        return Flow(tuple((t, tuple(corner)) for t, corner in doc["knots"]))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid flow document: {exc}") from exc


def flow_to_json(flow: Flow) -> dict:
    return {"knots": [[t, list(corner)] for t, corner in flow.knots]}


def load_flow(path) -> Flow:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    return flow_from_json(doc)
