"""Range-based localization against a set of fixed transceiver anchors.

Distance to each anchor comes from received signal strength: the
integrated photocurrent falls off with the path loss, so a polynomial
fitted on calibration (signal, distance) pairs inverts the measurement.
Positions are then solved either by linearized least squares on the
range equations or from time differences of arrival on hyperbolic
residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import AmbiguityError, GeometryError, ParameterError

__all__ = [
    "AnchorSet",
    "RssObservation",
    "DistancePolynomial",
    "DistanceEstimate",
    "PositionEstimate",
    "rss_signal",
    "averaged_rss",
    "fit_distance_polynomial",
    "estimate_distance",
    "lls_position",
    "tdoa_position",
]


# --------------------------------------------------------------- types


@dataclass(frozen=True)
class AnchorSet:
    """Fixed anchor coordinates in meters, first anchor is the reference."""

    positions: tuple

    def __post_init__(self):
        pos = tuple((float(x), float(y)) for x, y in self.positions)
        object.__setattr__(self, "positions", pos)
        if len(pos) < 3:
            raise GeometryError("need at least three anchors")
        rel = np.asarray(pos[1:]) - np.asarray(pos[0])
        if np.linalg.matrix_rank(rel, tol=1e-9 * (1 + np.abs(rel).max())) < 2:
            raise GeometryError("anchors are collinear")

    @property
    def n_anchors(self) -> int:
        return len(self.positions)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


@dataclass(frozen=True)
class RssObservation:
    """Integrated photocurrent over one sampling window."""

    signal: float       # A*s
    sample_time: float  # s
    avg_power: float    # W, transmitter average

    def __post_init__(self):
        if self.sample_time <= 0:
            raise ParameterError("sample_time must be positive")


@dataclass(frozen=True)
class DistancePolynomial:
    """Polynomial inverse of the signal-strength curve, d = poly(y)."""

    coefficients: tuple       # b0..bM, meters per (A*s)^k
    signal_range: tuple       # calibration span of y
    max_range: float          # clamp ceiling for estimates, m

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, y: float) -> float:
        return float(np.polynomial.polynomial.polyval(
            y, np.asarray(self.coefficients)))


@dataclass(frozen=True)
class DistanceEstimate:
    meters: float
    extrapolated: bool = False


@dataclass(frozen=True)
class PositionEstimate:
    x: float
    y: float
    extrapolated: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


# ----------------------------------------------------- RSS measurement


def rss_signal(distance: float, loss_fn: Callable[[float], float],
               responsivity: float, avg_power: float, sample_time: float,
               fading: float = 1.0, noise: float = 0.0) -> RssObservation:
    """One integrated-current sample, R * P_avg * T_s * h * L(d) + v."""
    if distance <= 0:
        raise ParameterError("distance must be positive")
    y = responsivity * avg_power * sample_time * fading * loss_fn(distance)
    return RssObservation(signal=y + noise, sample_time=sample_time,
                          avg_power=avg_power)


def averaged_rss(distance: float, loss_fn, responsivity: float,
                 avg_power: float, sample_time: float, sigma_x_sq: float,
                 noise_std: float = 0.0, n_samples: int = 100,
                 rng=None) -> RssObservation:
    """Mean of ``n_samples`` observations spaced past the fading
    coherence time, so fading draws are independent sample to sample."""
    if n_samples < 1:
        raise ParameterError("need at least one sample")
    rng = np.random.default_rng(rng)
    sx = math.sqrt(max(sigma_x_sq, 0.0))
    # log-amplitude x ~ N(-sigma_x_sq, sigma_x_sq) keeps E[h] = 1
    h = np.exp(2.0 * (sx * rng.standard_normal(n_samples) - sigma_x_sq))
    v = noise_std * rng.standard_normal(n_samples) if noise_std > 0 else 0.0
    base = responsivity * avg_power * sample_time * loss_fn(distance)
    y = float(np.mean(base * h + v))
    return RssObservation(signal=y, sample_time=sample_time,
                          avg_power=avg_power)


# ------------------------------------------------- distance polynomial


def fit_distance_polynomial(pairs: Sequence, degree: int = 5,
                            max_range: float = None) -> DistancePolynomial:
    """Least-squares d(y) polynomial from calibration (y, d) pairs.

    The fit runs on y scaled to order one; coefficients are converted
    back to raw signal units afterwards.
    """
    ys = np.asarray([p[0] for p in pairs], dtype=float)
    ds = np.asarray([p[1] for p in pairs], dtype=float)
    if ys.size < degree + 1:
        raise ParameterError("need at least degree + 1 calibration pairs")
    scale = float(np.abs(ys).max())
    if scale <= 0:
        raise GeometryError("calibration signals are all zero")
    design = np.polynomial.polynomial.polyvander(ys / scale, degree)
    coef, _, rank, _ = np.linalg.lstsq(design, ds, rcond=None)
    if rank < degree + 1:
        raise GeometryError("rank-deficient calibration design; "
                            "signals too clustered for degree %d" % degree)
    raw = coef / scale ** np.arange(degree + 1)
    if max_range is None:
        max_range = float(ds.max())
    return DistancePolynomial(coefficients=tuple(float(b) for b in raw),
                              signal_range=(float(ys.min()), float(ys.max())),
                              max_range=float(max_range))


def estimate_distance(obs, poly: DistancePolynomial) -> DistanceEstimate:
    """Invert one observation; clamps to [0, max_range] and flags any
    evaluation outside the calibration span."""
    y = obs.signal if isinstance(obs, RssObservation) else float(obs)
    lo, hi = poly.signal_range
    extrapolated = not (lo <= y <= hi)
    d = poly(y)
    if d < 0.0:
        d, extrapolated = 0.0, True
    elif d > poly.max_range:
        d, extrapolated = poly.max_range, True
    return DistanceEstimate(meters=d, extrapolated=extrapolated)


# ------------------------------------------------------ position solves


def _distances_and_flag(distances):
    vals, flag = [], False
    for d in distances:
        if isinstance(d, DistanceEstimate):
            vals.append(d.meters)
            flag = flag or d.extrapolated
        else:
            vals.append(float(d))
    return np.asarray(vals), flag


def lls_position(anchors: AnchorSet, distances) -> PositionEstimate:
    """Linearized least-squares fix from per-anchor distance estimates.

    With anchor 1 moved to the origin the squared-range differences
    become linear in the unknown position: each remaining anchor i
    contributes the row (x_i, y_i) and the right-hand side
    (r_i^2 - d_i^2 + d_1^2) / 2.
    """
    pos = anchors.as_array()
    d, extrapolated = _distances_and_flag(distances)
    if d.size != anchors.n_anchors:
        raise ParameterError("one distance per anchor required")
    if np.any(d < 0):
        raise ParameterError("distances must be non-negative")
    origin = pos[0]
    rel = pos[1:] - origin
    rhs = 0.5 * ((rel ** 2).sum(axis=1) - d[1:] ** 2 + d[0] ** 2)
    sol, _, rank, _ = np.linalg.lstsq(rel, rhs, rcond=None)
    if rank < 2:
        raise GeometryError("collinear anchors leave the fix underdetermined")
    est = sol + origin
    return PositionEstimate(x=float(est[0]), y=float(est[1]),
                            extrapolated=extrapolated)


def tdoa_position(anchors: AnchorSet, time_diffs, wave_speed: float,
                  _tol: float = 1e-6) -> PositionEstimate:
    """Hyperbolic fix from arrival-time differences against anchor 1.

    ``time_diffs[i]`` is the arrival delay at anchor i+2 minus the delay
    at anchor 1. The intersection is solved by nonlinear least squares
    on the range-difference residuals from several deterministic starts;
    clearly distinct co-optimal solutions raise ``AmbiguityError``.
    """
    pos = anchors.as_array()
    tau = np.asarray(time_diffs, dtype=float)
    if tau.size != anchors.n_anchors - 1:
        raise ParameterError("need one time difference per non-reference "
                             "anchor")
    if wave_speed <= 0:
        raise ParameterError("wave_speed must be positive")
    range_diffs = wave_speed * tau

    def residuals(p):
        dist = np.linalg.norm(pos - p, axis=1)
        return (dist[1:] - dist[0]) - range_diffs

    centroid = pos.mean(axis=0)
    span = float(np.linalg.norm(pos - centroid, axis=1).max()) or 1.0
    starts = [centroid]
    starts += [0.7 * a + 0.3 * centroid for a in pos]
    starts += [centroid + span * np.array([dx, dy])
               for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))]

    solutions = []
    for s0 in starts:
        sol = least_squares(residuals, s0, method="lm", max_nfev=400)
        if not sol.success:
            continue
        solutions.append((float(sol.cost), sol.x))
    if not solutions:
        raise AmbiguityError("hyperbolic solve did not converge from any "
                             "start")
    best = min(c for c, _ in solutions)
    window = best + max(1e-18, 1e-6 * (1.0 + best))
    distinct = []
    for cost, p in sorted(solutions, key=lambda t: t[0]):
        if cost > window:
            break
        if all(np.linalg.norm(p - q) > _tol * (1.0 + span) for q in distinct):
            distinct.append(p)
    if len(distinct) > 1:
        raise AmbiguityError(
            "time differences admit %d positions" % len(distinct),
            candidates=[(float(p[0]), float(p[1])) for p in distinct])
    est = distinct[0]
    return PositionEstimate(x=float(est[0]), y=float(est[1]))
