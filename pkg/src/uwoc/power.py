"""Transmit power control for the downlink: sector activation and
ring-based allocation from quantized channel feedback.

The ring scheme splits the cell into concentric annuli; each ring gets
the smallest power whose bit error rate at the ring's outer edge meets
the target. Averaging the per-ring powers over a user distribution
gives the transmitted-power-per-bit metric the two schemes are compared
on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np

from . import ber as _ber
from . import channel as _channel
from .errors import GeometryError, InfeasibleError, ParameterError

__all__ = [
    "SectorPlan",
    "RingPlan",
    "sector_of",
    "ring_of",
    "equal_area_boundaries",
    "allocate_ring_powers",
    "average_power_per_bit",
    "optimal_ring_boundaries",
    "distance_scaled_sigma",
    "make_downlink_ber",
    "watts_to_dbm",
    "dbm_to_watts",
]


def watts_to_dbm(p: float) -> float:
    if p <= 0:
        raise ParameterError("power must be positive")
    return 10.0 * math.log10(p / 1e-3)


def dbm_to_watts(p_dbm: float) -> float:
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


# --------------------------------------------------------------- plans


@dataclass(frozen=True)
class SectorPlan:
    """Equal angular sectors; only the sector facing the user is lit.

    Sector k spans [start + k*width, start + (k+1)*width) with
    width = 2*pi/n_sectors; each boundary belongs to the sector it
    opens.
    """

    n_sectors: int
    start_angle: float = 0.0

    def __post_init__(self):
        if self.n_sectors < 1:
            raise ParameterError("need at least one sector")

    @property
    def active_fraction(self) -> float:
        # bookkeeping for total LED power: one sector lit at a time
        return 1.0 / self.n_sectors


@dataclass(frozen=True)
class RingPlan:
    """Concentric annuli out to the cell radius, optionally with powers."""

    boundaries: tuple           # outer radii r_1 < ... < r_N (cell radius)
    powers: Optional[tuple] = None  # average power per bit per ring, W

    def __post_init__(self):
        b = tuple(float(r) for r in self.boundaries)
        object.__setattr__(self, "boundaries", b)
        if not b or any(r <= 0 for r in b):
            raise ParameterError("boundaries must be positive radii")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise ParameterError("boundaries must increase strictly")
        if self.powers is not None:
            p = tuple(float(x) for x in self.powers)
            object.__setattr__(self, "powers", p)
            if len(p) != len(b):
                raise ParameterError("one power per ring required")
            if any(x <= 0 for x in p):
                raise ParameterError("ring powers must be positive")

    @property
    def n_rings(self) -> int:
        return len(self.boundaries)

    @property
    def cell_radius(self) -> float:
        return self.boundaries[-1]

    def area_weights(self) -> np.ndarray:
        """Fraction of a uniform-disk population inside each ring."""
        r = np.concatenate(([0.0], np.asarray(self.boundaries)))
        return np.diff(r**2) / self.cell_radius**2


# --------------------------------------------------------- assignments


def sector_of(mu_position, obts_position, plan: SectorPlan) -> int:
    dx = float(mu_position[0]) - float(obts_position[0])
    dy = float(mu_position[1]) - float(obts_position[1])
    if dx == 0.0 and dy == 0.0:
        raise GeometryError("bearing undefined: user sits on the "
                            "transmitter")
    bearing = (math.atan2(dy, dx) - plan.start_angle) % (2.0 * math.pi)
    width = 2.0 * math.pi / plan.n_sectors
    return min(int(bearing // width), plan.n_sectors - 1)


def ring_of(distance: float, plan: RingPlan) -> int:
    """1-based index of the smallest ring containing ``distance``."""
    if distance < 0:
        raise ParameterError("distance must be non-negative")
    if distance > plan.cell_radius:
        raise ParameterError("distance %.3f m is outside the %.3f m cell"
                             % (distance, plan.cell_radius))
    for i, r in enumerate(plan.boundaries):
        if distance <= r:
            return i + 1
    return plan.n_rings


def equal_area_boundaries(n_rings: int, cell_radius: float) -> tuple:
    """Radii splitting the disk into rings of equal area."""
    if n_rings < 1 or cell_radius <= 0:
        raise ParameterError("need n_rings >= 1 and a positive radius")
    return tuple(cell_radius * math.sqrt(i / n_rings)
                 for i in range(1, n_rings + 1))


def distance_scaled_sigma(distance: float, cell_radius: float,
                          sigma_max: float) -> float:
    """Log-amplitude variance growing linearly from 0 to sigma_max at
    the cell edge."""
    if cell_radius <= 0:
        raise ParameterError("cell_radius must be positive")
    return sigma_max * min(max(distance, 0.0), cell_radius) / cell_radius


# ----------------------------------------------------------- allocation


def _min_feasible_power(ber_at, radius, target, p_min, p_max, tol_db):
    """Smallest power with ber_at(radius, p) <= target, via bisection in
    log power; returns the feasible upper end of the final bracket."""
    if ber_at(radius, p_max) > target:
        return None
    if ber_at(radius, p_min) <= target:
        return p_min
    lo, hi = math.log10(p_min), math.log10(p_max)
    while 10.0 * (hi - lo) > tol_db:
        mid = 0.5 * (lo + hi)
        if ber_at(radius, 10.0 ** mid) <= target:
            hi = mid
        else:
            lo = mid
    return 10.0 ** hi


def allocate_ring_powers(target_ber: float, boundaries, ber_at: Callable,
                         p_max: float = 10.0, p_min: float = 1e-12,
                         tol_db: float = 0.05) -> RingPlan:
    """Per-ring minimal powers meeting ``target_ber`` at each outer edge.

    ``ber_at(distance_m, avg_power_w)`` must be non-increasing in power.
    Powers are forced non-decreasing across rings, so a user never gets
    less power than one closer in.
    """
    if not 0.0 < target_ber < 0.5:
        raise ParameterError("target_ber must lie in (0, 0.5)")
    if isinstance(boundaries, RingPlan):
        boundaries = boundaries.boundaries
    plan = RingPlan(boundaries=tuple(boundaries))
    powers, prev = [], p_min
    for i, radius in enumerate(plan.boundaries):
        p = _min_feasible_power(ber_at, radius, target_ber, p_min, p_max,
                                tol_db)
        if p is None:
            raise InfeasibleError(
                "ring %d (outer radius %.2f m) cannot reach BER %.2e "
                "within the %.3g W cap" % (i + 1, radius, target_ber,
                                           p_max))
        prev = max(p, prev)
        powers.append(prev)
    return RingPlan(boundaries=plan.boundaries, powers=tuple(powers))


def average_power_per_bit(plan: RingPlan, weights=None) -> float:
    """Expected allocated power over user positions.

    Default weights are the closed-form ring areas of a uniform disk;
    pass explicit per-ring weights for other distributions.
    """
    if plan.powers is None:
        raise ParameterError("plan carries no powers; allocate first")
    w = plan.area_weights() if weights is None else np.asarray(
        weights, dtype=float)
    if w.size != plan.n_rings or np.any(w < 0):
        raise ParameterError("need one non-negative weight per ring")
    total = float(w.sum())
    if total <= 0:
        raise ParameterError("weights must not all vanish")
    return float(np.dot(w / total, np.asarray(plan.powers)))


def optimal_ring_boundaries(n_rings: int, cell_radius: float,
                            target_ber: float, ber_at: Callable,
                            p_max: float = 10.0, p_min: float = 1e-12,
                            tol_db: float = 0.05, grid: int = 16,
                            refine: int = 2) -> tuple:
    """Boundary radii minimizing the uniform-disk average power.

    The required edge power is monotone in radius, so it is tabulated
    once per candidate radius; interior boundaries are then scanned on a
    deterministic grid and the winner's neighborhood re-gridded a few
    times. The outermost boundary is pinned to the cell radius.
    """
    if n_rings < 1:
        raise ParameterError("need at least one ring")
    cache = {}

    def p_req(r):
        if r not in cache:
            p = _min_feasible_power(ber_at, r, target_ber, p_min, p_max,
                                    tol_db)
            if p is None:
                raise InfeasibleError(
                    "radius %.2f m cannot reach BER %.2e within the cap"
                    % (r, target_ber))
            cache[r] = p
        return cache[r]

    p_req(cell_radius)  # fail fast if even the edge is infeasible
    if n_rings == 1:
        return (cell_radius,)

    def avg_power(interior):
        radii = list(interior) + [cell_radius]
        prev_r, prev_p, acc = 0.0, 0.0, 0.0
        for r in radii:
            p = max(p_req(r), prev_p)
            acc += (r**2 - prev_r**2) * p
            prev_r, prev_p = r, p
        return acc / cell_radius**2

    lo, hi = cell_radius / grid, cell_radius * (1.0 - 1.0 / grid)
    best = None
    for _ in range(refine + 1):
        pts = np.linspace(lo, hi, grid)
        for combo in combinations(pts, n_rings - 1):
            val = avg_power(combo)
            if best is None or val < best[0] - 1e-15:
                best = (val, combo)
        step = (hi - lo) / (grid - 1)
        lo = max(min(best[1]) - step, cell_radius * 1e-3)
        hi = min(max(best[1]) + step, cell_radius * (1.0 - 1e-3))
    return tuple(sorted(best[1])) + (cell_radius,)


# ------------------------------------------------------------ BER model


def make_downlink_ber(extinction: float, cell_radius: float,
                      sigma_max: float, code_length: int, code_weight: int,
                      n_users: int, responsivity: float, chip_time: float,
                      noise_std_chip: float, n_nodes: int = 20) -> Callable:
    """Single-hop downlink BER as a function of (distance, avg power).

    Average transmitted power per bit maps to chip power through the
    OOC duty cycle; fading variance follows the linear distance scaling.
    """

    def ber_at(distance: float, avg_power: float) -> float:
        loss = _channel.beer_loss(extinction, distance)
        sig = distance_scaled_sigma(distance, cell_radius, sigma_max)
        rx = _ber.ReceiverModel(
            responsivity=responsivity,
            chip_power=_ber.chip_power_from_average(avg_power, code_length,
                                                    code_weight),
            chip_time=chip_time,
            noise_std_chip=noise_std_chip)
        chain = _ber.RelayChain(hop_losses=(loss,), hop_sigma_x_sq=(sig,))
        return _ber.average_ber_relay(rx, chain, "downlink", code_length,
                                      code_weight, n_users=n_users,
                                      n_nodes=n_nodes)

    return ber_at
