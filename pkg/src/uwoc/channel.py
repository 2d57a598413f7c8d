"""Underwater optical channel models.

Covers straight-path extinction, Monte Carlo photon transport through an
absorbing/scattering column with Henyey-Greenstein angular deflection, a
two-term Gamma-shaped parametric fit of the arrival-time histogram,
log-normal turbulence fading with unit mean, and the per-bit interference
integrals that feed the link error-rate models.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import ParameterError

__all__ = [
    "SPEED_OF_LIGHT_VACUUM",
    "WATER_REFRACTIVE_INDEX",
    "WaterType",
    "WATER_TYPES",
    "LinkGeometry",
    "ImpulseResponse",
    "DoubleGammaParams",
    "DoubleGammaFit",
    "FadingModel",
    "IsiIntegrals",
    "light_speed_in_water",
    "beer_loss",
    "simulate_impulse_response",
    "eval_double_gamma",
    "fit_double_gamma",
    "scintillation_to_logvar",
    "isi_integrals",
]

SPEED_OF_LIGHT_VACUUM = 299792458.0
WATER_REFRACTIVE_INDEX = 1.33

HG_ASYMMETRY_DEFAULT = 0.924  # forward-peaked ocean-water phase function


def light_speed_in_water() -> float:
    return SPEED_OF_LIGHT_VACUUM / WATER_REFRACTIVE_INDEX


@dataclass(frozen=True)
class WaterType:
    """Absorption and scattering coefficients in 1/m."""

    absorption: float
    scattering: float
    label: str = "custom"

    def __post_init__(self):
        if self.absorption < 0 or self.scattering < 0:
            raise ParameterError("absorption and scattering must be nonnegative")

    @property
    def extinction(self) -> float:
        return self.absorption + self.scattering

    @property
    def albedo(self) -> float:
        c = self.extinction
        return self.scattering / c if c > 0 else 0.0


WATER_TYPES = {
    "pure-sea": WaterType(0.0405, 0.0025, "pure-sea"),
    "clear-ocean": WaterType(0.114, 0.037, "clear-ocean"),
    "coastal": WaterType(0.179, 0.219, "coastal"),
}


def water_from_label(label: str) -> WaterType:
    key = label.strip().lower().replace("_", "-").replace(" ", "-")
    if key not in WATER_TYPES:
        raise ParameterError(f"unknown water type {label!r}; know {sorted(WATER_TYPES)}")
    return WATER_TYPES[key]


def beer_loss(extinction: float, distance: float) -> float:
    """Straight-path power ratio exp(-c*L) for a collimated beam."""
    if extinction < 0 or distance < 0:
        raise ParameterError("extinction and distance must be nonnegative")
    return math.exp(-extinction * distance)


@dataclass(frozen=True)
class LinkGeometry:
    """Transmitter/receiver arrangement on a boresight-aligned link.

    ``fov_rad`` and ``beam_divergence_rad`` are half-angles.
    """

    range_m: float
    aperture_diameter_m: float = 0.2
    fov_rad: float = math.pi / 2
    beam_divergence_rad: float = 0.0
    wavelength_nm: float = 532.0

    def __post_init__(self):
        if self.range_m <= 0:
            raise ParameterError("range must be positive")
        if self.aperture_diameter_m <= 0:
            raise ParameterError("aperture must be positive")
        if not 0 < self.fov_rad <= math.pi:
            raise ParameterError("fov half-angle must lie in (0, pi]")
        if not 0 <= self.beam_divergence_rad < math.pi / 2:
            raise ParameterError("beam divergence must lie in [0, pi/2)")


@dataclass
class ImpulseResponse:
    """Arrival-time histogram of captured photon weight.

    ``weights[i]`` is the fraction of transmitted energy arriving in
    [t0 + i*dt, t0 + (i+1)*dt); t0 is the straight-line propagation delay.
    """

    t0: float
    dt: float
    weights: np.ndarray
    n_photons: int = 0
    captured_sq: float = 0.0  # sum of squared captured photon weights

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.dt <= 0:
            raise ParameterError("bin width must be positive")

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @property
    def is_empty(self) -> bool:
        return self.total_weight == 0.0

    def capture_stderr(self) -> float:
        """Monte Carlo standard error of total_weight."""
        if self.n_photons <= 1:
            return float("nan")
        mean = self.total_weight / self.n_photons
        var = self.captured_sq / self.n_photons - mean**2
        return math.sqrt(max(var, 0.0) / self.n_photons)

    def times(self) -> np.ndarray:
        """Bin-center arrival times."""
        return self.t0 + (np.arange(self.weights.size) + 0.5) * self.dt

    def to_csv(self) -> str:
        lines = ["t0,dt", f"{self.t0!r},{self.dt!r}"]
        lines += [repr(float(w)) for w in self.weights]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "ImpulseResponse":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if len(lines) < 2 or lines[0] != "t0,dt":
            raise ParameterError("impulse-response CSV must start with a t0,dt header")
        t0_s, dt_s = lines[1].split(",")
        weights = np.array([float(ln) for ln in lines[2:]])
        return cls(t0=float(t0_s), dt=float(dt_s), weights=weights)


def _sample_hg_cos(rng, g: float, n: int) -> np.ndarray:
    """Henyey-Greenstein deflection cosine via inverse-CDF sampling."""
    u = rng.random(n)
    if abs(g) < 1e-8:
        return 1.0 - 2.0 * u
    s = (1.0 - g * g) / (1.0 - g + 2.0 * g * u)
    return (1.0 + g * g - s * s) / (2.0 * g)


def _rotate_directions(dirn: np.ndarray, cos_t: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Deflect unit vectors by polar angle acos(cos_t) and azimuth phi."""
    sin_t = np.sqrt(np.clip(1.0 - cos_t**2, 0.0, 1.0))
    ux, uy, uz = dirn[:, 0], dirn[:, 1], dirn[:, 2]
    out = np.empty_like(dirn)
    near_pole = np.abs(uz) > 0.99999
    # general frame
    denom = np.sqrt(np.clip(1.0 - uz**2, 1e-24, None))
    cp, sp = np.cos(phi), np.sin(phi)
    out[:, 0] = sin_t * (ux * uz * cp - uy * sp) / denom + ux * cos_t
    out[:, 1] = sin_t * (uy * uz * cp + ux * sp) / denom + uy * cos_t
    out[:, 2] = -sin_t * cp * denom + uz * cos_t
    # vertical travel: the frame above is singular
    if np.any(near_pole):
        sign = np.sign(uz[near_pole])
        out[near_pole, 0] = sin_t[near_pole] * cp[near_pole]
        out[near_pole, 1] = sin_t[near_pole] * sp[near_pole]
        out[near_pole, 2] = sign * cos_t[near_pole]
    norm = np.sqrt((out**2).sum(axis=1))
    return out / norm[:, None]


def simulate_impulse_response(
    water: WaterType,
    geometry: LinkGeometry,
    n_photons: int,
    seed: int = 0,
    bin_width: float | None = None,
    n_bins: int = 4096,
    g: float = HG_ASYMMETRY_DEFAULT,
    roulette_threshold: float = 1e-6,
    block_size: int = 100_000,
    n_workers: int = 1,
) -> ImpulseResponse:
    """Monte Carlo photon transport from source to receiver plane.

    Photons launch at the origin inside the divergence cone around the
    boresight.  Free paths are exponential with mean 1/c; at each
    interaction the packet keeps a survival weight times the albedo b/c and
    deflects with the Henyey-Greenstein phase function.  The receiver plane
    is absorbing: a packet crossing it inside the aperture and within the
    field of view banks its weight in the arrival-time histogram, any other
    crossing ends the packet.  Sub-threshold packets play Russian roulette
    (one in ten survives with tenfold weight).  Work is split into
    fixed-size blocks with per-block seed streams, so the result depends
    only on ``seed`` and never on ``n_workers``.

    Returns an ImpulseResponse whose weights sum to at most 1.
    """
    if n_photons < 1:
        raise ParameterError("need at least one photon")
    v = light_speed_in_water()
    t0 = geometry.range_m / v
    if bin_width is None:
        bin_width = t0 / 1000.0
    blocks = [
        (idx, min(block_size, n_photons - idx * block_size))
        for idx in range((n_photons + block_size - 1) // block_size)
    ]

    def run_block(args):
        idx, count = args
        rng = np.random.default_rng([seed, idx])
        return _transport_block(rng, water, geometry, count, bin_width, n_bins, g,
                                roulette_threshold, v, t0)

    if n_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run_block, blocks))
    else:
        results = [run_block(b) for b in blocks]

    hist = np.zeros(n_bins)
    captured_sq = 0.0
    for h, sq in results:  # block order, not completion order
        hist += h
        captured_sq += sq
    hist /= n_photons
    captured_sq /= n_photons**2
    if hist.sum() == 0.0:
        warnings.warn("no photons captured; impulse response is empty", stacklevel=2)
    # drop the trailing all-zero region but keep at least one bin
    nz = np.nonzero(hist)[0]
    keep = int(nz[-1]) + 1 if nz.size else 1
    return ImpulseResponse(
        t0=t0, dt=bin_width, weights=hist[:keep], n_photons=n_photons,
        captured_sq=captured_sq,
    )


def _transport_block(rng, water, geometry, count, bin_width, n_bins, g,
                     roulette_threshold, v, t0):
    c = water.extinction
    albedo = water.albedo
    plane_z = geometry.range_m
    ap_r_sq = (geometry.aperture_diameter_m / 2.0) ** 2
    cos_fov = math.cos(geometry.fov_rad)
    max_path = (t0 + n_bins * bin_width) * v

    pos = np.zeros((count, 3))
    if geometry.beam_divergence_rad > 0:
        cos_t = rng.uniform(math.cos(geometry.beam_divergence_rad), 1.0, count)
        phi = rng.uniform(0.0, 2.0 * math.pi, count)
        sin_t = np.sqrt(1.0 - cos_t**2)
        dirn = np.column_stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])
    else:
        dirn = np.tile([0.0, 0.0, 1.0], (count, 1))
    w = np.ones(count)
    plen = np.zeros(count)

    hist = np.zeros(n_bins)
    captured_sq = 0.0
    while pos.shape[0]:
        n = pos.shape[0]
        step = rng.exponential(1.0 / c, n) if c > 0 else np.full(n, np.inf)
        dz = dirn[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_plane = np.where(dz > 0, (plane_z - pos[:, 2]) / dz, np.inf)
        crossing = t_plane <= step
        if np.any(crossing):
            land = pos[crossing] + dirn[crossing] * t_plane[crossing, None]
            r_sq = land[:, 0] ** 2 + land[:, 1] ** 2
            ok = (r_sq <= ap_r_sq) & (dz[crossing] >= cos_fov)
            if np.any(ok):
                t_arr = (plen[crossing][ok] + t_plane[crossing][ok]) / v
                idx = np.floor((t_arr - t0) / bin_width).astype(int)
                inside = (idx >= 0) & (idx < n_bins)
                wc = w[crossing][ok]
                np.add.at(hist, idx[inside], wc[inside])
                captured_sq += float((wc[inside] ** 2).sum())
        # photons that reach the plane are absorbed there either way
        alive = ~crossing
        pos = pos[alive] + dirn[alive] * step[alive, None]
        dirn = dirn[alive]
        w = w[alive] * albedo
        plen = plen[alive] + step[alive]
        keep = (w > 0) & (plen < max_path)
        pos, dirn, w, plen = pos[keep], dirn[keep], w[keep], plen[keep]
        if pos.shape[0] == 0:
            break
        low = w < roulette_threshold
        if np.any(low):
            survive = rng.random(int(low.sum())) < 0.1
            w_low = w[low]
            w_low[survive] *= 10.0
            w_low[~survive] = 0.0
            w[low] = w_low
            keep = w > 0
            pos, dirn, w, plen = pos[keep], dirn[keep], w[keep], plen[keep]
            if pos.shape[0] == 0:
                break
        cos_t = _sample_hg_cos(rng, g, pos.shape[0])
        phi = rng.uniform(0.0, 2.0 * math.pi, pos.shape[0])
        dirn = _rotate_directions(dirn, cos_t, phi)
    return hist, captured_sq


# --------------------------------------------------------------- parametric fit


@dataclass(frozen=True)
class DoubleGammaParams:
    """Two-term h(t) = sum_i amp_i * (t-t0) * exp(-rate_i * (t-t0)), t >= t0.

    By convention rate1 >= rate2 (fast component first).
    """

    amp1: float
    rate1: float
    amp2: float
    rate2: float
    t0: float


@dataclass(frozen=True)
class DoubleGammaFit:
    params: DoubleGammaParams
    residual: float  # sqrt(integral of squared misfit), W-equivalent units
    data_norm: float  # same norm of the histogram itself
    converged: bool


def eval_double_gamma(params: DoubleGammaParams, t) -> np.ndarray:
    """Evaluate the fitted response density; zero before the onset t0."""
    t = np.asarray(t, dtype=float)
    x = t - params.t0
    out = np.where(
        x >= 0,
        params.amp1 * x * np.exp(-params.rate1 * np.clip(x, 0, None))
        + params.amp2 * x * np.exp(-params.rate2 * np.clip(x, 0, None)),
        0.0,
    )
    return out


def _log_slope(x, y):
    """Least-squares slope of ln(y) against x over strictly positive y."""
    m = y > 0
    if m.sum() < 2:
        return None
    coef = np.polyfit(x[m], np.log(y[m]), 1)
    return coef[0]


def fit_double_gamma(response: ImpulseResponse) -> DoubleGammaFit:
    """Nonlinear least-squares fit of the two-term model to a histogram.

    Initialization: the post-peak decay is split in two; log-linear slopes
    of h/(t-t0) over the early and late halves seed the two rates, then the
    amplitudes come from a linear solve at those rates.  Time is rescaled
    by the histogram span before optimizing so the problem is well
    conditioned regardless of absolute units.  Non-convergence returns the
    best point found with ``converged=False`` rather than raising.
    """
    if response.is_empty:
        raise ParameterError("cannot fit an empty impulse response")
    w = response.weights
    nz = np.nonzero(w)[0]
    last = int(nz[-1]) + 1
    y = w[:last] / response.dt  # density, 1/s
    x = (np.arange(last) + 0.5) * response.dt  # seconds past onset
    span = x[-1]
    xs = x / span  # dimensionless time
    ys = y / y.max()

    # slow rate off the late tail, then the fast rate off the early excess
    # once the slow-component estimate has been peeled away
    peak = int(np.argmax(ys))
    tail_x = xs[peak:]
    tail_g = ys[peak:] / np.clip(tail_x, 1e-12, None)
    late = max(2, (2 * len(tail_x)) // 3)
    s_slow = _log_slope(tail_x[late:], tail_g[late:])
    r_slow = max(0.1, -(s_slow if s_slow is not None else -1.0))
    m = tail_g > 0
    a_slow = 0.0
    if m.sum() >= 2:
        a_slow = math.exp(
            float(np.median(np.log(tail_g[m]) + r_slow * tail_x[m]))
        )
    excess = ys - a_slow * xs * np.exp(-r_slow * xs)
    early = slice(peak, peak + max(3, (len(tail_x)) // 5))
    s_fast = _log_slope(xs[early], np.clip(excess[early], 0, None)
                        / np.clip(xs[early], 1e-12, None))
    rate_pairs = [(r_slow * k, r_slow) for k in (3.0, 8.0, 25.0)]
    if s_fast is not None and -s_fast > r_slow:
        rate_pairs.insert(0, (-s_fast, r_slow))
    # a coarse half-split slope pair keeps the pool diverse when the
    # late-tail estimate is drowned in histogram noise
    half = max(2, len(tail_x) // 2)
    s_a = _log_slope(tail_x[:half], tail_g[:half])
    s_b = _log_slope(tail_x[half:], tail_g[half:])
    if s_a is not None and s_b is not None:
        ra, rb = max(1.0, -s_a), max(0.1, -s_b)
        if ra < rb:
            ra, rb = rb, ra
        if abs(ra - rb) < 1e-6:
            rb = 0.5 * ra
        rate_pairs.append((ra, rb))

    sq = math.sqrt(response.dt)

    def resid(theta):
        a1, b1, a2, b2 = theta
        model = a1 * xs * np.exp(-b1 * xs) + a2 * xs * np.exp(-b2 * xs)
        return (model - ys) * sq

    sol = None
    for r1, r2 in rate_pairs:
        basis = np.column_stack([xs * np.exp(-r1 * xs), xs * np.exp(-r2 * xs)])
        amps, *_ = np.linalg.lstsq(basis, ys, rcond=None)
        x0 = np.array([amps[0], r1, amps[1], r2])
        trial = least_squares(
            resid, x0,
            bounds=([-np.inf, 1e-9, -np.inf, 1e-9], np.inf),
            max_nfev=2000,
        )
        if sol is None or trial.cost < sol.cost:
            sol = trial
    a1, b1, a2, b2 = sol.x
    # undo the scaling: time by span, amplitude by y.max()
    scale = y.max()
    p = [(a1 * scale / span, b1 / span), (a2 * scale / span, b2 / span)]
    p.sort(key=lambda ar: -ar[1])  # fast component first
    params = DoubleGammaParams(
        amp1=p[0][0], rate1=p[0][1], amp2=p[1][0], rate2=p[1][1], t0=response.t0
    )
    model = eval_double_gamma(params, response.t0 + x)
    residual = math.sqrt(float(((model - y) ** 2).sum() * response.dt))
    data_norm = math.sqrt(float((y**2).sum() * response.dt))
    return DoubleGammaFit(
        params=params, residual=residual, data_norm=data_norm,
        converged=bool(sol.status > 0),
    )


# --------------------------------------------------------------------- fading


def scintillation_to_logvar(scintillation_index: float) -> float:
    """Log-amplitude variance from the intensity scintillation index.

    sigma_x^2 = (1/4) ln(1 + sigma_I^2).
    """
    if scintillation_index < 0:
        raise ParameterError("scintillation index must be nonnegative")
    return 0.25 * math.log1p(scintillation_index)


@dataclass(frozen=True)
class FadingModel:
    """Log-normal intensity fading h = exp(2x), x ~ N(mu_x, sigma_x^2).

    mu_x is pinned to -sigma_x^2 so the mean path gain stays one and the
    fading neither adds nor removes average power.
    """

    sigma_x_sq: float

    def __post_init__(self):
        if self.sigma_x_sq < 0:
            raise ParameterError("sigma_x^2 must be nonnegative")

    @property
    def mu_x(self) -> float:
        return -self.sigma_x_sq

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        if self.sigma_x_sq == 0:
            return np.ones(size) if size is not None else 1.0
        x = rng.normal(self.mu_x, math.sqrt(self.sigma_x_sq), size)
        return np.exp(2.0 * x)

    def pdf(self, h) -> np.ndarray:
        """Density of the intensity gain; degenerate at sigma = 0."""
        if self.sigma_x_sq == 0:
            raise ParameterError("degenerate fading has no density")
        h = np.asarray(h, dtype=float)
        sig2 = self.sigma_x_sq
        out = np.zeros_like(h)
        pos = h > 0
        out[pos] = (
            1.0
            / (2.0 * h[pos] * math.sqrt(2.0 * math.pi * sig2))
            * np.exp(-((np.log(h[pos]) - 2.0 * self.mu_x) ** 2) / (8.0 * sig2))
        )
        return out


# ----------------------------------------------------------------- ISI windows


@dataclass(frozen=True)
class IsiIntegrals:
    """Received-energy split of one transmitted pulse across bit slots.

    ``signal`` integrates the convolved waveform over the synchronized slot
    [0, Tb) past the channel onset; ``isi[k-1]`` integrates slot k, the
    energy spilling onto the k-th later bit.  Units: responsivity * W * s.
    """

    signal: float
    isi: np.ndarray
    resampled: bool
    covered_fraction: float


def isi_integrals(
    pulse: np.ndarray,
    response: ImpulseResponse,
    bit_time: float,
    memory: int,
    responsivity: float = 1.0,
) -> IsiIntegrals:
    """Integrate pulse (*) response over consecutive bit windows.

    ``pulse`` is the transmitted power waveform sampled at ``response.dt``.
    The receiver clock is assumed synchronized to the channel onset, so the
    windows start at t0.  Window edges that fall inside a histogram bin are
    split pro rata and flagged via ``resampled``.
    """
    if bit_time <= 0 or memory < 0:
        raise ParameterError("bit_time must be positive and memory nonnegative")
    pulse = np.asarray(pulse, dtype=float)
    if pulse.ndim != 1 or pulse.size == 0:
        raise ParameterError("pulse must be a nonempty 1-d waveform")
    dt = response.dt
    conv = np.convolve(pulse, response.weights)  # W * fraction per bin
    cum = np.concatenate([[0.0], np.cumsum(conv) * dt])  # integral up to bin edge

    def integral_to(tau):
        # piecewise-constant integral of the convolved waveform on [0, tau]
        pos = tau / dt
        k = int(math.floor(pos + 1e-12))
        if k >= conv.size:
            return cum[-1]
        frac = pos - k
        return cum[k] + frac * conv[k] * dt

    n_per_bit = bit_time / dt
    resampled = abs(n_per_bit - round(n_per_bit)) > 1e-9 * max(1.0, n_per_bit)

    edges = [integral_to(k * bit_time) for k in range(memory + 2)]
    windows = responsivity * np.diff(edges)
    total = responsivity * cum[-1]
    covered = float(windows.sum() / total) if total > 0 else 1.0
    return IsiIntegrals(
        signal=float(windows[0]),
        isi=windows[1:],
        resampled=resampled,
        covered_fraction=covered,
    )
