"""Bit error rate analysis for chip detect-and-forward OCDMA links.

The analytic path walks the relay chain in the log domain: per-hop chip
error rates come from the Gaussian Q function, hops combine by
inclusion-exclusion, mark chips combine under the AND decision rule, and
the result is averaged over log-normal fading (Gauss-Hermite product
grids) and over enumerated multiple-access interference patterns.  A
chip-level Monte Carlo simulator provides an independent estimate of the
same quantity for cross-checks.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtr

from .errors import ParameterError

LOG_HALF = -math.log(2.0)


def q_function(x):
    """Gaussian tail probability Q(x)."""
    return ndtr(-np.asarray(x, dtype=float))


def log_q_function(x):
    """log Q(x), stable for arguments far into the tail."""
    return log_ndtr(-np.asarray(x, dtype=float))


def _log_union(log_terms):
    """log(1 - prod(1 - p_k)) from the factors' log probabilities.

    Signed inclusion-exclusion in the log domain; the union always
    exceeds the largest single term, so the alternating sum cannot
    cancel catastrophically, and the result stays finite for inputs far
    below the smallest positive float.
    """
    k = len(log_terms)
    grids = []
    signs = []
    for r in range(1, k + 1):
        for sub in itertools.combinations(range(k), r):
            term = log_terms[sub[0]]
            for i in sub[1:]:
                term = term + log_terms[i]
            grids.append(term)
            signs.append(1.0 if r % 2 else -1.0)
    grids = np.stack(np.broadcast_arrays(*grids)) if k > 1 \
        else np.asarray(grids[0])[np.newaxis]
    b = np.asarray(signs).reshape((len(signs),) + (1,) * (grids.ndim - 1))
    out, sign = logsumexp(grids, axis=0, b=b, return_sign=True)
    return np.where(sign > 0, out, -np.inf)


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class ReceiverModel:
    """Photodetector and pulse parameters shared by the BER formulas.

    noise_std_chip is the additive-noise standard deviation integrated
    over one chip window; noise_std_bit over one bit window (only needed
    by the MIMO path).
    """

    responsivity: float
    chip_power: float
    chip_time: float
    noise_std_chip: float
    noise_std_bit: float | None = None

    def __post_init__(self):
        for name in ("responsivity", "chip_power", "chip_time",
                     "noise_std_chip"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.noise_std_bit is not None and self.noise_std_bit <= 0:
            raise ParameterError("noise_std_bit must be positive")

    @property
    def chip_amplitude(self) -> float:
        """Peak electrical amplitude R*Pc*Tc of one received chip."""
        return self.responsivity * self.chip_power * self.chip_time


def chip_power_from_average(avg_bit_power: float, length: int,
                            weight: int) -> float:
    """Per-chip optical power for a stated average power per bit.

    A one bit lights weight chips out of length at Pc each and ones occur
    half the time, so P_avg = Pc * W / (2F).
    """
    if avg_bit_power <= 0:
        raise ParameterError("avg_bit_power must be positive")
    return avg_bit_power * 2.0 * length / weight


@dataclass(frozen=True)
class InterferencePattern:
    """Counts of interferers landing on each pulsed mark chip."""

    alpha: tuple
    n_users: int

    def __post_init__(self):
        alpha = tuple(int(a) for a in self.alpha)
        object.__setattr__(self, "alpha", alpha)
        if any(a < 0 for a in alpha):
            raise ParameterError("alpha entries must be nonnegative")
        if self.total > self.n_users - 1:
            raise ParameterError("pattern places more hits than interferers")

    @property
    def total(self) -> int:
        return sum(self.alpha)


@dataclass(frozen=True)
class RelayChain:
    """Per-hop losses and fading strengths of a serial CDF chain.

    n_relays intermediate relays give n_relays + 1 hops; index 0 is the
    hop leaving the source.
    """

    hop_losses: tuple
    hop_sigma_x_sq: tuple

    def __post_init__(self):
        losses = tuple(float(v) for v in self.hop_losses)
        sigmas = tuple(float(v) for v in self.hop_sigma_x_sq)
        object.__setattr__(self, "hop_losses", losses)
        object.__setattr__(self, "hop_sigma_x_sq", sigmas)
        if len(losses) != len(sigmas) or not losses:
            raise ParameterError("hop losses and fading lists must match")
        if any(not 0 < v <= 1 for v in losses):
            raise ParameterError("hop losses must lie in (0, 1]")
        if any(v < 0 for v in sigmas):
            raise ParameterError("fading variances must be nonnegative")

    @property
    def n_relays(self) -> int:
        return len(self.hop_losses) - 1

    @property
    def n_hops(self) -> int:
        return len(self.hop_losses)


@dataclass(frozen=True)
class MimoConfig:
    """Per-path fading strengths and ISI integrals of an equal-gain link.

    gamma_s[i, j] is the in-slot integral of path (i, j); gamma_isi[i, j, m]
    the integral captured from the bit sent m + 1 slots earlier.  All
    integrals carry the responsivity and transmit amplitude already.
    """

    sigma_x_sq: np.ndarray
    gamma_s: np.ndarray
    gamma_isi: np.ndarray = None

    def __post_init__(self):
        sig = np.atleast_2d(np.asarray(self.sigma_x_sq, dtype=float))
        gs = np.atleast_2d(np.asarray(self.gamma_s, dtype=float))
        if self.gamma_isi is None:
            gi = np.zeros(gs.shape + (0,))
        else:
            gi = np.asarray(self.gamma_isi, dtype=float)
        if gi.ndim != 3:
            raise ParameterError("gamma_isi must be (n_tx, n_rx, memory)")
        object.__setattr__(self, "sigma_x_sq", sig)
        object.__setattr__(self, "gamma_s", gs)
        object.__setattr__(self, "gamma_isi", gi)
        if sig.shape != gs.shape or gi.shape[:2] != gs.shape:
            raise ParameterError("per-path array shapes disagree")
        if np.any(sig < 0) or np.any(gs < 0) or np.any(gi < 0):
            raise ParameterError("fading and ISI integrals must be >= 0")
        if not np.any(gs > 0):
            raise ParameterError("at least one path needs signal energy")

    @property
    def n_tx(self) -> int:
        return self.gamma_s.shape[0]

    @property
    def n_rx(self) -> int:
        return self.gamma_s.shape[1]

    @property
    def l_max(self) -> int:
        return self.gamma_isi.shape[2]


# ------------------------------------------------- fading expectations


def lognormal_fading_nodes(sigma_x_sq: float, n_nodes: int):
    """Gauss-Hermite nodes mapped to unit-mean log-normal fading values.

    Returns (h_values, weights) with weights summing to 1; sigma_x_sq = 0
    collapses every node onto h = 1.
    """
    if n_nodes < 1:
        raise ParameterError("n_nodes must be >= 1")
    x, w = np.polynomial.hermite.hermgauss(n_nodes)
    sx = math.sqrt(max(sigma_x_sq, 0.0))
    h = np.exp(2.0 * (math.sqrt(2.0) * sx * x - sigma_x_sq))
    return h, w / math.sqrt(math.pi)


def gauss_hermite_lognormal_expectation(f, sigma_x_sq: float,
                                        n_nodes: int = 30) -> float:
    """E[f(h)] for unit-mean log-normal fading h = exp(2x)."""
    h, w = lognormal_fading_nodes(sigma_x_sq, n_nodes)
    return float(np.sum(w * np.asarray(f(h), dtype=float)))


# ---------------------------------------------------- conditional CERs


def cer_first_hop_uplink(bit: int, fading: float, beta: float,
                         rx: ReceiverModel, loss: float) -> float:
    """First-hop chip error rate with interference level beta.

    The relay thresholds at half the faded desired amplitude (perfect
    CSI); bit 0 errors when interference plus noise crosses it, bit 1
    when noise minus interference drops below it.
    """
    if bit not in (0, 1):
        raise ParameterError("bit must be 0 or 1")
    if beta < 0:
        raise ParameterError("beta must be nonnegative")
    sign = -1.0 if bit == 0 else 1.0
    arg = rx.chip_amplitude * (fading * loss / 2.0 + sign * beta)
    return float(q_function(arg / rx.noise_std_chip))


def cer_mai_free(fading: float, rx: ReceiverModel, loss: float) -> float:
    """Chip error rate of an interference-free hop (same for 0 and 1)."""
    arg = rx.chip_amplitude * fading * loss / (2.0 * rx.noise_std_chip)
    return float(q_function(arg))


def e2e_cer(hop_cers) -> float:
    """End-to-end chip error rate of a CDF chain, 1 - prod(1 - p_i)."""
    p = np.asarray(hop_cers, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ParameterError("hop CERs must lie in [0, 1]")
    return float(-np.expm1(np.sum(np.log1p(-p))))


def conditional_ber(cer_on_given_off, cer_off_given_on):
    """Bit error probabilities under the AND rule over the mark chips.

    A 0 flips to 1 only if every mark chip errs; a 1 flips to 0 if any
    mark chip drops.
    """
    p10 = np.asarray(cer_on_given_off, dtype=float)
    p01 = np.asarray(cer_off_given_on, dtype=float)
    if p10.shape != p01.shape or p10.ndim != 1:
        raise ParameterError("need one CER pair per mark chip")
    with np.errstate(divide="ignore"):
        ber10 = float(np.exp(np.sum(np.log(np.clip(p10, 0.0, 1.0)))))
    ber01 = float(-np.expm1(np.sum(np.log1p(-np.clip(p01, 0.0, 1.0)))))
    return ber10, ber01


# ------------------------------------------------ interference patterns


def interferer_hit_probability(length: int, weight: int) -> float:
    """Chance one interferer pulses a given mark chip, W^2 / (2F)."""
    p = weight * weight / (2.0 * length)
    if not 0 < p * weight < 1:
        raise ParameterError("code too dense for the collision model")
    return p


def _beta_nodes(losses, sigmas, n_nodes, mc_draws, seed):
    """Support points and weights for the summed interference level.

    losses/sigmas describe the interferers hitting one chip.  Up to three
    hitters get an exact Gauss-Hermite product grid; larger groups fall
    back to a fixed-seed Monte Carlo cloud with uniform weights.
    """
    k = len(losses)
    if k == 0:
        return np.zeros(1), np.ones(1)
    if k <= 3:
        parts = [lognormal_fading_nodes(s, n_nodes) for s in sigmas]
        beta = np.zeros(1)
        wts = np.ones(1)
        for loss, (h, w) in zip(losses, parts):
            beta = (beta[:, None] + loss * h[None, :]).ravel()
            wts = (wts[:, None] * w[None, :]).ravel()
        return beta, wts
    rng = np.random.default_rng([seed, k, len(sigmas)])
    beta = np.zeros(mc_draws)
    for loss, s in zip(losses, sigmas):
        sx = math.sqrt(max(s, 0.0))
        x = rng.normal(-s, sx, size=mc_draws)
        beta += loss * np.exp(2.0 * x)
    return beta, np.full(mc_draws, 1.0 / mc_draws)


_LAYER_WINDOW = 8.0
_LAYER_ZMAX = 12.0


def _q_step_expectation(base, coeff, sigma_x_sq, n_panel=40):
    """E over one unit-mean log-normal fading h of Q(base - coeff * h).

    At strong interference Q collapses toward the indicator of
    coeff * h > base and fixed fading grids stop resolving it, so the
    expectation is split into the exact indicator mass (a log-normal
    tail) plus the residual Q - step integrated over two smooth panels
    either side of the transition.  Accuracy is then uniform in coeff.
    """
    base = np.asarray(base, dtype=float)
    if sigma_x_sq <= 0.0:
        return ndtr(coeff - base)
    sx = math.sqrt(sigma_x_sq)

    def z_of(arg, empty):
        # z with coeff * h(z) = arg; `empty` sentinel when arg <= 0
        with np.errstate(divide="ignore"):
            return np.where(
                arg > 0.0,
                (0.5 * np.log(np.where(arg > 0.0, arg, 1.0) / coeff)
                 + sigma_x_sq) / sx,
                empty)

    z_star = z_of(base, -np.inf)
    mass = np.where(base > 0.0, ndtr(np.negative(z_star)), 1.0)
    xg, wg = np.polynomial.legendre.leggauss(n_panel)

    def panel(z_a, z_b, sign):
        z_a = np.maximum(z_a, -_LAYER_ZMAX)
        z_b = np.minimum(z_b, _LAYER_ZMAX)
        span = np.maximum(z_b - z_a, 0.0)
        z = z_a[..., None] + (xg + 1.0) * 0.5 * span[..., None]
        t = base[..., None] - coeff * np.exp(2.0 * (sx * z - sigma_x_sq))
        q = ndtr(-np.abs(t))
        phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        return sign * np.sum(wg * q * phi, axis=-1) * 0.5 * span

    layer = (panel(z_of(base - _LAYER_WINDOW, -np.inf), z_star, 1.0)
             + panel(z_star, z_of(base + _LAYER_WINDOW, -np.inf), -1.0))
    return np.clip(mass + layer, 0.0, 1.0)


def _expect_q_low(base, coeffs, sigmas, n_nodes, mc_draws, seed):
    """E[Q(base - sum_i coeff_i h_i)] over independent log-normal fadings.

    The largest coefficient gets the step-split treatment; the remaining
    fadings ride an outer Gauss-Hermite product grid (Monte Carlo cloud
    past three), where the inner expectation is already smooth.
    """
    order = np.argsort(coeffs)[::-1]
    rest = order[1:]
    if len(rest) == 0:
        outer = np.zeros(1)
        wts = np.ones(1)
    elif len(rest) <= 3:
        outer = np.zeros(1)
        wts = np.ones(1)
        for i in rest:
            h, w = lognormal_fading_nodes(sigmas[i], n_nodes)
            outer = (outer[:, None] + coeffs[i] * h[None, :]).ravel()
            wts = (wts[:, None] * w[None, :]).ravel()
    else:
        rng = np.random.default_rng([seed, len(rest), 977])
        outer = np.zeros(mc_draws)
        for i in rest:
            s = sigmas[i]
            x = rng.normal(-s, math.sqrt(max(s, 0.0)), size=mc_draws)
            outer += coeffs[i] * np.exp(2.0 * x)
        wts = np.full(mc_draws, 1.0 / mc_draws)
    inner = _q_step_expectation(
        np.asarray(base, dtype=float)[:, None] - outer[None, :],
        coeffs[order[0]], sigmas[order[0]])
    return np.clip(inner @ wts, 0.0, 1.0)


def _enumerate_hit_groups(n_interferers, weight, p_hit, identical,
                          max_assignments):
    """Yield (log probability, per-chip interferer index groups).

    With identical interferers only the hit counts matter and the
    multinomial closed form covers all patterns; otherwise every
    assignment of interferers to chips (or a miss) is enumerated and
    collapsed by the multiset of per-chip groups.
    """
    p_miss = 1.0 - weight * p_hit
    if identical:
        for alpha in itertools.product(range(n_interferers + 1),
                                       repeat=weight):
            hits = sum(alpha)
            if hits > n_interferers:
                continue
            logp = (math.lgamma(n_interferers + 1)
                    - sum(math.lgamma(a + 1) for a in alpha)
                    - math.lgamma(n_interferers - hits + 1)
                    + hits * math.log(p_hit)
                    + (n_interferers - hits) * math.log(p_miss))
            groups = tuple(tuple(range(a)) for a in alpha)
            yield logp, groups
        return
    total = (weight + 1) ** n_interferers
    if total > max_assignments:
        raise ParameterError(
            "distinct-interferer enumeration needs "
            f"{total} assignments (cap {max_assignments}); use identical "
            "interferer parameters or fewer users")
    grouped: dict = {}
    for assign in itertools.product(range(weight + 1),
                                    repeat=n_interferers):
        hits = sum(1 for a in assign if a > 0)
        logp = (hits * math.log(p_hit)
                + (n_interferers - hits) * math.log(p_miss))
        groups = tuple(
            tuple(i for i, a in enumerate(assign) if a == q + 1)
            for q in range(weight))
        key = tuple(sorted(groups))
        if key in grouped:
            grouped[key] = np.logaddexp(grouped[key], logp)
        else:
            grouped[key] = logp
    for key, logp in grouped.items():
        yield logp, key


# ----------------------------------------------------- relay averaging


def average_ber_relay(rx: ReceiverModel, chain: RelayChain, direction: str,
                      code_length: int, code_weight: int, n_users: int,
                      interferer_losses=None, interferer_sigma_x_sq=None,
                      n_nodes: int = 20, beta_nodes: int = 14,
                      beta_mc_draws: int = 4096, seed: int = 0,
                      max_assignments: int = 300_000,
                      pattern_mass: float = 1.0 - 1e-9,
                      return_log: bool = False) -> float:
    """Average BER of a relayed OCDMA link over fading and interference.

    Uplink transmissions see MAI on the first hop only; the synchronous
    downlink is interference free provided M < F / W^2 + 1, which is
    enforced here.  Set return_log to get ln(BER), which stays exact far
    below the smallest positive float.
    """
    if direction not in ("uplink", "downlink"):
        raise ParameterError("direction must be 'uplink' or 'downlink'")
    if code_weight < 1 or code_length <= code_weight:
        raise ParameterError("need 1 <= weight < length")
    if n_users < 1:
        raise ParameterError("n_users must be >= 1")

    # per-hop fading grids; hop i lives on grid axis i
    n_hops = chain.n_hops
    scale = rx.chip_amplitude / (2.0 * rx.noise_std_chip)
    hop_h, hop_w = zip(*(lognormal_fading_nodes(s, n_nodes)
                         for s in chain.hop_sigma_x_sq))

    def _spread(vec, axis):
        shape = [1] * n_hops
        shape[axis] = vec.size
        return vec.reshape(shape)

    log_weight_grid = sum(_spread(np.log(w), i) for i, w in enumerate(hop_w))
    # hops past the first are MAI free in both directions
    rest_logp = [_spread(log_q_function(scale * h * loss), i)
                 for i, (h, loss) in enumerate(
                     zip(hop_h[1:], chain.hop_losses[1:]), start=1)]

    if direction == "downlink":
        if n_users >= code_length / code_weight ** 2 + 1:
            raise ParameterError(
                "synchronous downlink needs M < F / W^2 + 1 to cancel MAI "
                f"(M={n_users}, F={code_length}, W={code_weight})")
        n_int = 0
        interferer_losses, interferer_sigma_x_sq = [], []
        p_hit = 0.0
    else:
        n_int = n_users - 1
        if interferer_losses is None:
            interferer_losses = [chain.hop_losses[0]] * n_int
        if interferer_sigma_x_sq is None:
            interferer_sigma_x_sq = [chain.hop_sigma_x_sq[0]] * n_int
        interferer_losses = [float(v) for v in interferer_losses]
        interferer_sigma_x_sq = [float(v) for v in interferer_sigma_x_sq]
        if len(interferer_losses) != n_int or \
                len(interferer_sigma_x_sq) != n_int:
            raise ParameterError(
                "need one loss and fading entry per interferer")
        p_hit = interferer_hit_probability(code_length, code_weight)
    identical = (len(set(interferer_losses)) <= 1
                 and len(set(interferer_sigma_x_sq)) <= 1)

    base = scale * chain.hop_losses[0] * hop_h[0]

    # per distinct hit group: log E_beta of the first-hop CER pair on the
    # first-hop axis, then the end-to-end chip CER grids; independence of
    # beta across chips lets its average slide inside the chip product
    group_cache: dict = {}

    def _group_e2e(group):
        if group not in group_cache:
            if group:
                losses_g = [interferer_losses[i] for i in group]
                sigmas_g = [interferer_sigma_x_sq[i] for i in group]
                beta, wts = _beta_nodes(
                    losses_g, sigmas_g, beta_nodes, beta_mc_draws, seed)
                shift = 2.0 * scale * beta[None, :]
                logw = np.log(wts)[None, :]
                # bit-0 false alarm: Q sharpens into an indicator of the
                # interference sum, so use the step-split expectation
                with np.errstate(divide="ignore"):
                    lp10 = np.log(_expect_q_low(
                        base, 2.0 * scale * np.asarray(losses_g),
                        np.asarray(sigmas_g), beta_nodes, beta_mc_draws,
                        seed))
                lp01 = logsumexp(log_q_function(base[:, None] + shift)
                                 + logw, axis=1)
            else:
                lp10 = lp01 = log_q_function(base)
            le2e10 = _log_union([_spread(lp10, 0)] + rest_logp)
            le2e01 = _log_union([_spread(lp01, 0)] + rest_logp)
            group_cache[group] = (le2e10, le2e01)
        return group_cache[group]

    if n_int == 0:
        patterns = [(0.0, tuple(() for _ in range(code_weight)))]
    else:
        patterns = sorted(_enumerate_hit_groups(
            n_int, code_weight, p_hit, identical, max_assignments),
            key=lambda item: -item[0])
        cum = np.cumsum(np.exp([lp for lp, _ in patterns]))
        keep = int(np.searchsorted(cum, pattern_mass)) + 1
        if keep < len(patterns):
            uncovered = 1.0 - float(cum[keep - 1])
            patterns = patterns[:keep]
            warnings.warn(
                f"interference patterns truncated; uncovered mass "
                f"{uncovered:.2e} bounds the BER error by {uncovered / 2:.2e}",
                UserWarning, stacklevel=2)
    total_parts = []
    for log_prob, groups in patterns:
        e2e_pairs = [_group_e2e(group) for group in groups]
        log_p10 = sum(pair[0] for pair in e2e_pairs)
        log_p01 = _log_union([pair[1] for pair in e2e_pairs])
        log_node = np.logaddexp(log_p10, log_p01) + LOG_HALF
        total_parts.append(log_prob + logsumexp(log_node + log_weight_grid))
    total = logsumexp(np.asarray(total_parts))
    return float(total) if return_log else float(np.exp(total))


# ------------------------------------------------------------ MIMO BER


def mimo_conditional_ber(cfg: MimoConfig, rx: ReceiverModel, bit: int,
                         fading: np.ndarray, history: np.ndarray) -> float:
    """Equal-gain combiner BER conditioned on fading and past bits.

    history holds the interfering bits b_k, most recent first, length
    l_max; the ISI term aids a one and hurts a zero.
    """
    if rx.noise_std_bit is None:
        raise ParameterError("MIMO formulas need noise_std_bit")
    if bit not in (0, 1):
        raise ParameterError("bit must be 0 or 1")
    h = np.asarray(fading, dtype=float)
    b = np.asarray(history, dtype=float)
    if h.shape != cfg.gamma_s.shape or b.shape != (cfg.l_max,):
        raise ParameterError("fading or history shape mismatch")
    signal = np.sum(h * cfg.gamma_s)
    isi = np.sum(h * np.tensordot(cfg.gamma_isi, 2.0 * b, axes=([2], [0])))
    sign = 1.0 if bit == 1 else -1.0
    denom = 2.0 * math.sqrt(cfg.n_rx) * rx.noise_std_bit
    return float(q_function((signal + sign * isi) / denom))


def mimo_average_ber(cfg: MimoConfig, rx: ReceiverModel,
                     n_nodes: int = 20, node_budget: int = 2_000_000,
                     mc_samples: int = 200_000, seed: int = 0) -> float:
    """BER averaged over the fading grid and all 2^l_max bit histories.

    Paths with zero ISI reduce to a single enumeration term, so the
    interference-free fast path is the same arithmetic with l_max = 0.
    Fading grids beyond node_budget points fall back to Monte Carlo
    fading draws and a warning reports the standard error.
    """
    if rx.noise_std_bit is None:
        raise ParameterError("MIMO formulas need noise_std_bit")
    n_paths = cfg.n_tx * cfg.n_rx
    sig = cfg.sigma_x_sq.ravel()
    mc_stderr = None
    if n_nodes ** n_paths <= node_budget:
        axes = [lognormal_fading_nodes(s, n_nodes) for s in sig]
        grids = np.meshgrid(*(h for h, _ in axes), indexing="ij")
        h_flat = np.stack([g.ravel() for g in grids], axis=1)
        logw = np.zeros(h_flat.shape[0])
        wgrids = np.meshgrid(*(np.log(w) for _, w in axes), indexing="ij")
        for g in wgrids:
            logw = logw + g.ravel()
        weights = np.exp(logw)
    else:
        rng = np.random.default_rng([seed, n_paths])
        x = rng.normal(-sig, np.sqrt(sig), size=(mc_samples, n_paths))
        h_flat = np.exp(2.0 * x)
        weights = np.full(mc_samples, 1.0 / mc_samples)

    gs = cfg.gamma_s.ravel()
    signal = h_flat @ gs
    denom = 2.0 * math.sqrt(cfg.n_rx) * rx.noise_std_bit
    l_max = cfg.l_max
    gi = cfg.gamma_isi.reshape(n_paths, l_max)
    acc = 0.0
    per_node = np.zeros_like(signal)
    for bits in itertools.product((0.0, 1.0), repeat=l_max):
        isi = h_flat @ (gi @ (2.0 * np.asarray(bits)))
        node = 0.5 * (q_function((signal - isi) / denom)
                      + q_function((signal + isi) / denom))
        per_node += node
        acc += float(np.sum(weights * node))
    n_seq = 2 ** l_max
    result = acc / n_seq
    if n_nodes ** n_paths > node_budget:
        per_node /= n_seq
        var = float(np.sum(weights * (per_node - result) ** 2))
        mc_stderr = math.sqrt(var / mc_samples)
        warnings.warn(
            f"fading grid over budget; MC average with stderr {mc_stderr:.2e}",
            UserWarning, stacklevel=2)
    return result


# ---------------------------------------------------- Monte Carlo oracle


def _mc_block(rx, chain, direction, code_weight, p_hit, losses, sigmas,
              n_bits, seed, block):
    rng = np.random.default_rng([seed, block])
    n_hops = chain.n_hops
    amp = rx.chip_amplitude
    bits = rng.integers(0, 2, size=n_bits)
    # one fading draw per hop per bit, shared by that bit's mark chips
    h = np.empty((n_bits, n_hops))
    for i, s in enumerate(chain.hop_sigma_x_sq):
        h[:, i] = np.exp(2.0 * rng.normal(-s, math.sqrt(s) if s > 0 else 0.0,
                                          size=n_bits))
    chips = np.repeat(bits[:, None], code_weight, axis=1).astype(float)
    level = amp * chain.hop_losses[0] * h[:, 0:1]
    y = level * chips
    if direction == "uplink" and losses:
        n_int = len(losses)
        # land each interferer on one mark chip or none, then weight by
        # its own loss and fading draw
        u = rng.random(size=(n_bits, n_int))
        target = np.floor(u / p_hit).astype(int)
        target[u >= code_weight * p_hit] = -1
        for n in range(n_int):
            s = sigmas[n]
            hi = np.exp(2.0 * rng.normal(
                -s, math.sqrt(s) if s > 0 else 0.0, size=n_bits))
            contrib = amp * losses[n] * hi
            hit = target[:, n] >= 0
            rows = np.nonzero(hit)[0]
            y[rows, target[rows, n]] += contrib[rows]
    y += rng.normal(0.0, rx.noise_std_chip, size=y.shape)
    detected = y > level / 2.0
    for i in range(1, n_hops):
        level = amp * chain.hop_losses[i] * h[:, i:i + 1]
        y = level * detected + rng.normal(0.0, rx.noise_std_chip,
                                          size=y.shape)
        detected = y > level / 2.0
    decided = detected.all(axis=1)
    return int(np.sum(decided != bits.astype(bool)))


def monte_carlo_ber(rx: ReceiverModel, chain: RelayChain, direction: str,
                    code_length: int, code_weight: int, n_users: int,
                    n_bits: int, interferer_losses=None,
                    interferer_sigma_x_sq=None, seed: int = 0,
                    block_size: int = 100_000, n_workers: int = 1):
    """Chip-level CDF relaying simulation; returns (BER, standard error).

    Only the mark chips are simulated since empty chips never influence
    the AND rule under the at-most-one-hit collision model.  Bits run in
    fixed blocks with per-block substreams, so the estimate does not
    depend on worker count.
    """
    if direction not in ("uplink", "downlink"):
        raise ParameterError("direction must be 'uplink' or 'downlink'")
    if n_bits < 1:
        raise ParameterError("n_bits must be >= 1")
    n_int = n_users - 1 if direction == "uplink" else 0
    losses = interferer_losses
    sigmas = interferer_sigma_x_sq
    p_hit = 0.0
    if direction == "uplink":
        if losses is None:
            losses = [chain.hop_losses[0]] * n_int
        if sigmas is None:
            sigmas = [chain.hop_sigma_x_sq[0]] * n_int
        losses = [float(v) for v in losses]
        sigmas = [float(v) for v in sigmas]
        if len(losses) != n_int or len(sigmas) != n_int:
            raise ParameterError(
                "need one loss and fading entry per interferer")
        p_hit = interferer_hit_probability(code_length, code_weight)
    else:
        losses, sigmas = [], []

    counts = [block_size] * (n_bits // block_size)
    if n_bits % block_size:
        counts.append(n_bits % block_size)

    def run(idx_count):
        idx, count = idx_count
        return _mc_block(rx, chain, direction, code_weight, p_hit, losses,
                         sigmas, count, seed, idx)

    jobs = list(enumerate(counts))
    if n_workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            errors = sum(pool.map(run, jobs))
    else:
        errors = sum(run(j) for j in jobs)
    est = errors / n_bits
    stderr = math.sqrt(max(est * (1.0 - est), 1e-300) / n_bits)
    return est, stderr
