"""Experiment orchestration: scenario files in, CSV sweeps out.

A scenario is a JSON object carrying an experiment ``kind`` plus the
physical and sweep parameters of that experiment.  ``validate`` returns a
list of human-readable diagnostics instead of raising, so a front end can
report every violated constraint at once; the run_* functions assume a
scenario that validates cleanly.

Column order is part of the contract and never changes silently:

    relay-ber      power_dbm, direction, n_relays, ber_analytic, ber_mc,
                   mc_stderr
    localization   trial, true_x, true_y, est_x, est_y, err_m, n_anchors,
                   method
    mimo-ber       power_dbm, n_tx, sigma_x_sq, ber
    power-control  target_ber, n_rings, avg_power_per_bit_dbm

Every run is reproducible bit for bit from (scenario file, seed): sweep
points and trials run on private seed streams derived from the scenario
seed and the point index, so the worker count never changes the output.
The power axis is the average transmitted power per bit of one
transmitting node, in dBm, across all experiment kinds.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .ber import (ReceiverModel, RelayChain, MimoConfig, average_ber_relay,
                  chip_power_from_average, mimo_average_ber, monte_carlo_ber)
from .channel import (LinkGeometry, beer_loss, isi_integrals,
                      simulate_impulse_response, water_from_label,
                      WATER_TYPES)
from .errors import ParameterError
from .locate import (AnchorSet, averaged_rss, estimate_distance,
                     fit_distance_polynomial, lls_position, rss_signal)
from .ooc import johnson_bound
from .power import (allocate_ring_powers, average_power_per_bit,
                    dbm_to_watts, make_downlink_ber, optimal_ring_boundaries,
                    watts_to_dbm)

KINDS = ("relay-ber", "localization", "mimo-ber", "power-control")

SCHEMAS = {
    "relay-ber": ("power_dbm", "direction", "n_relays", "ber_analytic",
                  "ber_mc", "mc_stderr"),
    "localization": ("trial", "true_x", "true_y", "est_x", "est_y",
                     "err_m", "n_anchors", "method"),
    "mimo-ber": ("power_dbm", "n_tx", "sigma_x_sq", "ber"),
    "power-control": ("target_ber", "n_rings", "avg_power_per_bit_dbm"),
}


@dataclass(frozen=True)
class Scenario:
    """One experiment: a kind, its parameters, and the master seed."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    name: str = ""

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=int(seed))


def load_scenario(path) -> Scenario:
    """Parse a scenario file; structural errors raise ParameterError."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ParameterError(f"{path}: top level must be an object")
    kind = raw.pop("kind", None)
    if not isinstance(kind, str):
        raise ParameterError(f"{path}: missing experiment 'kind'")
    seed = raw.pop("seed", 0)
    name = raw.pop("name", "")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ParameterError(f"{path}: seed must be a non-negative integer")
    return Scenario(kind=kind, params=raw, seed=seed, name=str(name))


# ------------------------------------------------------------ validation


def _num(p, key, diags, lo=None, hi=None, closed_lo=False):
    v = p.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool) \
            or not math.isfinite(v):
        diags.append(f"'{key}' must be a finite number")
        return None
    if lo is not None and (v < lo if closed_lo else v <= lo):
        op = "<" if closed_lo else "<="
        diags.append(f"'{key}' = {v:g} must not be {op} {lo:g}")
        return None
    if hi is not None and v > hi:
        diags.append(f"'{key}' = {v:g} must be <= {hi:g}")
        return None
    return v


def _int(p, key, diags, lo=None):
    v = _num(p, key, diags, lo=lo, closed_lo=True)
    if v is None:
        return None
    if v != int(v):
        diags.append(f"'{key}' = {v:g} must be an integer")
        return None
    return int(v)


def _water(p, diags):
    label = p.get("water")
    if label not in WATER_TYPES:
        known = ", ".join(sorted(WATER_TYPES))
        diags.append(f"unknown water type {label!r}; one of: {known}")
        return None
    return water_from_label(label)


def _grid_spec(p, key, diags):
    g = p.get(key)
    if not isinstance(g, dict):
        diags.append(f"'{key}' must be an object with start/stop/step")
        return None
    start = _num(g, "start", diags)
    stop = _num(g, "stop", diags)
    step = _num(g, "step", diags, lo=0.0)
    if None in (start, stop, step):
        return None
    if stop < start:
        diags.append(f"'{key}': stop {stop:g} precedes start {start:g}")
        return None
    return start, stop, step


def _grid_points(spec) -> list:
    start, stop, step = spec
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


def _ooc_block(p, diags):
    ooc = p.get("ooc")
    if not isinstance(ooc, dict):
        diags.append("'ooc' must be an object with length/weight/"
                     "correlation/n_users")
        return None
    F = _int(ooc, "length", diags, lo=2)
    W = _int(ooc, "weight", diags, lo=1)
    rho = _int(ooc, "correlation", diags, lo=1)
    M = _int(ooc, "n_users", diags, lo=1)
    if None in (F, W, rho, M):
        return None
    if W >= F:
        diags.append(f"code weight {W} must be below length {F}")
        return None
    if rho != 1:
        diags.append("the at-most-one-hit interference model needs "
                     f"correlation 1, got {rho}")
    bound = johnson_bound(F, W, rho)
    if M > bound:
        diags.append(f"{M} users exceed the ({F},{W},{rho}) family bound "
                     f"of {bound} codes")
    return F, W, rho, M

def _chip_rule(p, F, diags):
    rb = _num(p, "bit_rate_hz", diags, lo=0.0)
    tc = _num(p, "chip_time_s", diags, lo=0.0)
    if rb is None or tc is None or F is None:
        return rb, tc
    if abs(tc * rb * F - 1.0) > 1e-9:
        diags.append(f"chip time {tc:g} s breaks Tc = 1/(Rb*F) "
                     f"= {1.0 / (rb * F):g} s at Rb = {rb:g} Hz, F = {F}")
    return rb, tc


def _downlink_mai_rule(F, W, M, diags):
    if None in (F, W, M):
        return
    bound = F / W ** 2 + 1
    if M >= bound:
        diags.append(f"synchronous downlink despreading needs M < F/W^2 + 1 "
                     f"to cancel interference; M = {M}, F = {F}, W = {W} "
                     f"gives bound {bound:.2f}")


def _positions(p, key, diags, expect=None):
    pts = p.get(key)
    if not isinstance(pts, list) or not all(
            isinstance(q, (list, tuple)) and len(q) == 2
            and all(isinstance(c, (int, float)) and not isinstance(c, bool)
                    and math.isfinite(c) for c in q) for q in pts):
        diags.append(f"'{key}' must be a list of [x, y] pairs")
        return None
    if expect is not None and len(pts) != expect:
        diags.append(f"'{key}' holds {len(pts)} points, expected {expect}")
        return None
    return [(float(x), float(y)) for x, y in pts]


def _validate_relay_ber(p, diags):
    _water(p, diags)
    ooc = _ooc_block(p, diags)
    F = W = M = None
    if ooc is not None:
        F, W, _, M = ooc
    _chip_rule(p, F, diags)
    r0 = _num(p, "cell_radius_m", diags, lo=0.0)
    _num(p, "sigma_x_sq_cell_edge", diags, lo=0.0, closed_lo=True)
    _num(p, "responsivity", diags, lo=0.0)
    _num(p, "noise_std_chip", diags, lo=0.0)
    _int(p, "mc_bits", diags, lo=1)
    _grid_spec(p, "avg_power_dbm", diags)
    relays = p.get("n_relays")
    if not isinstance(relays, list) or not relays or not all(
            isinstance(n, int) and not isinstance(n, bool) and n >= 0
            for n in relays):
        diags.append("'n_relays' must be a non-empty list of counts >= 0")
    dirs = p.get("directions")
    if not isinstance(dirs, list) or not dirs or not set(dirs) <= {
            "uplink", "downlink"}:
        diags.append("'directions' must list 'uplink' and/or 'downlink'")
        dirs = []
    if "downlink" in dirs:
        _downlink_mai_rule(F, W, M, diags)
    if M is not None and "uplink" in dirs:
        pts = _positions(p, "interferer_positions", diags, expect=M - 1)
        if pts is not None and r0 is not None:
            for x, y in pts:
                if math.hypot(x - r0, y) < 1e-9 or math.hypot(x, y) < 1e-9:
                    diags.append("interferers must not sit on the user or "
                                 "the cell head")


def _validate_localization(p, diags):
    _water(p, diags)
    _num(p, "cell_radius_m", diags, lo=0.0)
    _num(p, "sigma_x_sq", diags, lo=0.0, closed_lo=True)
    _num(p, "avg_power_w", diags, lo=0.0)
    _num(p, "sample_time_s", diags, lo=0.0)
    _num(p, "responsivity", diags, lo=0.0)
    _num(p, "noise_std", diags, lo=0.0, closed_lo=True)
    _int(p, "n_samples", diags, lo=1)
    _int(p, "n_trials", diags, lo=1)
    anchors = _positions(p, "anchors", diags)
    sweep = p.get("n_anchors")
    if not isinstance(sweep, list) or not sweep or not all(
            isinstance(n, int) and not isinstance(n, bool) and n >= 3
            for n in sweep):
        diags.append("'n_anchors' must be a list of counts >= 3 "
                     "(position solves need three anchors)")
        return
    if anchors is None:
        return
    if max(sweep) > len(anchors):
        diags.append(f"'n_anchors' asks for {max(sweep)} anchors but only "
                     f"{len(anchors)} positions are listed")
        return
    for n in sorted(set(sweep)):
        try:
            AnchorSet(tuple(anchors[:n]))
        except Exception as exc:
            diags.append(f"first {n} anchors are unusable: {exc}")
    cal = p.get("calibration")
    if not isinstance(cal, dict):
        diags.append("'calibration' must be an object with degree/n_pairs/"
                     "min_m/max_m/max_range_m")
        return
    deg = _int(cal, "degree", diags, lo=1)
    pairs = _int(cal, "n_pairs", diags, lo=2)
    lo = _num(cal, "min_m", diags, lo=0.0)
    hi = _num(cal, "max_m", diags, lo=0.0)
    _num(cal, "max_range_m", diags, lo=0.0)
    if None not in (lo, hi) and hi <= lo:
        diags.append("calibration span must have max_m > min_m")
    if None not in (deg, pairs) and pairs < deg + 1:
        diags.append(f"{pairs} calibration pairs cannot fix a degree "
                     f"{deg} polynomial")


def _validate_mimo_ber(p, diags):
    _water(p, diags)
    _num(p, "range_m", diags, lo=0.0)
    rb = _num(p, "bit_rate_hz", diags, lo=0.0)
    _num(p, "responsivity", diags, lo=0.0)
    _num(p, "noise_std_bit", diags, lo=0.0)
    _num(p, "aperture_diameter_m", diags, lo=0.0)
    _num(p, "fov_deg", diags, lo=0.0, hi=180.0)
    _int(p, "isi_memory", diags, lo=0)
    _int(p, "bins_per_bit", diags, lo=1)
    _int(p, "n_photons", diags, lo=1)
    _int(p, "quad_nodes", diags, lo=2)
    _grid_spec(p, "avg_power_dbm", diags)
    ntx = p.get("n_tx")
    if not isinstance(ntx, list) or not ntx or not all(
            isinstance(n, int) and not isinstance(n, bool) and n >= 1
            for n in ntx):
        diags.append("'n_tx' must be a non-empty list of counts >= 1")
    sig = p.get("sigma_x_sq")
    if not isinstance(sig, list) or not sig or not all(
            isinstance(s, (int, float)) and not isinstance(s, bool)
            and 0 < s for s in sig):
        diags.append("'sigma_x_sq' must be a non-empty list of positive "
                     "fading strengths")


def _validate_power_control(p, diags):
    _water(p, diags)
    ooc = _ooc_block(p, diags)
    F = W = M = None
    if ooc is not None:
        F, W, _, M = ooc
    _chip_rule(p, F, diags)
    _downlink_mai_rule(F, W, M, diags)
    _num(p, "cell_radius_m", diags, lo=0.0)
    _num(p, "sigma_x_sq_cell_edge", diags, lo=0.0, closed_lo=True)
    _num(p, "responsivity", diags, lo=0.0)
    _num(p, "noise_std_chip", diags, lo=0.0)
    pmin = _num(p, "p_min_w", diags, lo=0.0)
    pmax = _num(p, "p_max_w", diags, lo=0.0)
    if None not in (pmin, pmax) and pmax <= pmin:
        diags.append("'p_max_w' must exceed 'p_min_w'")
    _num(p, "tol_db", diags, lo=0.0)
    _int(p, "boundary_grid", diags, lo=2)
    _int(p, "boundary_refine", diags, lo=0)
    _int(p, "quad_nodes", diags, lo=2)
    targets = p.get("target_bers")
    if not isinstance(targets, list) or not targets or not all(
            isinstance(t, (int, float)) and not isinstance(t, bool)
            and 0.0 < t < 0.5 for t in targets):
        diags.append("'target_bers' must be a non-empty list inside "
                     "(0, 0.5)")
    rings = p.get("n_rings")
    if not isinstance(rings, list) or not rings or not all(
            isinstance(n, int) and not isinstance(n, bool) and n >= 1
            for n in rings):
        diags.append("'n_rings' must be a non-empty list of counts >= 1")


_VALIDATORS = {
    "relay-ber": _validate_relay_ber,
    "localization": _validate_localization,
    "mimo-ber": _validate_mimo_ber,
    "power-control": _validate_power_control,
}


def validate(scenario: Scenario) -> list:
    """Check every cross-constraint; an empty list means the scenario
    is runnable.  Diagnostics name the violated constraint and the
    offending values."""
    if scenario.kind not in KINDS:
        return [f"unknown experiment kind {scenario.kind!r}; one of: "
                + ", ".join(KINDS)]
    diags: list = []
    _VALIDATORS[scenario.kind](scenario.params, diags)
    return diags


# --------------------------------------------------------------- running


def _pmap(fn, items, workers: int):
    """Order-preserving map; thread count never reorders results."""
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _point_seed(base: int, index: int) -> int:
    # disjoint per-point streams; the MC kernels sub-split internally
    return base * 1_000_003 + index


def run_relay_ber(scenario: Scenario, workers: int = 1) -> list:
    """BER vs power for serial relay chains, analytic plus chip-level MC.

    The user sits at the origin and the cell head at (r0, 0) with relays
    evenly spaced between them.  Uplink interferers transmit from fixed
    positions toward whichever node terminates the first hop, so their
    channel losses move with the relay count.  Fading strength scales
    linearly with hop length from zero to the stated cell-edge value.
    """
    p = scenario.params
    water = water_from_label(p["water"])
    F, W = p["ooc"]["length"], p["ooc"]["weight"]
    n_users = p["ooc"]["n_users"]
    tc = p["chip_time_s"]
    r0 = p["cell_radius_m"]
    sig_edge = p["sigma_x_sq_cell_edge"]
    resp = p["responsivity"]
    noise = p["noise_std_chip"]
    mc_bits = p["mc_bits"]
    interferers = [tuple(q) for q in p.get("interferer_positions", [])]
    grid = _grid_points(
        (p["avg_power_dbm"]["start"], p["avg_power_dbm"]["stop"],
         p["avg_power_dbm"]["step"]))
    points = [(direction, n, dbm)
              for direction in p["directions"]
              for n in p["n_relays"]
              for dbm in grid]

    def one(args):
        index, (direction, n_relays, dbm) = args
        hops = n_relays + 1
        hop_len = r0 / hops
        chain = RelayChain((beer_loss(water.extinction, hop_len),) * hops,
                           (sig_edge * hop_len / r0,) * hops)
        losses = sigmas = None
        if direction == "uplink":
            # MAI lands on the node closing the first hop
            rx_at = (hop_len, 0.0)
            dists = [math.hypot(x - rx_at[0], y - rx_at[1])
                     for x, y in interferers]
            losses = [beer_loss(water.extinction, d) for d in dists]
            sigmas = [sig_edge * d / r0 for d in dists]
        pc = chip_power_from_average(dbm_to_watts(dbm), F, W)
        rx = ReceiverModel(responsivity=resp, chip_power=pc, chip_time=tc,
                           noise_std_chip=noise)
        # fixed quadrature seed: the analytic curve must not move when the
        # scenario seed reshuffles the Monte Carlo cross-check
        analytic = average_ber_relay(
            rx, chain, direction, F, W, n_users,
            interferer_losses=losses, interferer_sigma_x_sq=sigmas,
            seed=0)
        mc, stderr = monte_carlo_ber(
            rx, chain, direction, F, W, n_users, n_bits=mc_bits,
            interferer_losses=losses, interferer_sigma_x_sq=sigmas,
            seed=_point_seed(scenario.seed, index))
        return (dbm, direction, n_relays, analytic, mc, stderr)

    return _pmap(one, list(enumerate(points)), workers)


def run_localization(scenario: Scenario, workers: int = 1) -> list:
    """Position-error trials of the RSS ranging plus LLS solve pipeline.

    One distance polynomial is fitted from noise-free calibration pairs
    and shared across trials; each trial drops a user uniformly in the
    disk, averages fading-corrupted RSS samples per anchor, inverts them
    to distances, and solves for position with the anchor prefix of the
    requested size.
    """
    p = scenario.params
    water = water_from_label(p["water"])
    r0 = p["cell_radius_m"]
    sig = p["sigma_x_sq"]
    avg_power = p["avg_power_w"]
    t_s = p["sample_time_s"]
    resp = p["responsivity"]
    noise_std = p["noise_std"]
    n_samples = p["n_samples"]
    n_trials = p["n_trials"]
    anchors_all = [tuple(q) for q in p["anchors"]]
    cal = p["calibration"]

    def loss(d):
        return beer_loss(water.extinction, d)

    cal_d = np.linspace(cal["min_m"], cal["max_m"], cal["n_pairs"])
    pairs = [(rss_signal(d, loss, resp, avg_power, t_s).signal, d)
             for d in cal_d]
    poly = fit_distance_polynomial(pairs, degree=cal["degree"],
                                   max_range=cal["max_range_m"])

    def group(n_anchors):
        aset = AnchorSet(tuple(anchors_all[:n_anchors]))
        rng = np.random.default_rng([scenario.seed, n_anchors])
        rows = []
        for trial in range(n_trials):
            radius = r0 * math.sqrt(rng.uniform())
            theta = rng.uniform(0.0, 2.0 * math.pi)
            true = (radius * math.cos(theta), radius * math.sin(theta))
            dists = []
            for ax, ay in aset.positions:
                d = math.hypot(true[0] - ax, true[1] - ay)
                obs = averaged_rss(d, loss, resp, avg_power, t_s, sig,
                                   noise_std=noise_std,
                                   n_samples=n_samples, rng=rng)
                dists.append(estimate_distance(obs, poly))
            est = lls_position(aset, dists)
            err = math.hypot(est.x - true[0], est.y - true[1])
            rows.append((trial, true[0], true[1], est.x, est.y, err,
                         n_anchors, "rss-lls"))
        return rows

    groups = _pmap(group, list(p["n_anchors"]), workers)
    return [row for rows in groups for row in rows]


def run_mimo_ber(scenario: Scenario, workers: int = 1) -> list:
    """BER vs per-transmitter power for equal-gain multi-transmitter links.

    One photon-transport run fixes the impulse response shared by all
    transmitters (they are equidistant from the receiver), per-bit-window
    integrals split it into signal and trailing interference terms, and
    the quadrature average runs per (fading strength, transmitter count,
    power) grid point.
    """
    p = scenario.params
    water = water_from_label(p["water"])
    rb = p["bit_rate_hz"]
    bit_time = 1.0 / rb
    bins = p["bins_per_bit"]
    memory = p["isi_memory"]
    resp = p["responsivity"]
    geometry = LinkGeometry(
        range_m=p["range_m"],
        aperture_diameter_m=p["aperture_diameter_m"],
        fov_rad=math.radians(p["fov_deg"]))
    response = simulate_impulse_response(
        water, geometry, p["n_photons"], seed=scenario.seed,
        bin_width=bit_time / bins, n_bins=bins * max(memory + 2, 64),
        n_workers=max(workers, 1))
    # per-watt window integrals; the pulse peak scales them per point
    unit = isi_integrals(np.ones(bins), response, bit_time, memory,
                         responsivity=resp)
    grid = _grid_points(
        (p["avg_power_dbm"]["start"], p["avg_power_dbm"]["stop"],
         p["avg_power_dbm"]["step"]))
    points = [(sig, nt, dbm)
              for sig in p["sigma_x_sq"]
              for nt in p["n_tx"]
              for dbm in grid]

    def one(args):
        sig, nt, dbm = args
        peak = 2.0 * dbm_to_watts(dbm)  # equiprobable on-off bits
        cfg = MimoConfig(
            sigma_x_sq=np.full((nt, 1), sig),
            gamma_s=np.full((nt, 1), peak * unit.signal),
            gamma_isi=np.tile(peak * unit.isi, (nt, 1, 1)))
        rx = ReceiverModel(responsivity=resp, chip_power=peak,
                           chip_time=bit_time,
                           noise_std_chip=p["noise_std_bit"],
                           noise_std_bit=p["noise_std_bit"])
        ber = mimo_average_ber(cfg, rx, n_nodes=p["quad_nodes"],
                               seed=scenario.seed)
        return (dbm, nt, sig, ber)

    return _pmap(one, points, workers)


def run_power_control(scenario: Scenario, workers: int = 1) -> list:
    """Average allocated power per bit vs target BER for ring feedback.

    Ring boundaries are re-optimized per target; a single ring reduces to
    uniform worst-case allocation at the cell edge.  Averages assume
    users uniform over the disk, so ring areas weight the powers.
    """
    p = scenario.params
    water = water_from_label(p["water"])
    r0 = p["cell_radius_m"]
    ber_at = make_downlink_ber(
        extinction=water.extinction, cell_radius=r0,
        sigma_max=p["sigma_x_sq_cell_edge"], code_length=p["ooc"]["length"],
        code_weight=p["ooc"]["weight"], n_users=p["ooc"]["n_users"],
        responsivity=p["responsivity"], chip_time=p["chip_time_s"],
        noise_std_chip=p["noise_std_chip"], n_nodes=p["quad_nodes"])
    pmax, pmin, tol = p["p_max_w"], p["p_min_w"], p["tol_db"]
    points = [(target, nr)
              for target in p["target_bers"]
              for nr in p["n_rings"]]

    def one(args):
        target, n_rings = args
        if n_rings == 1:
            bounds = (r0,)
        else:
            bounds = optimal_ring_boundaries(
                n_rings, r0, target, ber_at, p_max=pmax, p_min=pmin,
                tol_db=tol, grid=p["boundary_grid"],
                refine=p["boundary_refine"])
        plan = allocate_ring_powers(target, bounds, ber_at, p_max=pmax,
                                    p_min=pmin, tol_db=tol)
        return (target, n_rings, watts_to_dbm(average_power_per_bit(plan)))

    return _pmap(one, points, workers)


_RUNNERS = {
    "relay-ber": run_relay_ber,
    "localization": run_localization,
    "mimo-ber": run_mimo_ber,
    "power-control": run_power_control,
}


def run_scenario(scenario: Scenario, workers: int = 1):
    """Validate, run, and return (header, rows) for the scenario kind."""
    diags = validate(scenario)
    if diags:
        raise ParameterError("scenario does not validate: "
                             + "; ".join(diags))
    rows = _RUNNERS[scenario.kind](scenario, workers=workers)
    return SCHEMAS[scenario.kind], rows


def write_csv(path, header, rows) -> None:
    """Emit rows with repr-faithful floats so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v
