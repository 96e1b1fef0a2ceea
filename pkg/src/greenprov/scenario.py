"""Problem instance data model, synthetic generator and scenario files.

Array layout: per-slot traffic arrays are ``(n_slots, n_pixels)``; pixels are
numbered row-major (``iy * nx + ix``) with centers at
``((ix + 0.5) * pixel_size, (iy + 0.5) * pixel_size)``. Solar arrays are
``(n_macro, n_slots)`` in macro order.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .radio import ChannelParams, noise_power_dbm

FORMAT_VERSION = 1


class ScenarioError(ValueError):
    """Invalid scenario file or instance."""


class BSKind(str, Enum):
    MACRO = "macro"
    SMALL = "small"


@dataclass(frozen=True)
class BaseStation:
    id: int
    kind: BSKind
    x: float
    y: float
    tx_power_dbm: float
    static_power: float = 0.0
    load_power_coeff: float = 0.0
    cost_weight: float = 0.0
    theta2_half: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BSKind(self.kind))

    @property
    def is_macro(self) -> bool:
        return self.kind is BSKind.MACRO

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["kind"] = self.kind.value
        return d


def _frozen_array(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    pixel_size: float

    @property
    def n_pixels(self) -> int:
        return self.nx * self.ny

    def centers(self) -> np.ndarray:
        ix = np.arange(self.nx)
        iy = np.arange(self.ny)
        xx, yy = np.meshgrid((ix + 0.5) * self.pixel_size, (iy + 0.5) * self.pixel_size)
        return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass(frozen=True, eq=False)
class TrafficField:
    """Arrival rate (arrivals/s per pixel) and mean demand (bits per arrival)."""

    grid: Grid
    arrival_rate: np.ndarray
    mean_demand: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "arrival_rate", _frozen_array(self.arrival_rate))
        object.__setattr__(self, "mean_demand", _frozen_array(self.mean_demand))

    @property
    def n_slots(self) -> int:
        return self.arrival_rate.shape[0]

    def offered_bps(self, slot: int) -> np.ndarray:
        """Offered traffic in bit/s per pixel for a 0-based slot index."""
        return self.arrival_rate[slot] * self.mean_demand[slot]

    def __eq__(self, other):
        return (isinstance(other, TrafficField) and self.grid == other.grid
                and np.array_equal(self.arrival_rate, other.arrival_rate)
                and np.array_equal(self.mean_demand, other.mean_demand))


@dataclass(frozen=True, eq=False)
class SolarProfile:
    """Green generation per m² of panel, watts, per macro BS and slot."""

    e: np.ndarray
    slot_duration: float = 1800.0
    shared: bool = True

    def __post_init__(self):
        e = np.atleast_2d(np.array(self.e, dtype=float))
        object.__setattr__(self, "e", _frozen_array(e))

    @property
    def n_slots(self) -> int:
        return self.e.shape[1]

    def zero_slots(self, row: int = 0) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.e[row] == 0)]

    def __eq__(self, other):
        return (isinstance(other, SolarProfile) and self.slot_duration == other.slot_duration
                and self.shared == other.shared and np.array_equal(self.e, other.e))


@dataclass(frozen=True, eq=False)
class Scenario:
    base_stations: tuple
    traffic: TrafficField
    solar: SolarProfile
    alpha: np.ndarray
    zeta: float = 2.0
    epsilon_load: float = 0.01
    bandwidth: float = 10e6
    phi_s: float = 0.9
    phi_b: float = 0.2
    channel: ChannelParams = field(default_factory=ChannelParams)
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "base_stations", tuple(self.base_stations))
        object.__setattr__(self, "alpha", _frozen_array(np.atleast_1d(self.alpha)))

    @property
    def n_slots(self) -> int:
        return self.traffic.n_slots

    @property
    def n_bs(self) -> int:
        return len(self.base_stations)

    @property
    def macro_indices(self) -> list[int]:
        return [j for j, bs in enumerate(self.base_stations) if bs.is_macro]

    @property
    def noise_power_dbm(self) -> float:
        return noise_power_dbm(self.channel, self.bandwidth)

    def solar_row(self, j: int) -> np.ndarray:
        """Solar series for BS index ``j`` (must be a macro)."""
        row = self.macro_indices.index(j)
        return self.solar.e[min(row, self.solar.e.shape[0] - 1)] if self.solar.shared \
            else self.solar.e[row]

    def with_params(self, **kw) -> "Scenario":
        if "alpha" in kw and np.ndim(kw["alpha"]) == 0:
            kw["alpha"] = np.full(self.n_slots, float(kw["alpha"]))
        return replace(self, **kw)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.base_stations == other.base_stations and self.traffic == other.traffic
                and self.solar == other.solar and np.array_equal(self.alpha, other.alpha)
                and self.zeta == other.zeta and self.epsilon_load == other.epsilon_load
                and self.bandwidth == other.bandwidth and self.phi_s == other.phi_s
                and self.phi_b == other.phi_b and self.channel == other.channel
                and self.rng_seed == other.rng_seed)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

def validate(scenario: Scenario) -> list[str]:
    """Return the list of invariant violations; empty when the scenario is valid."""
    v: list[str] = []
    bss = scenario.base_stations
    if not any(bs.is_macro for bs in bss):
        v.append("scenario must contain at least one macro BS")
    for j, bs in enumerate(bss):
        name = f"base_stations[{j}] (id={bs.id})"
        if not math.isfinite(bs.tx_power_dbm):
            v.append(f"{name}: tx_power_dbm must be finite")
        if not bs.static_power >= 0:
            v.append(f"{name}: static_power must be >= 0")
        if not bs.load_power_coeff >= 0:
            v.append(f"{name}: load_power_coeff must be >= 0")
        if not bs.cost_weight >= 0:
            v.append(f"{name}: cost_weight must be >= 0")
        if bs.kind is BSKind.SMALL and bs.cost_weight != 0:
            v.append(f"{name}: small BS cost_weight must be 0, got {bs.cost_weight}")
        if not bs.theta2_half > 0:
            v.append(f"{name}: theta2_half must be > 0")
    ids = [bs.id for bs in bss]
    if len(set(ids)) != len(ids):
        v.append("base station ids must be unique")

    n = scenario.n_slots
    if n < 1:
        v.append("n_slots must be >= 1")
    tr = scenario.traffic
    shape = (n, tr.grid.n_pixels)
    if tr.grid.n_pixels < 1:
        v.append("grid must have at least one pixel")
    if not tr.grid.pixel_size > 0:
        v.append("grid.pixel_size must be > 0")
    for nm in ("arrival_rate", "mean_demand"):
        arr = getattr(tr, nm)
        if arr.shape != shape:
            v.append(f"traffic.{nm} shape {arr.shape} != (n_slots, n_pixels) {shape}")
        elif not np.all(np.isfinite(arr)) or np.any(arr < 0):
            bad = np.argwhere(~(arr >= 0) | ~np.isfinite(arr))[0]
            v.append(f"traffic.{nm} must be finite and >= 0 (slot {bad[0]}, pixel {bad[1]})")

    e = scenario.solar.e
    n_macro = len(scenario.macro_indices)
    if e.shape[1] != n:
        v.append(f"solar series has {e.shape[1]} slots, traffic has {n}")
    if not scenario.solar.shared and e.shape[0] != n_macro:
        v.append(f"solar has {e.shape[0]} rows for {n_macro} macro BSs")
    bad = np.argwhere(~(e >= 0) | ~np.isfinite(e))
    for row, k in bad[:10]:
        v.append(f"solar e[{row}][slot {k}] must be finite and >= 0, got {e[row, k]}")
    if scenario.solar.shared and e.shape[0] > 1 and not np.all(e == e[0]):
        v.append("solar rows must be identical when shared geolocation is set")
    if not scenario.solar.slot_duration > 0:
        v.append("solar.slot_duration must be > 0")

    a = scenario.alpha
    if a.shape != (n,):
        v.append(f"alpha has {a.size} entries, expected {n}")
    for k in np.flatnonzero(~((a >= 0) & (a <= 1))):
        v.append(f"alpha[slot {k}] = {a[k]} must be in [0, 1]")
    if not scenario.zeta > 0:
        v.append("zeta must be > 0")
    if not 0 < scenario.epsilon_load < 1:
        v.append("epsilon_load must be in (0, 1)")
    if not scenario.bandwidth > 0:
        v.append("bandwidth must be > 0")
    if not scenario.phi_s >= 0 or not scenario.phi_b >= 0:
        v.append("phi_s and phi_b must be >= 0")
    return v


def check(scenario: Scenario) -> Scenario:
    problems = validate(scenario)
    if problems:
        raise ScenarioError("; ".join(problems))
    return scenario


# --------------------------------------------------------------------------
# synthetic generation
# --------------------------------------------------------------------------

# Relative traffic intensity by hour of day, linearly interpolated: quiet
# 02:00-06:00, evening peak 19:00-22:00.
DEFAULT_DIURNAL = (
    (0.0, 0.45), (2.0, 0.2), (6.0, 0.2), (9.0, 0.55), (12.0, 0.7),
    (17.0, 0.75), (19.0, 1.0), (22.0, 1.0), (24.0, 0.45),
)


def generator_channel() -> ChannelParams:
    # The tabulated small-cell slope (10 dB/decade) lets small cells out-shout
    # macros by ~50 dB everywhere; generated scenarios use 30 dB/decade.
    return ChannelParams(small_pl_slope_db=30.0)


@dataclass(frozen=True)
class GeneratorConfig:
    width: float = 2000.0
    height: float = 2000.0
    pixel_size: float = 50.0
    n_macro: int = 5
    n_small: int = 15
    n_slots: int = 48
    start_hour: float = 7.0
    macro_tx_dbm: float = 43.0
    small_tx_dbm: float = 33.0
    static_power: float = 750.0
    load_power_coeff: float = 500.0
    bandwidth: float = 10e6
    cost_weight_range: tuple = (0.5, 1.5)
    theta2_half: float = 1.0
    # traffic
    peak_traffic_bps: float = 80e6
    mean_demand_bits: float = 1e6
    hotspot_share: float = 0.6
    hotspot_sigma: float = 120.0
    n_hotspots: int | None = None
    diurnal: tuple = DEFAULT_DIURNAL
    # solar
    solar_peak_w_per_m2: float = 200.0
    sunrise_hour: float = 7.0
    sunset_hour: float = 19.0
    solar_peak_hour: float = 13.0
    # economics / QoS
    alpha: float = 1.0
    zeta: float = 2.0
    epsilon_load: float = 0.01
    phi_s: float = 0.9
    phi_b: float = 0.2
    channel: ChannelParams = field(default_factory=generator_channel)
    seed: int = 0

    def problems(self) -> list[str]:
        p = []
        if self.n_macro < 1:
            p.append("n_macro must be >= 1")
        if self.n_small < 0:
            p.append("n_small must be >= 0")
        if self.n_slots < 1:
            p.append("n_slots must be >= 1")
        if not (self.width > 0 and self.height > 0 and self.pixel_size > 0):
            p.append("width, height and pixel_size must be > 0")
        elif int(round(self.width / self.pixel_size)) < 1 or \
                int(round(self.height / self.pixel_size)) < 1:
            p.append("grid must contain at least one pixel (pixel_size too large)")
        for nm in ("peak_traffic_bps", "mean_demand_bits", "solar_peak_w_per_m2",
                   "static_power", "load_power_coeff"):
            if not getattr(self, nm) >= 0:
                p.append(f"{nm} must be >= 0")
        if self.mean_demand_bits == 0 and self.peak_traffic_bps > 0:
            p.append("mean_demand_bits must be > 0 when traffic is nonzero")
        lo, hi = self.cost_weight_range
        if not 0 <= lo <= hi:
            p.append("cost_weight_range must satisfy 0 <= low <= high")
        if not 0 < self.hotspot_share <= 1 and self.hotspot_share != 0:
            p.append("hotspot_share must be in [0, 1]")
        if not 0 <= self.alpha <= 1:
            p.append("alpha must be in [0, 1]")
        if not self.zeta > 0:
            p.append("zeta must be > 0")
        if not 0 < self.epsilon_load < 1:
            p.append("epsilon_load must be in (0, 1)")
        if any(level < 0 for _, level in self.diurnal):
            p.append("diurnal levels must be >= 0")
        return p


def diurnal_level(hours, curve=DEFAULT_DIURNAL) -> np.ndarray:
    xs = [h for h, _ in curve]
    ys = [v for _, v in curve]
    return np.interp(np.mod(hours, 24.0), xs, ys)


def solar_curve(hours, peak: float, sunrise: float = 7.0, sunset: float = 19.0,
                peak_hour: float = 13.0) -> np.ndarray:
    """Bell-shaped generation, zero outside [sunrise, sunset]."""
    h = np.mod(np.asarray(hours, dtype=float), 24.0)
    out = np.zeros_like(h)
    am = (h > sunrise) & (h <= peak_hour)
    pm = (h > peak_hour) & (h < sunset)
    out[am] = np.sin(0.5 * np.pi * (h[am] - sunrise) / (peak_hour - sunrise))
    out[pm] = np.sin(0.5 * np.pi * (sunset - h[pm]) / (sunset - peak_hour))
    return peak * out


def slot_midpoint_hours(cfg: GeneratorConfig) -> np.ndarray:
    slot_h = 24.0 / cfg.n_slots
    return cfg.start_hour + (np.arange(cfg.n_slots) + 0.5) * slot_h


def _macro_positions(cfg: GeneratorConfig, rng) -> np.ndarray:
    # one macro in the middle, the rest on a ring; jitter keeps them distinct
    cx, cy = cfg.width / 2, cfg.height / 2
    pos = [(cx, cy)]
    m = cfg.n_macro - 1
    radius = 0.3 * min(cfg.width, cfg.height) * math.sqrt(2)
    for i in range(m):
        ang = math.pi / 4 + 2 * math.pi * i / max(m, 1)
        pos.append((cx + radius * math.cos(ang), cy + radius * math.sin(ang)))
    pos = np.array(pos[:cfg.n_macro], dtype=float)
    pos += rng.uniform(-0.03, 0.03, size=pos.shape) * np.array([cfg.width, cfg.height])
    return np.clip(pos, 0.0, [cfg.width, cfg.height])


def generate_scenario(config: GeneratorConfig | None = None) -> Scenario:
    cfg = config or GeneratorConfig()
    problems = cfg.problems()
    if problems:
        raise ScenarioError("invalid generator config: " + "; ".join(problems))
    rng = np.random.default_rng(cfg.seed)
    nx = int(round(cfg.width / cfg.pixel_size))
    ny = int(round(cfg.height / cfg.pixel_size))
    grid = Grid(nx, ny, cfg.pixel_size)
    centers = grid.centers()

    macro_pos = _macro_positions(cfg, rng)
    lo, hi = cfg.cost_weight_range
    weights = rng.uniform(lo, hi, size=cfg.n_macro)
    n_hot = cfg.n_small if cfg.n_hotspots is None else cfg.n_hotspots
    margin = 0.1 * np.array([cfg.width, cfg.height])
    hot = rng.uniform(margin, np.array([cfg.width, cfg.height]) - margin, size=(n_hot, 2))
    # small cells sit near hotspots (round-robin when counts differ)
    small_pos = np.empty((cfg.n_small, 2))
    for i in range(cfg.n_small):
        base = hot[i % n_hot] if n_hot else rng.uniform(0, [cfg.width, cfg.height])
        small_pos[i] = base + rng.normal(0.0, cfg.hotspot_sigma / 3, size=2)
    small_pos = np.clip(small_pos, 0.0, [cfg.width, cfg.height])

    bss = []
    for i in range(cfg.n_macro):
        bss.append(BaseStation(
            id=len(bss), kind=BSKind.MACRO, x=float(macro_pos[i, 0]), y=float(macro_pos[i, 1]),
            tx_power_dbm=cfg.macro_tx_dbm, static_power=cfg.static_power,
            load_power_coeff=cfg.load_power_coeff, cost_weight=float(weights[i]),
            theta2_half=cfg.theta2_half))
    for i in range(cfg.n_small):
        bss.append(BaseStation(
            id=len(bss), kind=BSKind.SMALL, x=float(small_pos[i, 0]), y=float(small_pos[i, 1]),
            tx_power_dbm=cfg.small_tx_dbm, theta2_half=cfg.theta2_half))

    # spatial density: uniform floor plus gaussian hotspots
    density = np.full(grid.n_pixels, (1.0 - cfg.hotspot_share) / grid.n_pixels)
    if n_hot and cfg.hotspot_share > 0:
        bumps = np.zeros(grid.n_pixels)
        for h in hot:
            d2 = ((centers - h) ** 2).sum(axis=1)
            bump = np.exp(-d2 / (2 * cfg.hotspot_sigma ** 2))
            bump *= rng.uniform(0.5, 1.5)
            bumps += bump
        density += cfg.hotspot_share * bumps / bumps.sum()
    density /= density.sum()

    hours = slot_midpoint_hours(cfg)
    level = diurnal_level(hours, cfg.diurnal)
    offered = cfg.peak_traffic_bps * np.outer(level, density)
    mean_demand = np.full_like(offered, cfg.mean_demand_bits)
    with np.errstate(divide="ignore", invalid="ignore"):
        arrival = np.where(mean_demand > 0, offered / mean_demand, 0.0)
    traffic = TrafficField(grid, arrival, mean_demand)

    e = solar_curve(hours, cfg.solar_peak_w_per_m2, cfg.sunrise_hour, cfg.sunset_hour,
                    cfg.solar_peak_hour)
    solar = SolarProfile(np.tile(e, (cfg.n_macro, 1)), slot_duration=86400.0 / cfg.n_slots,
                         shared=True)
    sc = Scenario(
        base_stations=tuple(bss), traffic=traffic, solar=solar,
        alpha=np.full(cfg.n_slots, cfg.alpha), zeta=cfg.zeta, epsilon_load=cfg.epsilon_load,
        bandwidth=cfg.bandwidth, phi_s=cfg.phi_s, phi_b=cfg.phi_b, channel=cfg.channel,
        rng_seed=cfg.seed)
    return check(sc)


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------

def scenario_to_dict(s: Scenario) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "rng_seed": s.rng_seed,
        "zeta": s.zeta,
        "epsilon_load": s.epsilon_load,
        "bandwidth": s.bandwidth,
        "phi_s": s.phi_s,
        "phi_b": s.phi_b,
        "alpha": s.alpha.tolist(),
        "channel": s.channel.to_dict(),
        "base_stations": [bs.to_dict() for bs in s.base_stations],
        "grid": {"nx": s.traffic.grid.nx, "ny": s.traffic.grid.ny,
                 "pixel_size": s.traffic.grid.pixel_size},
        "traffic": {"arrival_rate": s.traffic.arrival_rate.tolist(),
                    "mean_demand": s.traffic.mean_demand.tolist()},
        "solar": {"slot_duration": s.solar.slot_duration, "shared": s.solar.shared,
                  "e": s.solar.e.tolist()},
    }


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def dumps_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=1, sort_keys=True) + "\n"


def save_scenario(s: Scenario, path, csv_series: bool = False) -> None:
    """Write ``s`` as JSON; with ``csv_series`` the traffic and solar series go
    to sibling CSV files referenced from the JSON."""
    path = Path(path)
    if not csv_series:
        atomic_write_text(path, dumps_scenario(s))
        return
    d = scenario_to_dict(s)
    stem = path.stem
    traffic_csv = path.with_name(f"{stem}_traffic.csv")
    solar_csv = path.with_name(f"{stem}_solar.csv")
    write_traffic_csv(s.traffic, traffic_csv)
    write_solar_csv(s.solar, solar_csv)
    d["traffic"] = {"csv": traffic_csv.name}
    d["solar"] = {"slot_duration": s.solar.slot_duration, "shared": s.solar.shared,
                  "csv": solar_csv.name, "rows": int(s.solar.e.shape[0])}
    atomic_write_text(path, json.dumps(d, indent=1, sort_keys=True) + "\n")


def write_traffic_csv(tr: TrafficField, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "pixel_index", "arrival_rate", "mean_demand"])
        for k in range(tr.n_slots):
            for x in range(tr.grid.n_pixels):
                w.writerow([k + 1, x, repr(float(tr.arrival_rate[k, x])),
                            repr(float(tr.mean_demand[k, x]))])


def write_solar_csv(solar: SolarProfile, path) -> None:
    # shared profiles store one series; otherwise one column per macro
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if solar.shared:
            w.writerow(["slot", "value"])
            for k in range(solar.n_slots):
                w.writerow([k + 1, repr(float(solar.e[0, k]))])
        else:
            w.writerow(["slot"] + [f"value_{i}" for i in range(solar.e.shape[0])])
            for k in range(solar.n_slots):
                w.writerow([k + 1] + [repr(float(v)) for v in solar.e[:, k]])


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ScenarioError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def read_solar_csv(path, n_rows: int = 1) -> np.ndarray:
    header, rows = _read_csv(path)
    if header[0] != "slot" or len(header) < 2:
        raise ScenarioError(f"{path}: expected header 'slot,value'")
    vals = []
    for lineno, r in enumerate(rows, start=2):
        try:
            slot = int(r[0])
            vals.append([float(v) for v in r[1:]])
        except (ValueError, IndexError) as exc:
            raise ScenarioError(f"{path}:{lineno}: cannot parse row {r!r}") from exc
        if slot != len(vals):
            raise ScenarioError(f"{path}:{lineno}: slots must be consecutive from 1")
    e = np.array(vals, dtype=float).T
    if e.shape[0] == 1 and n_rows > 1:
        e = np.tile(e, (n_rows, 1))
    return e


def read_traffic_csv(path, n_pixels: int) -> tuple[np.ndarray, np.ndarray]:
    header, rows = _read_csv(path)
    if header != ["slot", "pixel_index", "arrival_rate", "mean_demand"]:
        raise ScenarioError(f"{path}: expected header slot,pixel_index,arrival_rate,mean_demand")
    n_slots = 0
    parsed = []
    for lineno, r in enumerate(rows, start=2):
        try:
            k, x, lam, nu = int(r[0]), int(r[1]), float(r[2]), float(r[3])
        except (ValueError, IndexError) as exc:
            raise ScenarioError(f"{path}:{lineno}: cannot parse row {r!r}") from exc
        if not (1 <= k and 0 <= x < n_pixels):
            raise ScenarioError(f"{path}:{lineno}: slot/pixel out of range")
        n_slots = max(n_slots, k)
        parsed.append((k - 1, x, lam, nu))
    lam_a = np.zeros((n_slots, n_pixels))
    nu_a = np.zeros((n_slots, n_pixels))
    for k, x, lam, nu in parsed:
        lam_a[k, x] = lam
        nu_a[k, x] = nu
    return lam_a, nu_a


def scenario_from_dict(d: dict, base_dir: Path | None = None) -> Scenario:
    base_dir = Path(base_dir or ".")
    try:
        grid = Grid(int(d["grid"]["nx"]), int(d["grid"]["ny"]), float(d["grid"]["pixel_size"]))
        bss = tuple(BaseStation(**bs) for bs in d["base_stations"])
        tr = d["traffic"]
        if "csv" in tr:
            lam, nu = read_traffic_csv(base_dir / tr["csv"], grid.n_pixels)
        else:
            lam, nu = tr["arrival_rate"], tr["mean_demand"]
        so = d["solar"]
        n_macro = sum(1 for bs in bss if bs.is_macro)
        if "csv" in so:
            e = read_solar_csv(base_dir / so["csv"], int(so.get("rows", n_macro)))
        else:
            e = so["e"]
        lam = np.array(lam, dtype=float)
        if lam.ndim != 2:
            raise ScenarioError("traffic.arrival_rate must be a 2-D array (slots x pixels)")
        e = np.atleast_2d(np.array(e, dtype=float))
        if e.shape[1] != lam.shape[0]:
            raise ScenarioError(
                f"slot-count mismatch: traffic has {lam.shape[0]} slots, solar has {e.shape[1]}")
        alpha = d.get("alpha", 1.0)
        if np.ndim(alpha) == 0:
            alpha = np.full(lam.shape[0], float(alpha))
        sc = Scenario(
            base_stations=bss,
            traffic=TrafficField(grid, lam, np.array(nu, dtype=float)),
            solar=SolarProfile(e, float(so.get("slot_duration", 1800.0)),
                               bool(so.get("shared", True))),
            alpha=np.array(alpha, dtype=float),
            zeta=float(d["zeta"]),
            epsilon_load=float(d.get("epsilon_load", 0.01)),
            bandwidth=float(d.get("bandwidth", 10e6)),
            phi_s=float(d.get("phi_s", 0.9)),
            phi_b=float(d.get("phi_b", 0.2)),
            channel=ChannelParams.from_dict(d.get("channel", {})),
            rng_seed=int(d.get("rng_seed", 0)),
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario field: {exc!r}") from exc
    return check(sc)


def loads_scenario(text: str, base_dir=None, source: str = "<string>") -> Scenario:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(d, base_dir)


def load_scenario(path) -> Scenario:
    path = Path(path)
    return loads_scenario(path.read_text(), path.parent, str(path))
