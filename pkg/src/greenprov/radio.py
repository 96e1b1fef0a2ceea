"""Large-scale channel model, SINR and achievable downlink rates.

Gains cover path loss and a fixed shadowing margin only; fast fading is
averaged out at the provisioning timescale.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .scenario import BaseStation, Scenario


class CoverageError(ValueError):
    """Raised when some grid locations are not reachable by any BS."""

    def __init__(self, pixels):
        self.pixels = list(pixels)
        shown = ", ".join(str(p) for p in self.pixels[:20])
        more = "" if len(self.pixels) <= 20 else f" (+{len(self.pixels) - 20} more)"
        super().__init__(f"{len(self.pixels)} pixel(s) covered by no BS: {shown}{more}")


@dataclass(frozen=True)
class ChannelParams:
    """Channel model constants.

    Path loss is ``intercept + slope * log10(d / unit)`` with ``d`` in meters.
    The defaults reproduce the simulation table: macro distances in km, small
    cell distances in m.
    """

    macro_pl_intercept_db: float = 128.1
    macro_pl_slope_db: float = 37.6
    macro_distance_unit_m: float = 1000.0
    small_pl_intercept_db: float = 38.0
    small_pl_slope_db: float = 10.0
    small_distance_unit_m: float = 1.0
    shadowing_db: float = 5.0
    antenna_gain_db: float = 15.0
    noise_dbm_per_hz: float = -174.0
    receiver_sensitivity_dbm: float = -123.0
    # listed for completeness; fast fading is not modeled
    rayleigh_db: float = 9.0
    frequency_reuse: int = 1

    def __post_init__(self):
        if self.macro_pl_slope_db < 0 or self.small_pl_slope_db < 0:
            raise ValueError("path-loss slopes must be >= 0 (monotone in distance)")
        if self.macro_distance_unit_m <= 0 or self.small_distance_unit_m <= 0:
            raise ValueError("distance units must be > 0")
        if self.frequency_reuse != 1:
            raise ValueError("only frequency reuse 1 is supported")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelParams":
        return cls(**data)


def _kind_value(kind) -> str:
    return getattr(kind, "value", kind)


def path_loss(kind, distance, params: ChannelParams | None = None):
    """Path loss in dB for a ``"macro"`` or ``"small"`` BS at ``distance`` meters."""
    params = params or ChannelParams()
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("distance must be > 0")
    kind = _kind_value(kind)
    if kind == "macro":
        pl = params.macro_pl_intercept_db + params.macro_pl_slope_db * np.log10(
            d / params.macro_distance_unit_m)
    elif kind == "small":
        pl = params.small_pl_intercept_db + params.small_pl_slope_db * np.log10(
            d / params.small_distance_unit_m)
    else:
        raise ValueError(f"unknown BS kind {kind!r}")
    return float(pl) if pl.ndim == 0 else pl


def gain_db(kind, distance, params: ChannelParams | None = None):
    params = params or ChannelParams()
    return params.antenna_gain_db - path_loss(kind, distance, params) - params.shadowing_db


def channel_gain(bs: "BaseStation", location, params: ChannelParams | None = None,
                 min_distance: float = 0.0):
    """Linear power gain between ``bs`` and ``location`` (x, y) in meters."""
    loc = np.asarray(location, dtype=float)
    d = np.hypot(loc[..., 0] - bs.x, loc[..., 1] - bs.y)
    d = np.maximum(d, min_distance)
    return 10.0 ** (np.asarray(gain_db(bs.kind, d, params)) / 10.0)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def noise_power_dbm(params: ChannelParams, bandwidth: float) -> float:
    return params.noise_dbm_per_hz + 10.0 * math.log10(bandwidth)


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Per (BS, pixel) rate in bit/s, linear SINR and reachability mask."""

    rate: np.ndarray
    sinr: np.ndarray
    reachable: np.ndarray

    @property
    def n_bs(self) -> int:
        return self.rate.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.rate.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bs", "pixel", "sinr_db", "rate_bps"])
            sinr_db = 10.0 * np.log10(self.sinr)
            for j in range(self.n_bs):
                for x in range(self.n_pixels):
                    w.writerow([j, x, repr(float(sinr_db[j, x])), repr(float(self.rate[j, x]))])


def received_power_matrix(scenario: "Scenario") -> np.ndarray:
    """Received power in watts, shape (n_bs, n_pixels)."""
    centers = scenario.traffic.grid.centers()
    half_pixel = scenario.traffic.grid.pixel_size / 2.0
    params = scenario.channel
    rx = np.empty((len(scenario.base_stations), len(centers)))
    for j, bs in enumerate(scenario.base_stations):
        g = channel_gain(bs, centers, params, min_distance=half_pixel)
        rx[j] = dbm_to_watts(bs.tx_power_dbm) * g
    return rx


def compute_rate_matrix(scenario: "Scenario", check_coverage: bool = True) -> RateMatrix:
    rx = received_power_matrix(scenario)
    noise_w = float(dbm_to_watts(noise_power_dbm(scenario.channel, scenario.bandwidth)))
    total = rx.sum(axis=0)
    interference = total[None, :] - rx
    # guard tiny negative round-off from the subtraction
    interference = np.maximum(interference, 0.0)
    if rx.shape[0] == 1:
        interference = np.zeros_like(rx)
    sinr = rx / (noise_w + interference)
    sens_w = float(dbm_to_watts(scenario.channel.receiver_sensitivity_dbm))
    reachable = rx >= sens_w
    rate = np.where(reachable, scenario.bandwidth * np.log2(1.0 + sinr), 0.0)
    reachable &= rate > 0
    if check_coverage:
        uncovered = np.flatnonzero(~reachable.any(axis=0))
        if uncovered.size:
            raise CoverageError(uncovered.tolist())
    for arr in (rate, sinr, reachable):
        arr.setflags(write=False)
    return RateMatrix(rate=rate, sinr=sinr, reachable=reachable)
