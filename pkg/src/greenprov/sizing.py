"""Solar panel and battery sizing for one macro BS.

Energy is counted in watt-slots: a demand of ``d`` watts in one slot uses
``d`` units of stored energy. Panel areas are integer m^2 and battery
capacities integer watt-slots, so costs are recomputable exactly from
``(S, B)``.

The battery follows the linear charge model with an empty start and a zero
floor; the demand entries are already scaled by the green fraction, and the
same scaled demand drains the battery.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

# relative slack on energy balances, absorbs float noise in demand sums
_TOL = 1e-9


class SizingError(ValueError):
    """The profile cannot be served by any panel/battery combination."""


@dataclass(frozen=True, eq=False)
class DemandProfile:
    demand: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.demand, dtype=float)
        e = np.asarray(self.e, dtype=float)
        if d.ndim != 1 or d.shape != e.shape:
            raise ValueError(f"demand and e must be 1-D of equal length, got {d.shape} and {e.shape}")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("demand must be finite and >= 0")
        if np.any(e < 0) or not np.all(np.isfinite(e)):
            raise ValueError("e must be finite and >= 0")
        object.__setattr__(self, "demand", d)
        object.__setattr__(self, "e", e)

    @property
    def n_slots(self) -> int:
        return self.demand.size

    @property
    def tol(self) -> float:
        return _TOL * max(1.0, float(self.demand.sum()))


@dataclass(frozen=True)
class Sizing:
    panel_area: int
    battery_capacity: int | None  # None marks an infeasible size
    cost: float
    weighted_cost: float
    weight: float = 1.0
    iterations: int = 0
    s_min: int | None = None
    s_max: int | None = None

    @property
    def feasible(self) -> bool:
        return self.battery_capacity is not None

    def to_dict(self) -> dict:
        return {
            "panel_m2": self.panel_area,
            "battery_wslot": self.battery_capacity,
            "cost": self.cost if self.feasible else None,
            "weighted_cost": self.weighted_cost if self.feasible else None,
            "weight": self.weight,
            "iterations": self.iterations,
            "s_min": self.s_min,
            "s_max": self.s_max,
        }


def cost(S: int, B: int | None, phi_s: float, phi_b: float) -> float:
    if B is None:
        return math.inf
    return phi_s * S + phi_b * B


def _sizing(S, B, phi_s, phi_b, weight=1.0, **kw) -> Sizing:
    f = cost(S, B, phi_s, phi_b)
    return Sizing(panel_area=int(S), battery_capacity=None if B is None else int(B), cost=f,
                  weighted_cost=weight * f if B is not None else math.inf, weight=weight, **kw)


def green_demand(bs, loads_per_slot, alpha, e) -> DemandProfile:
    """Green power needed by macro ``bs`` in each slot: ``alpha * (beta * rho + p_s)``."""
    rho = np.asarray(loads_per_slot, dtype=float)
    a = np.broadcast_to(np.asarray(alpha, dtype=float), rho.shape)
    demand = a * (bs.load_power_coeff * rho + bs.static_power)
    return DemandProfile(demand=demand, e=np.asarray(e, dtype=float))


def feasible_any_battery(S, profile: DemandProfile) -> bool:
    """With unlimited storage, every prefix of generation minus demand is >= 0."""
    net = np.cumsum(profile.e * S - profile.demand)
    return bool(np.all(net >= -profile.tol))


def simulate(S, B, profile: DemandProfile):
    """Run the charge model; returns ``(ok, levels)`` with ``levels[k]`` the
    energy stored after slot ``k`` (levels stop at the first shortfall)."""
    tol = profile.tol
    b = 0.0
    levels = []
    for ek, dk in zip(profile.e, profile.demand):
        avail = b + ek * S
        if avail < dk - tol:
            return False, levels
        b = min(max(avail - dk, 0.0), B)
        levels.append(b)
    return True, levels


def required_battery(S, profile: DemandProfile) -> int | None:
    """Smallest integer capacity that serves every slot, or None if none does."""
    if not feasible_any_battery(S, profile):
        return None
    lo, hi = 0, int(math.ceil(profile.demand.sum()))
    # capacity >= total demand never caps anything useful
    if not simulate(S, hi, profile)[0]:
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if simulate(S, mid, profile)[0]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def s_max(profile: DemandProfile) -> int:
    """Smallest panel covering every lit slot's demand on its own."""
    d, e = profile.demand, profile.e
    if not np.any(d > 0):
        return 0
    lit = e > 0
    if not lit.any():
        raise SizingError("no solar generation in any slot but demand is nonzero")
    return int(math.ceil(float(np.max(d[lit] / e[lit])) - _TOL))


def s_min(profile: DemandProfile) -> int:
    """Panel whose generation up to the last demanding slot equals the demand there."""
    d, e = profile.demand, profile.e
    pos = np.flatnonzero(d > 0)
    if pos.size == 0:
        return 0
    m = pos[-1]
    gen = float(e[: m + 1].sum())
    if gen <= 0:
        raise SizingError(f"no solar generation up to slot {m + 1}, the last slot with demand")
    return int(math.ceil(float(d[: m + 1].sum()) / gen - _TOL))


def s_feasible(profile: DemandProfile) -> int:
    """Smallest panel for which some battery works (all prefix balances >= 0)."""
    cd = np.cumsum(profile.demand)
    ce = np.cumsum(profile.e)
    need = cd > profile.tol
    if not need.any():
        return 0
    if np.any(need & (ce <= 0)):
        k = int(np.flatnonzero(need & (ce <= 0))[0])
        raise SizingError(f"demand in slot {k + 1} comes before any solar generation")
    S = int(math.ceil(float(np.max(cd[need] / ce[need])) - _TOL))
    # the tolerance-adjusted ceiling can land one short
    while not feasible_any_battery(S, profile):
        S += 1
    return S


def search_range(profile: DemandProfile) -> tuple[int, int]:
    """``(S_lo, S_hi)`` for the panel search.

    The lower end is the closed-form minimum. The upper end is the
    closed-form maximum, widened to the smallest feasible panel when that
    one is larger (the closed form can sit below every feasible size).
    """
    lo = s_min(profile)
    hi = max(s_max(profile), s_feasible(profile), lo)
    return lo, hi


def f_curve(profile: DemandProfile, phi_s: float, phi_b: float, lo: int, hi: int) -> list:
    return [(S, cost(S, required_battery(S, profile), phi_s, phi_b)) for S in range(lo, hi + 1)]


def bess(profile: DemandProfile, phi_s: float, phi_b: float, weight: float = 1.0) -> Sizing:
    """Binary search over the panel area for the cheapest panel/battery pair.

    The probe at ``tmp`` is kept when ``f(tmp) <= f(tmp - 1)`` (the curve is
    still falling) or ``tmp`` is infeasible; otherwise the upper end drops
    to ``tmp - 1``. The two ends of the range are checked as well, so the
    result is never worse than either.
    """
    lo, hi = search_range(profile)
    s0, s1 = lo, hi
    memo: dict[int, float] = {}

    def f(S):
        if S not in memo:
            memo[S] = cost(S, required_battery(S, profile), phi_s, phi_b)
        return memo[S]

    it = 0
    while lo != hi:
        it += 1
        tmp = math.ceil((lo + hi) / 2)
        ft = f(tmp)
        if ft == math.inf or ft <= f(tmp - 1):
            lo = tmp
        else:
            hi = tmp - 1
    best = min((lo, s0, s1), key=lambda S: (f(S), S))
    B = required_battery(best, profile)
    if B is None:
        raise SizingError("no feasible panel size in the search range")
    return _sizing(best, B, phi_s, phi_b, weight, iterations=it, s_min=s0, s_max=s1)


def bess_literal(profile: DemandProfile, phi_s: float, phi_b: float, weight: float = 1.0) -> Sizing:
    """Reference version that compares each probe with the last kept size.

    Kept for comparison with :func:`bess`; this rule can step over the
    minimum of a unimodal cost curve. Rejected probes lower the upper end
    to ``tmp - 1`` so the loop always terminates.
    """
    lo, hi = s_min(profile), s_max(profile)
    hi = max(hi, lo)
    s0, s1 = lo, hi
    S = lo
    B = required_battery(S, profile)
    f_cur = cost(S, B, phi_s, phi_b)
    it = 0
    while lo != hi:
        it += 1
        tmp = math.ceil((lo + hi) / 2)
        Bt = required_battery(tmp, profile)
        ft = cost(tmp, Bt, phi_s, phi_b)
        if ft <= f_cur or ft == math.inf:
            if Bt is not None:
                S, B, f_cur = tmp, Bt, ft
            lo = tmp
        else:
            hi = tmp - 1
    S = lo
    B = required_battery(S, profile)
    return _sizing(S, B, phi_s, phi_b, weight, iterations=it, s_min=s0, s_max=s1)


SWEEP_LIMIT = 1_000_000


def sweep_oracle(profile: DemandProfile, phi_s: float, phi_b: float, weight: float = 1.0,
                 limit: int = SWEEP_LIMIT) -> Sizing:
    lo, hi = search_range(profile)
    if hi - lo > limit:
        raise ValueError(f"sweep range {hi - lo} exceeds the guard {limit}")
    best_S, best_B, best_f = None, None, math.inf
    for S in range(lo, hi + 1):
        B = required_battery(S, profile)
        fS = cost(S, B, phi_s, phi_b)
        if fS < best_f:
            best_S, best_B, best_f = S, B, fS
    if best_S is None:
        raise SizingError("no feasible panel size in the search range")
    return _sizing(best_S, best_B, phi_s, phi_b, weight, iterations=hi - lo + 1,
                   s_min=lo, s_max=hi)


def bm_size(profile: DemandProfile, phi_s: float, phi_b: float, weight: float = 1.0) -> Sizing:
    """Largest useful panel, smallest battery."""
    lo, hi = search_range(profile)
    B = required_battery(hi, profile)
    return _sizing(hi, B, phi_s, phi_b, weight, s_min=lo, s_max=hi)


SIZERS = {"bess": bess, "bm": bm_size, "sweep": sweep_oracle}


def sizing_csv(rows) -> str:
    """CSV text for ``(bs_id, Sizing)`` pairs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bs", "panel_m2", "battery_wslot", "cost", "weighted_cost"])
    for bs_id, sz in rows:
        w.writerow([bs_id, sz.panel_area,
                    "inf" if sz.battery_capacity is None else sz.battery_capacity,
                    repr(sz.cost), repr(sz.weighted_cost)])
    return buf.getvalue()


def read_sizing_csv(text: str) -> list:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        B = None if row["battery_wslot"] == "inf" else int(row["battery_wslot"])
        out.append((int(row["bs"]), int(row["panel_m2"]), B, float(row["cost"]),
                    float(row["weighted_cost"])))
    return out
