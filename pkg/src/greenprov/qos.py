"""Traffic load, latency indicator, power model and the QoS lower bound.

A BS's downlink behaves as an M/G/1 processor-sharing queue. By the
Conservation Law the mean waiting time is ``rho * E(theta^2) / (2 (1 - rho))``
whatever the scheduler's priorities, so ``mu = theta2_half * rho / (1 - rho)``
serves as a scheduler-agnostic latency indicator; ``theta2_half`` holds
``E(theta^2) / 2`` for the required service time ``theta``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


class InfeasibleError(ValueError):
    """No association keeps every BS within its stability limit."""


def pixel_load_matrix(slot: int, rates, traffic) -> np.ndarray:
    """Load contribution ``lambda * nu / r_j(x)`` of each pixel on each BS.

    Shape ``(n_bs, n_pixels)``; ``inf`` where the BS cannot serve the pixel
    (zero-traffic pixels contribute 0 wherever reachable).
    """
    offered = traffic.offered_bps(slot)
    with np.errstate(divide="ignore", invalid="ignore"):
        load = np.where(rates.reachable, offered[None, :] / rates.rate, np.inf)
    return load


def loads_from_association(serving, pixel_loads: np.ndarray) -> np.ndarray:
    """Per-BS load for an association given as a pixel -> BS index array."""
    serving = np.asarray(serving)
    contrib = pixel_loads[serving, np.arange(serving.size)]
    # bincount sums in pixel order: deterministic regardless of threading
    return np.bincount(serving, weights=contrib, minlength=pixel_loads.shape[0])


def bs_load(j: int, slot: int, association, rates, traffic) -> float:
    serving = np.asarray(getattr(association, "serving", association))
    mine = np.flatnonzero(serving == j)
    if mine.size == 0:
        return 0.0
    r = rates.rate[j, mine]
    if np.any(r <= 0):
        bad = mine[r <= 0].tolist()
        raise ZeroDivisionError(f"pixels {bad} assigned to BS {j} where its rate is 0")
    offered = traffic.offered_bps(slot)[mine]
    return float(np.sum(offered / r))


def latency_indicator(rho, theta2_half=1.0):
    rho_a = np.asarray(rho, dtype=float)
    if np.any(rho_a >= 1) or np.any(rho_a < 0):
        raise ValueError(f"load must be in [0, 1), got {rho}")
    mu = np.asarray(theta2_half) * rho_a / (1.0 - rho_a)
    return float(mu) if mu.ndim == 0 else mu


def latency_or_inf(rho, theta2_half=1.0) -> np.ndarray:
    """Like :func:`latency_indicator` but maps unstable loads to ``inf``."""
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(rho < 1.0, np.asarray(theta2_half) * rho / (1.0 - rho), np.inf)
    return mu


def latency_inverse(mu, theta2_half=1.0):
    """Load at which the latency indicator equals ``mu``."""
    return mu / (theta2_half + mu)


def load_cap(zeta: float, theta2_half: float = 1.0) -> float:
    if zeta == math.inf:
        return 1.0
    return zeta / (theta2_half + zeta)


def bs_caps(scenario) -> np.ndarray:
    """Per-BS load ceiling: the QoS cap clamped to the stability limit."""
    theta = np.array([bs.theta2_half for bs in scenario.base_stations])
    return np.minimum(scenario.zeta / (theta + scenario.zeta), 1.0 - scenario.epsilon_load)


def power(bs, rho):
    if not bs.is_macro:
        raise ValueError("power model applies to macro BSs only")
    return bs.load_power_coeff * rho + bs.static_power


# --------------------------------------------------------------------------
# QoS bound: min over associations of max_j mu_j
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QosBound:
    mu_star: tuple
    zeta_star: float
    exact: bool

    def to_dict(self) -> dict:
        return {"mu_star": list(self.mu_star), "zeta_star": self.zeta_star, "exact": self.exact}


def _max_mu(loads, theta) -> float:
    return float(np.max(latency_or_inf(loads, theta))) if loads.size else 0.0


def qb_exact_slot(pixel_loads: np.ndarray, theta: np.ndarray, max_assignments: int = 2_000_000):
    """Exhaustive min-max latency over all associations; returns (mu*, serving)."""
    n_bs, n_pix = pixel_loads.shape
    choices = [np.flatnonzero(np.isfinite(pixel_loads[:, x])).tolist() for x in range(n_pix)]
    total = math.prod(len(c) for c in choices)
    if total > max_assignments:
        raise ValueError(f"{total} associations exceed the exhaustive limit {max_assignments}")
    best, best_assoc = math.inf, None
    cols = np.arange(n_pix)
    for assoc in itertools.product(*choices):
        a = np.array(assoc, dtype=int)
        loads = np.bincount(a, weights=pixel_loads[a, cols], minlength=n_bs)
        m = _max_mu(loads, theta)
        if m < best or best_assoc is None:
            best, best_assoc = m, a
    return best, best_assoc


def qb_heuristic_slot(pixel_loads: np.ndarray, theta: np.ndarray, max_moves: int | None = None):
    """Greedy min-max balancing from the lightest-footprint association.

    Repeatedly moves one pixel off the BS with the largest latency indicator
    to the BS where the move leaves the smaller of the two new indicators
    lowest; a move is taken only if both new indicators fall strictly below
    the current maximum, so the sorted indicator vector decreases
    lexicographically and the loop terminates.
    """
    n_bs, n_pix = pixel_loads.shape
    serving = np.argmin(pixel_loads, axis=0)
    loads = loads_from_association(serving, pixel_loads)
    max_moves = max_moves if max_moves is not None else 20 * n_pix + 100
    finite = np.isfinite(pixel_loads)
    for _ in range(max_moves):
        mu = latency_or_inf(loads, theta)
        order = np.argsort(-mu, kind="stable")
        moved = False
        for j in order:
            if mu[j] <= 0:
                break
            mine = np.flatnonzero(serving == j)
            if mine.size == 0:
                continue
            src_after = latency_or_inf(np.maximum(loads[j] - pixel_loads[j, mine], 0.0), theta[j])
            dst_load = loads[:, None] + np.where(finite[:, mine], pixel_loads[:, mine], np.inf)
            dst_load[j, :] = np.inf
            dst_after = latency_or_inf(dst_load, theta[:, None])
            worst = np.maximum(dst_after, src_after[None, :])
            ok = (dst_after < mu[j]) & (src_after[None, :] < mu[j])
            if not ok.any():
                # only the top BS matters for the max; lower ones cannot improve it
                if j == order[0]:
                    break
                continue
            worst = np.where(ok, worst, np.inf)
            i, col = np.unravel_index(np.argmin(worst), worst.shape)
            x = mine[col]
            loads[j] -= pixel_loads[j, x]
            loads[i] += pixel_loads[i, x]
            serving[x] = i
            moved = True
            break
        if not moved:
            break
    # recompute from scratch to avoid drift
    loads = loads_from_association(serving, pixel_loads)
    return _max_mu(loads, theta), serving


def qb_lower_bound(scenario, rates, mode: str = "auto", exact_limit: int = 100_000) -> QosBound:
    """Per-slot min-max latency indicator and the network threshold bound.

    ``mode`` is ``"exact"``, ``"heuristic"`` or ``"auto"`` (exact when the
    association space has at most ``exact_limit`` elements). Heuristic values
    are upper bounds on the true per-slot optimum.
    """
    theta = np.array([bs.theta2_half for bs in scenario.base_stations])
    n_reach = rates.reachable.sum(axis=0)
    space = math.prod(int(c) for c in n_reach) if n_reach.size <= 64 else math.inf
    use_exact = mode == "exact" or (mode == "auto" and space <= exact_limit)
    if mode not in ("exact", "heuristic", "auto"):
        raise ValueError(f"unknown QB mode {mode!r}")
    stable = 1.0 - scenario.epsilon_load
    mus = []
    for k in range(scenario.n_slots):
        pl = pixel_load_matrix(k, rates, scenario.traffic)
        if use_exact:
            mu, serving = qb_exact_slot(pl, theta)
        else:
            mu, serving = qb_heuristic_slot(pl, theta)
        loads = loads_from_association(serving, pl)
        if np.any(loads > stable):
            j = int(np.argmax(loads))
            raise InfeasibleError(
                f"slot {k + 1}: best balance leaves BS {j} at load {loads[j]:.4f} > {stable}")
        mus.append(float(mu))
    return QosBound(mu_star=tuple(mus), zeta_star=max(mus) if mus else 0.0, exact=use_exact)
