"""Per-slot traffic balancing.

``solve_wem`` minimizes the weighted green-power draw of the macro BSs in one
slot subject to every BS keeping its latency indicator under ``zeta``. The
load caps are dualized: for fixed multipliers the association separates per
pixel (``redirect``), and the multipliers follow a projected subgradient
ascent with a target-level step size. Two baselines share the result type:
biased max-rate association (``drb_solve``) and latency-sum minimization
(``lm_solve``).
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .qos import (InfeasibleError, bs_caps, latency_or_inf, load_cap,
                  loads_from_association, pixel_load_matrix)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverParams:
    gamma: float = 1.0
    gamma_low: float = 0.1
    gamma_high: float = 1.9
    a: float = 1.5
    b: float = 0.85
    patience: int = 1
    # target offsets are relative to max(1, |g(upsilon^0)|); the initial
    # offset is raised to the gap to a known feasible primal value if given
    eps_init_rel: float = 1e-2
    eps_floor_rel: float = 1e-9
    delta_max: float = 1e6
    max_iters: int = 500
    convergence_tol: float = 1e-6
    window: int = 5
    subgrad_bound_check: float | None = None
    repair: bool = True
    improve: bool = True

    def __post_init__(self):
        if not 0 < self.gamma_low <= self.gamma <= self.gamma_high < 2:
            raise ValueError("need 0 < gamma_low <= gamma <= gamma_high < 2")
        if self.a < 1:
            raise ValueError("a must be >= 1")
        if not 0 < self.b < 1:
            raise ValueError("b must be in (0, 1)")
        if not self.eps_floor_rel > 0 or not self.eps_init_rel > 0:
            raise ValueError("target offsets must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_iters < 1 or self.window < 1:
            raise ValueError("max_iters and window must be >= 1")


@dataclass(frozen=True, eq=False)
class Association:
    serving: np.ndarray
    slot: int

    def __post_init__(self):
        arr = np.array(self.serving, dtype=np.int64, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "serving", arr)

    def __eq__(self, other):
        return (isinstance(other, Association) and self.slot == other.slot
                and np.array_equal(self.serving, other.serving))


@dataclass(frozen=True, eq=False)
class SlotProblem:
    """Slot data shared by every balancing scheme (0-based ``slot``)."""

    slot: int
    pixel_loads: np.ndarray
    rate: np.ndarray
    energy_coef: np.ndarray
    static_term: np.ndarray
    static_term_literal: np.ndarray
    caps: np.ndarray
    theta: np.ndarray
    weights: np.ndarray
    alpha: float
    zeta: float
    stable: float

    @classmethod
    def build(cls, slot: int, scenario, rates) -> "SlotProblem":
        bss = scenario.base_stations
        alpha = float(scenario.alpha[slot])
        w = np.array([bs.cost_weight for bs in bss])
        beta = np.array([bs.load_power_coeff for bs in bss])
        ps = np.array([bs.static_power for bs in bss])
        return cls(
            slot=slot,
            pixel_loads=pixel_load_matrix(slot, rates, scenario.traffic),
            rate=np.asarray(rates.rate),
            energy_coef=alpha * w * beta,
            static_term=alpha * w * ps,
            static_term_literal=alpha * w * beta * ps,
            caps=bs_caps(scenario),
            theta=np.array([bs.theta2_half for bs in bss]),
            weights=w,
            alpha=alpha,
            zeta=float(scenario.zeta),
            stable=1.0 - scenario.epsilon_load,
        )

    @property
    def n_bs(self) -> int:
        return self.pixel_loads.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.pixel_loads.shape[1]

    def loads(self, serving) -> np.ndarray:
        return loads_from_association(serving, self.pixel_loads)

    @cached_property
    def admissible(self) -> np.ndarray:
        """Reachable pairs whose single-pixel load fits under the BS cap.

        A pixel with no such pair keeps all its reachable BSs (the slot is
        then infeasible anyway and repair reports it).
        """
        fin = np.isfinite(self.pixel_loads)
        fits = fin & (self.pixel_loads <= self.caps[:, None] + 1e-12)
        return np.where(fits.any(axis=0)[None, :], fits, fin)

    def weighted_power(self, loads) -> float:
        return float(np.sum(self.energy_coef * loads + self.static_term))


@dataclass(frozen=True, eq=False)
class DualState:
    upsilon: np.ndarray
    iteration: int = 0
    dual_trace: tuple = ()
    step_trace: tuple = ()
    max_load_trace: tuple = ()
    best_dual: float = -math.inf
    best_upsilon: np.ndarray | None = None
    eps_t: float = 1.0
    eps_floor: float = 1e-3
    delta: float = 0.0
    misses: int = 0
    params: SolverParams = field(default_factory=SolverParams)


@dataclass(frozen=True, eq=False)
class WemSolution:
    scheme: str
    association: Association
    loads: np.ndarray
    weighted_power: float
    mu: np.ndarray
    converged: bool
    dual_trace: tuple = ()
    step_trace: tuple = ()
    max_load_trace: tuple = ()
    iterations: int = 0
    static_term: float = 0.0
    static_term_literal: float = 0.0
    repair_moves: int = 0
    improve_moves: int = 0

    @property
    def max_mu(self) -> float:
        return float(np.max(self.mu)) if self.mu.size else 0.0

    @property
    def slot(self) -> int:
        return self.association.slot


# --------------------------------------------------------------------------
# user side: redirect rule
# --------------------------------------------------------------------------

def _redirect_all(prob: SlotProblem, upsilon, prune: bool = True) -> np.ndarray:
    """Vectorized redirect rule over every pixel.

    Ties on cost go to the highest rate, then the lowest BS index. With
    ``prune`` the choice is restricted to :attr:`SlotProblem.admissible`.
    """
    cost = (prob.energy_coef + np.asarray(upsilon))[:, None] * prob.pixel_loads
    # unreachable entries are inf; 0 * inf must stay inf
    ok = prob.admissible if prune else np.isfinite(prob.pixel_loads)
    cost = np.where(ok, cost, np.inf)
    best = cost.min(axis=0)
    tied = cost == best[None, :]
    rate = np.where(tied, prob.rate, -1.0)
    return np.argmax(rate, axis=0)


def redirect(pixel: int, slot: int, upsilon, scenario, rates) -> int:
    prob = SlotProblem.build(slot, scenario, rates)
    col = prob.pixel_loads[:, pixel]
    if not np.isfinite(col).any():
        raise ValueError(f"pixel {pixel} is reachable by no BS")
    cost = np.where(np.isfinite(col), (prob.energy_coef + np.asarray(upsilon)) * col, np.inf)
    tied = cost == cost.min()
    return int(np.argmax(np.where(tied, prob.rate[:, pixel], -1.0)))


def build_association(slot: int, upsilon, scenario, rates) -> Association:
    prob = SlotProblem.build(slot, scenario, rates)
    return Association(_redirect_all(prob, upsilon, prune=False), slot)


def lagrangian_h(prob: SlotProblem, upsilon, serving) -> float:
    coef = prob.energy_coef + np.asarray(upsilon)
    serving = np.asarray(serving)
    return float(np.sum(coef[serving] * prob.pixel_loads[serving, np.arange(serving.size)]))


def _dual(prob: SlotProblem, upsilon, serving) -> float:
    upsilon = np.asarray(upsilon)
    return lagrangian_h(prob, upsilon, serving) + float(
        np.sum(prob.static_term - upsilon * prob.caps))


def dual_value(upsilon, association, slot, scenario, rates, static: str = "power") -> float:
    """Dual function at ``upsilon`` evaluated with the minimizing association.

    With ``static="power"`` the constant is ``alpha * w_j * p^s_j``, which
    makes the value a true lower bound on the weighted power of any
    cap-feasible association. ``static="literal"`` uses
    ``alpha * w_j * beta_j * p^s_j`` instead; only the constant differs.
    """
    prob = SlotProblem.build(slot, scenario, rates)
    serving = getattr(association, "serving", association)
    g = _dual(prob, upsilon, serving)
    if static == "literal":
        return g - float(prob.static_term.sum()) + float(prob.static_term_literal.sum())
    if static != "power":
        raise ValueError(f"static must be 'power' or 'literal', got {static!r}")
    return g


def subgradient(loads, zeta, theta2_half=1.0) -> np.ndarray:
    return np.asarray(loads, dtype=float) - load_cap(zeta, theta2_half)


# --------------------------------------------------------------------------
# multiplier side
# --------------------------------------------------------------------------

def step_size(state: DualState, subgrad) -> float:
    """Target-level step: ``gamma * (best + eps_t - g_t) / ||s||^2``.

    Components that the projection would discard (multiplier at 0 and a
    negative subgradient) are left out of the norm.
    """
    s = np.asarray(subgrad, dtype=float)
    ups = np.asarray(state.upsilon, dtype=float)
    if ups.shape == s.shape:
        s = np.where((ups > 0) | (s > 0), s, 0.0)
    norm2 = float(s @ s)
    if norm2 == 0.0 or not state.dual_trace:
        return 0.0
    p = state.params
    gamma = min(max(p.gamma, p.gamma_low), p.gamma_high)
    target = state.best_dual + state.eps_t
    delta = gamma * (target - state.dual_trace[-1]) / norm2
    return float(min(max(delta, 0.0), p.delta_max))


def update_offset(eps_t: float, improved: bool, params: SolverParams, eps_floor: float) -> float:
    if improved:
        return params.a * eps_t
    return max(params.b * eps_t, eps_floor)


def record_dual(state: DualState, g: float, max_load: float, upsilon=None,
                upper_bound: float | None = None) -> DualState:
    """Append ``g`` to the trace, update the running best and the target offset."""
    p = state.params
    if not state.dual_trace:
        scale = max(1.0, abs(g))
        eps_t, eps_floor = p.eps_init_rel * scale, p.eps_floor_rel * scale
        if upper_bound is not None and math.isfinite(upper_bound):
            eps_t = max(eps_t, upper_bound - g)
        misses = 0
    else:
        eps_floor = state.eps_floor
        # the offset grows only when the iterate reached the previous target
        # level; it shrinks after `patience` iterations without a new best
        reached = g >= state.best_dual + state.eps_t
        misses = 0 if g > state.best_dual else state.misses + 1
        if reached or misses >= p.patience:
            eps_t = update_offset(state.eps_t, reached, p, eps_floor)
            misses = 0
        else:
            eps_t = state.eps_t
    ups = state.upsilon if upsilon is None else upsilon
    if g > state.best_dual:
        best, best_ups = g, np.array(ups, copy=True)
    else:
        best, best_ups = state.best_dual, state.best_upsilon
    return replace(state, iteration=state.iteration + 1,
                   dual_trace=state.dual_trace + (float(g),),
                   max_load_trace=state.max_load_trace + (float(max_load),),
                   best_dual=best, best_upsilon=best_ups, eps_t=eps_t, eps_floor=eps_floor,
                   misses=misses)


def update_multipliers(state: DualState, loads, caps, delta: float | None = None) -> DualState:
    s = np.asarray(loads, dtype=float) - caps
    if delta is None:
        delta = step_size(state, s)
    if delta == 0.0:
        return replace(state, delta=0.0, step_trace=state.step_trace + (0.0,))
    ups = np.maximum(0.0, state.upsilon + delta * s)
    return replace(state, upsilon=ups, delta=delta, step_trace=state.step_trace + (delta,))


def _stationary(upsilon, s, tol=1e-12) -> bool:
    proj = np.where(upsilon > 0, s, np.maximum(s, 0.0))
    return bool(np.all(np.abs(proj) <= tol))


def _flat(trace, tol, window) -> bool:
    if len(trace) <= window:
        return False
    tail = trace[-(window + 1):]
    for prev, cur in zip(tail[:-1], tail[1:]):
        if abs(cur - prev) > tol * max(1.0, abs(cur)):
            return False
    return True


def run_dual(prob: SlotProblem, params: SolverParams,
             upper_bound: float | None = None) -> tuple[DualState, bool]:
    state = DualState(upsilon=np.zeros(prob.n_bs), params=params)
    converged = False
    for _ in range(params.max_iters):
        serving = _redirect_all(prob, state.upsilon)
        loads = prob.loads(serving)
        g = _dual(prob, state.upsilon, serving)
        state = record_dual(state, g, float(loads.max()) if loads.size else 0.0,
                            upper_bound=upper_bound)
        s = loads - prob.caps
        if params.subgrad_bound_check is not None and float(np.linalg.norm(s)) > \
                params.subgrad_bound_check:
            log.warning("slot %d: subgradient norm %.3g exceeds bound %.3g", prob.slot + 1,
                        np.linalg.norm(s), params.subgrad_bound_check)
        if _stationary(state.upsilon, s):
            converged = True
            break
        if _flat(state.dual_trace, params.convergence_tol, params.window):
            converged = True
            break
        state = update_multipliers(state, loads, prob.caps)
    return state, converged


# --------------------------------------------------------------------------
# primal recovery
# --------------------------------------------------------------------------

def repair(prob: SlotProblem, serving, upsilon, max_moves: int | None = None):
    """Move pixels off BSs above their cap until every cap holds.

    For the most overloaded BS the pixels are tried in decreasing Lagrangian
    cost; the first one that fits elsewhere moves to its cheapest BS with
    headroom. Returns ``(serving, ok, moves)``.
    """
    serving = np.array(serving, copy=True)
    loads = prob.loads(serving)
    coef = prob.energy_coef + np.asarray(upsilon)
    finite = np.isfinite(prob.pixel_loads)
    max_moves = max_moves if max_moves is not None else 4 * prob.n_pixels
    moves = 0
    tol = 1e-12
    while moves < max_moves:
        excess = loads - prob.caps
        if np.all(excess <= tol):
            return serving, True, moves
        j = int(np.argmax(excess))
        mine = np.flatnonzero(serving == j)
        mine = mine[np.argsort(-(coef[j] * prob.pixel_loads[j, mine]), kind="stable")]
        done = False
        for x in mine:
            fits = finite[:, x] & (loads + prob.pixel_loads[:, x] <= prob.caps + tol)
            fits[j] = False
            if not fits.any():
                continue
            cand = np.where(fits, coef * prob.pixel_loads[:, x], np.inf)
            i = int(np.argmin(cand))
            loads[j] -= prob.pixel_loads[j, x]
            loads[i] += prob.pixel_loads[i, x]
            serving[x] = i
            moves += 1
            done = True
            break
        if not done:
            return serving, False, moves
    loads = prob.loads(serving)
    return serving, bool(np.all(loads <= prob.caps + tol)), moves


def repair_marginal(prob: SlotProblem, serving, upsilon, max_moves: int | None = None):
    """Alternative repair: off the most overloaded BS, move the pixel with the
    smallest Lagrangian cost increase per unit of load freed."""
    serving = np.array(serving, copy=True)
    loads = prob.loads(serving)
    coef = prob.energy_coef + np.asarray(upsilon)
    L = prob.pixel_loads
    max_moves = max_moves if max_moves is not None else 4 * prob.n_pixels
    for moves in range(max_moves + 1):
        excess = loads - prob.caps
        if np.all(excess <= 1e-12):
            return serving, True, moves
        if moves == max_moves:
            break
        j = int(np.argmax(excess))
        mine = np.flatnonzero(serving == j)
        fits = prob.admissible[:, mine] & (loads[:, None] + L[:, mine] <= prob.caps[:, None] + 1e-12)
        fits[j] = False
        cost = np.where(fits, coef[:, None] * L[:, mine], np.inf)
        dst = np.argmin(cost, axis=0)
        cols = np.arange(mine.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (cost[dst, cols] - coef[j] * L[j, mine]) / L[j, mine]
        ratio = np.where(np.isfinite(cost[dst, cols]) & (L[j, mine] > 0), ratio, np.inf)
        if not np.isfinite(ratio).any():
            break
        t = int(np.argmin(ratio))
        x, i = mine[t], dst[t]
        loads[j] -= L[j, x]
        loads[i] += L[i, x]
        serving[x] = i
    return serving, False, max_moves


def _excess_deltas(prob: SlotProblem, serving, loads) -> np.ndarray:
    """Change in total cap excess from moving each pixel to each BS."""
    L = prob.pixel_loads
    cols = np.arange(prob.n_pixels)
    over = np.maximum(loads - prob.caps, 0.0)
    src = serving
    src_after = np.maximum(loads[src] - L[src, cols] - prob.caps[src], 0.0) - over[src]
    dst_after = np.maximum(loads[:, None] + L - prob.caps[:, None], 0.0) - over[:, None]
    d = np.where(prob.admissible, dst_after + src_after[None, :], np.inf)
    d[src, cols] = np.inf
    return d


def repair_excess(prob: SlotProblem, serving, upsilon=None, max_moves: int | None = None,
                  n_cand: int = 64):
    """Fallback repair by single or paired moves that strictly lower the
    summed excess over the caps; used when the greedy repairs get stuck."""
    serving = np.array(serving, copy=True)
    loads = prob.loads(serving)
    L = prob.pixel_loads
    max_moves = max_moves if max_moves is not None else 4 * prob.n_pixels
    moves = 0

    def move(x, i):
        j = serving[x]
        loads[j] -= L[j, x]
        loads[i] += L[i, x]
        serving[x] = i

    while moves < max_moves:
        if np.all(loads <= prob.caps + 1e-12):
            return serving, True, moves
        d1 = _excess_deltas(prob, serving, loads)
        f = int(np.argmin(d1))
        best, plan = d1.flat[f], [divmod(f, prob.n_pixels)]
        for f in np.argsort(d1, axis=None, kind="stable")[:n_cand]:
            i, x = divmod(int(f), prob.n_pixels)
            if not np.isfinite(d1[i, x]):
                break
            j = serving[x]
            move(x, i)
            d2 = _excess_deltas(prob, serving, loads)
            d2[:, x] = np.inf
            f2 = int(np.argmin(d2))
            if d1[i, x] + d2.flat[f2] < best - 1e-12:
                best, plan = d1[i, x] + d2.flat[f2], [(i, x), divmod(f2, prob.n_pixels)]
            move(x, j)
        if not best < -1e-12:
            break
        for i, x in plan:
            move(x, i)
            moves += 1
    loads = prob.loads(serving)
    return serving, bool(np.all(loads <= prob.caps + 1e-12)), moves


def _eject_greedy(prob: SlotProblem, serving, loads, cost, i, x, max_out: int = 3):
    """Free room on ``i`` for pixel ``x`` by moving at most ``max_out`` pixels
    off ``i``, cheapest cost per unit of load first. Returns
    ``(extra cost, moves)`` or None."""
    L = prob.pixel_loads
    new = loads.copy()
    new[i] += L[i, x]
    ys = np.flatnonzero(serving == i)
    ys = ys[(ys != x) & (L[i, ys] > 0)]
    finite = np.isfinite(L[:, ys])
    out, extra = [], 0.0
    while new[i] > prob.caps[i] + 1e-12:
        if ys.size == 0 or len(out) == max_out:
            return None
        fits = finite & (new[:, None] + L[:, ys] <= prob.caps[:, None] + 1e-12)
        fits[i, :] = False
        c = np.where(fits, cost[:, ys], np.inf)
        k = np.argmin(c, axis=0)
        cols = np.arange(ys.size)
        rate = (c[k, cols] - cost[i, ys]) / L[i, ys]
        t = int(np.argmin(rate))
        if not np.isfinite(rate[t]):
            return None
        y, k = int(ys[t]), int(k[t])
        new[i] -= L[i, y]
        new[k] += L[k, y]
        extra += cost[k, y] - cost[i, y]
        out.append((y, k))
        ys = np.delete(ys, t)
        finite = np.delete(finite, t, axis=1)
    return extra, out


def _ejection(prob: SlotProblem, serving, loads, cost, tol, n_cand: int = 64):
    """Best compound move: pixel ``x`` moves onto a BS ``i`` it would
    overload while other pixels leave ``i``. One leaving pixel is tried
    first; longer chains only when that finds nothing. Returns
    ``[(pixel, bs), ...]`` in application order, or None."""
    L = prob.pixel_loads
    cols = np.arange(prob.n_pixels)
    gain = cost - cost[serving, cols][None, :]
    blocked = loads[:, None] + L > prob.caps[:, None] + 1e-12
    gain = np.where(blocked & np.isfinite(cost), gain, np.inf)
    gain[serving, cols] = np.inf
    flat = np.argsort(gain, axis=None, kind="stable")[:n_cand]
    best, best_move = -tol, None
    for f in flat:
        i, x = divmod(int(f), prob.n_pixels)
        g1 = gain[i, x]
        if not g1 < best:
            break
        j = serving[x]
        new = loads.copy()
        new[j] -= L[j, x]
        new[i] += L[i, x]
        ys = np.flatnonzero(serving == i)
        ys = ys[new[i] - L[i, ys] <= prob.caps[i] + 1e-12]
        if ys.size == 0:
            continue
        fits = np.isfinite(L[:, ys]) & (new[:, None] + L[:, ys] <= prob.caps[:, None] + 1e-12)
        fits[i, :] = False
        g2 = np.where(fits, cost[:, ys] - cost[i, ys][None, :], np.inf)
        k, c = np.unravel_index(int(np.argmin(g2)), g2.shape)
        if g1 + g2[k, c] < best:
            best, best_move = g1 + g2[k, c], [(int(ys[c]), int(k)), (x, i)]
    if best_move is not None:
        return best_move
    for f in flat:
        i, x = divmod(int(f), prob.n_pixels)
        g1 = gain[i, x]
        if not g1 < best:
            break
        j = serving[x]
        # x's old BS j is credited before anything leaves i
        moved = serving.copy()
        moved[x] = i
        base = loads.copy()
        base[j] -= L[j, x]
        chain = _eject_greedy(prob, moved, base, cost, i, x)
        if chain is not None and g1 + chain[0] < best:
            best, best_move = g1 + chain[0], chain[1] + [(x, i)]
    return best_move


def improve(prob: SlotProblem, serving, max_moves: int | None = None):
    """Local search that lowers weighted power within the caps.

    Best single-pixel moves first; when none is left, one pixel may move
    onto a full BS if other pixels leave that BS in the same step.
    """
    serving = np.array(serving, copy=True)
    loads = prob.loads(serving)
    cols = np.arange(prob.n_pixels)
    cost = prob.energy_coef[:, None] * prob.pixel_loads
    cost = np.where(np.isfinite(prob.pixel_loads), cost, np.inf)
    max_moves = max_moves if max_moves is not None else 4 * prob.n_pixels
    tol = 1e-12 * max(1.0, prob.weighted_power(loads))
    moves = 0

    def move(x, i):
        j = serving[x]
        loads[j] -= prob.pixel_loads[j, x]
        loads[i] += prob.pixel_loads[i, x]
        serving[x] = i

    while moves < max_moves:
        gain = cost - cost[serving, cols][None, :]
        fits = loads[:, None] + prob.pixel_loads <= prob.caps[:, None] + 1e-12
        gain = np.where(fits, gain, np.inf)
        gain[serving, cols] = np.inf
        flat = int(np.argmin(gain))
        i, x = divmod(flat, prob.n_pixels)
        if gain[i, x] < -tol:
            move(x, i)
            moves += 1
            continue
        ej = _ejection(prob, serving, loads, cost, tol)
        if ej is None:
            break
        for x, i in ej:
            move(x, i)
        moves += len(ej)
    return serving, moves


def dual_trace_csv(sol: WemSolution) -> str:
    """``iter,dual_value,step_size,max_load`` rows for one solved slot."""
    steps = list(sol.step_trace) + [0.0] * (len(sol.dual_trace) - len(sol.step_trace))
    lines = ["iter,dual_value,step_size,max_load"]
    for i, (g, d, m) in enumerate(zip(sol.dual_trace, steps, sol.max_load_trace), 1):
        lines.append(f"{i},{g!r},{d!r},{m!r}")
    return "\n".join(lines) + "\n"


def _solution(scheme, prob: SlotProblem, serving, converged, state=None, repair_moves=0,
              improve_moves=0) -> WemSolution:
    loads = prob.loads(serving)
    mu = latency_or_inf(loads, prob.theta)
    kw = {}
    if state is not None:
        kw = dict(dual_trace=state.dual_trace, step_trace=state.step_trace,
                  max_load_trace=state.max_load_trace, iterations=state.iteration)
    return WemSolution(
        scheme=scheme, association=Association(serving, prob.slot), loads=loads,
        weighted_power=prob.weighted_power(loads), mu=mu, converged=converged,
        static_term=float(prob.static_term.sum()),
        static_term_literal=float(prob.static_term_literal.sum()),
        repair_moves=repair_moves, improve_moves=improve_moves, **kw)


def _recover(prob: SlotProblem, upsilon, params: SolverParams):
    start = _redirect_all(prob, upsilon)
    if not params.repair:
        serving, i_moves = improve(prob, start) if params.improve else (start, 0)
        ok = bool(np.all(prob.loads(serving) <= prob.caps + 1e-12))
        return serving, ok, 0, i_moves
    best = None
    for fix in (repair, repair_marginal):
        serving, ok, r_moves = fix(prob, start, upsilon)
        i_moves = 0
        if ok and params.improve:
            serving, i_moves = improve(prob, serving)
        cand = (not ok, prob.weighted_power(prob.loads(serving)), serving, ok, r_moves, i_moves)
        if best is None or cand[:2] < best[:2]:
            best = cand
    if not best[3]:
        serving, ok, r_moves = repair_excess(prob, start)
        if ok:
            i_moves = 0
            if params.improve:
                serving, i_moves = improve(prob, serving)
            best = (False, 0.0, serving, ok, r_moves, i_moves)
    return best[2:]


def solve_slot_problem(prob: SlotProblem, params: SolverParams | None = None) -> WemSolution:
    params = params or SolverParams()
    # a cheap feasible point from zero offsets seeds the dual target level
    seed, seed_ok, _, _ = _recover(prob, np.zeros(prob.n_bs), params)
    ub = prob.weighted_power(prob.loads(seed)) if seed_ok else None
    state, converged = run_dual(prob, params, upper_bound=ub)
    ups = state.upsilon if converged or state.best_upsilon is None else state.best_upsilon
    serving, ok, r_moves, i_moves = _recover(prob, ups, params)
    if seed_ok and (not ok or ub < prob.weighted_power(prob.loads(serving)) - 1e-9):
        serving, ok = seed, True
    if not ok:
        log.warning("slot %d: could not bring every BS under its cap", prob.slot + 1)
    return _solution("pca", prob, serving, converged and ok, state, r_moves, i_moves)


def solve_wem(slot: int, scenario, rates, params: SolverParams | None = None) -> WemSolution:
    """Provision-cost-aware balancing for one 0-based slot."""
    return solve_slot_problem(SlotProblem.build(slot, scenario, rates), params)


# --------------------------------------------------------------------------
# baselines
# --------------------------------------------------------------------------

def tier_biases(scenario, small_bias: float, macro_bias: float = 1.0) -> np.ndarray:
    return np.array([macro_bias if bs.is_macro else small_bias for bs in scenario.base_stations])


def drb_serving(rate, bias) -> np.ndarray:
    bias = np.asarray(bias, dtype=float)
    if np.any(bias <= 0):
        raise ValueError("biases must be > 0")
    return np.argmax(bias[:, None] * np.asarray(rate), axis=0)


def drb_associate(slot: int, bias_per_tier, scenario, rates) -> Association:
    """Biased max-rate association; ``bias_per_tier`` is the small-cell bias
    (macros fixed at 1) or a full per-BS bias vector."""
    if np.ndim(bias_per_tier) == 0:
        bias = tier_biases(scenario, float(bias_per_tier))
    else:
        bias = np.asarray(bias_per_tier, dtype=float)
    return Association(drb_serving(rates.rate, bias), slot)


def drb_solve(slot: int, scenario, rates, bias: float = 4.0,
              prob: SlotProblem | None = None) -> WemSolution:
    prob = prob or SlotProblem.build(slot, scenario, rates)
    serving = drb_associate(slot, bias, scenario, rates).serving
    return _solution("drb", prob, serving, True)


def _latency_ext(rho, theta, cut, penalty=1e6):
    """Latency indicator continued linearly (plus a steep penalty) beyond ``cut``."""
    rho = np.asarray(rho, dtype=float)
    inside = np.minimum(rho, cut)
    base = theta * inside / (1.0 - inside)
    over = np.maximum(rho - cut, 0.0)
    slope = theta / (1.0 - cut) ** 2 + penalty
    return base + slope * over


def lm_objective(loads, theta, stable) -> float:
    return float(np.sum(_latency_ext(loads, theta, stable)))


def _lm_deltas(prob: SlotProblem, serving, loads) -> np.ndarray:
    """Exact objective change of moving each pixel to each BS."""
    cols = np.arange(prob.n_pixels)
    finite = np.isfinite(prob.pixel_loads)
    f_now = _latency_ext(loads, prob.theta, prob.stable)
    src_load = prob.pixel_loads[serving, cols]
    src_gain = (_latency_ext(loads[serving] - src_load, prob.theta[serving], prob.stable)
                - f_now[serving])
    add = loads[:, None] + np.where(finite, prob.pixel_loads, 0.0)
    dst_cost = np.where(finite, _latency_ext(add, prob.theta[:, None], prob.stable)
                        - f_now[:, None], np.inf)
    delta = dst_cost + src_gain[None, :]
    delta[serving, cols] = np.inf
    return delta


def lm_local_search(prob: SlotProblem, serving, max_moves: int | None = None,
                    n_cand: int = 32):
    """Descent on the summed latency indicator.

    Best single move while one improves; then the best improving pair of
    moves among the ``n_cand`` most promising first moves.
    """
    serving = np.array(serving, copy=True)
    loads = prob.loads(serving)
    max_moves = max_moves if max_moves is not None else 20 * prob.n_pixels
    moves = 0

    def move(x, i):
        j = serving[x]
        loads[j] -= prob.pixel_loads[j, x]
        loads[i] += prob.pixel_loads[i, x]
        serving[x] = i

    while moves < max_moves:
        delta = _lm_deltas(prob, serving, loads)
        tol = 1e-12 * max(1.0, lm_objective(loads, prob.theta, prob.stable))
        flat = int(np.argmin(delta))
        i, x = divmod(flat, prob.n_pixels)
        if delta[i, x] < -tol:
            move(x, i)
            moves += 1
            continue
        best, pair = -tol, None
        for f in np.argsort(delta, axis=None, kind="stable")[:n_cand]:
            i, x = divmod(int(f), prob.n_pixels)
            if not np.isfinite(delta[i, x]):
                break
            j = serving[x]
            move(x, i)
            d2 = _lm_deltas(prob, serving, loads)
            d2[:, x] = np.inf
            f2 = int(np.argmin(d2))
            if delta[i, x] + d2.flat[f2] < best:
                best = delta[i, x] + d2.flat[f2]
                pair = (x, i, *reversed(divmod(f2, prob.n_pixels)))
            move(x, j)
        if pair is None:
            break
        x, i, y, k = pair
        move(x, i)
        move(y, k)
        moves += 2
    return serving, moves < max_moves


def lm_greedy_start(prob: SlotProblem) -> np.ndarray:
    """Insert pixels heaviest first, each where the summed indicator grows least."""
    L = np.where(np.isfinite(prob.pixel_loads), prob.pixel_loads, np.inf)
    order = np.argsort(-L.min(axis=0), kind="stable")
    loads = np.zeros(prob.n_bs)
    serving = np.zeros(prob.n_pixels, dtype=int)
    f_now = _latency_ext(loads, prob.theta, prob.stable)
    for x in order:
        inc = _latency_ext(loads + np.where(np.isfinite(L[:, x]), L[:, x], 0.0),
                           prob.theta, prob.stable) - f_now
        inc = np.where(np.isfinite(L[:, x]), inc, np.inf)
        i = int(np.argmin(inc))
        serving[x] = i
        loads[i] += L[i, x]
        f_now = _latency_ext(loads, prob.theta, prob.stable)
    return serving


def lm_exact(prob: SlotProblem):
    """Enumerate every association; returns the serving array with the
    smallest summed latency indicator."""
    choices = [np.flatnonzero(np.isfinite(prob.pixel_loads[:, x])) for x in range(prob.n_pixels)]
    grid = np.array(list(itertools.product(*choices)), dtype=int).reshape(-1, prob.n_pixels)
    cols = np.arange(prob.n_pixels)
    loads = np.zeros((grid.shape[0], prob.n_bs))
    for x in cols:
        np.add.at(loads, (np.arange(grid.shape[0]), grid[:, x]), prob.pixel_loads[grid[:, x], x])
    vals = _latency_ext(loads, prob.theta[None, :], prob.stable).sum(axis=1)
    return grid[int(np.argmin(vals))]


def _space(prob: SlotProblem) -> float:
    n = np.isfinite(prob.pixel_loads).sum(axis=0)
    return math.prod(int(c) for c in n) if n.size <= 64 else math.inf


def lm_solve(slot: int, scenario, rates, params: SolverParams | None = None,
             prob: SlotProblem | None = None, exact_limit: int = 20_000) -> WemSolution:
    """Minimize the summed latency indicator.

    Slots whose association space has at most ``exact_limit`` elements are
    enumerated; larger ones take the better of two local-search starts.
    """
    prob = prob or SlotProblem.build(slot, scenario, rates)
    if _space(prob) <= exact_limit:
        serving = lm_exact(prob)
        ok = bool(np.all(prob.loads(serving) <= prob.stable))
        return _solution("lm", prob, serving, ok)
    best = None
    for start in (np.argmax(prob.rate, axis=0), lm_greedy_start(prob)):
        serving, ok = lm_local_search(prob, start)
        val = lm_objective(prob.loads(serving), prob.theta, prob.stable)
        if best is None or val < best[0]:
            best = (val, serving, ok)
    _, serving, ok = best
    loads = prob.loads(serving)
    if np.any(loads > prob.stable):
        log.warning("slot %d: LM left a BS above the stability limit", slot + 1)
        ok = False
    return _solution("lm", prob, serving, ok)


def solve_scheme(scheme: str, slot: int, scenario, rates, params: SolverParams | None = None,
                 bias: float = 4.0) -> WemSolution:
    scheme = scheme.lower()
    if scheme == "pca":
        return solve_wem(slot, scenario, rates, params)
    if scheme == "drb":
        return drb_solve(slot, scenario, rates, bias)
    if scheme == "lm":
        return lm_solve(slot, scenario, rates, params)
    raise ValueError(f"unknown scheme {scheme!r}; expected pca, drb or lm")


def exhaustive_primal(prob: SlotProblem):
    """Brute-force minimum weighted power over cap-feasible associations.

    Returns ``(value, serving)``; ``(inf, None)`` when nothing is feasible.
    """
    choices = [np.flatnonzero(np.isfinite(prob.pixel_loads[:, x])).tolist()
               for x in range(prob.n_pixels)]
    best, arg = math.inf, None
    for assoc in itertools.product(*choices):
        a = np.array(assoc, dtype=int)
        loads = prob.loads(a)
        if np.all(loads <= prob.caps + 1e-12):
            v = prob.weighted_power(loads)
            if v < best:
                best, arg = v, a
    return best, arg


__all__ = [
    "Association", "DualState", "InfeasibleError", "SlotProblem", "SolverParams",
    "WemSolution", "build_association", "drb_associate", "drb_solve", "dual_value",
    "dual_trace_csv", "exhaustive_primal", "lagrangian_h", "lm_exact", "lm_solve", "redirect",
    "repair", "repair_excess", "solve_scheme",
    "solve_wem", "step_size", "subgradient", "update_multipliers",
]
