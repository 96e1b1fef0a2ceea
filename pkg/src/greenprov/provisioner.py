"""End-to-end provisioning: per-slot balancing, per-macro sizing, network CAPEX."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .balancer import SolverParams, WemSolution, solve_scheme
from .qos import InfeasibleError, QosBound, qb_lower_bound
from .radio import compute_rate_matrix
from .scenario import atomic_write_text
from .sizing import SIZERS, Sizing, SizingError, green_demand, sizing_csv

log = logging.getLogger(__name__)

SCHEMES = ("pca", "drb", "lm")
SIZER_NAMES = tuple(SIZERS)
DEFAULT_BIAS = 4.0
# CAPEX comparisons below this are noise from the integer quanta
CAPEX_ABS_TOL = 1e-9


def thread_count(requested: int | None = None) -> int:
    n = requested or min(8, os.cpu_count() or 1)
    cap = os.environ.get("GREENPROV_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring GREENPROV_THREADS=%r (not an integer)", cap)
    return max(1, n)


def _pool_map(fn, items, threads: int | None = None) -> list:
    items = list(items)
    n = thread_count(threads)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        # map yields in submission order, so completion order never leaks out
        return list(ex.map(fn, items))


def _num(x: float):
    """JSON-safe float: non-finite values become null."""
    x = float(x)
    return x if math.isfinite(x) else None


def _unnum(x):
    return math.inf if x is None else float(x)


@dataclass
class SlotResult:
    slot: int  # 1-based
    weighted_power: float
    max_mu: float
    loads: list
    converged: bool
    iterations: int = 0
    dual_trace: list = field(default_factory=list)

    @classmethod
    def from_solution(cls, sol: WemSolution) -> "SlotResult":
        return cls(slot=sol.slot + 1, weighted_power=float(sol.weighted_power),
                   max_mu=sol.max_mu, loads=[float(v) for v in sol.loads],
                   converged=bool(sol.converged), iterations=int(sol.iterations),
                   dual_trace=[float(g) for g in sol.dual_trace])

    def to_dict(self) -> dict:
        return {"slot": self.slot, "weighted_power": self.weighted_power,
                "max_mu": _num(self.max_mu), "loads": self.loads, "converged": self.converged,
                "iterations": self.iterations, "dual_trace": self.dual_trace}

    @classmethod
    def from_dict(cls, d: dict) -> "SlotResult":
        return cls(slot=int(d["slot"]), weighted_power=float(d["weighted_power"]),
                   max_mu=_unnum(d["max_mu"]), loads=[float(v) for v in d["loads"]],
                   converged=bool(d["converged"]), iterations=int(d.get("iterations", 0)),
                   dual_trace=[float(g) for g in d.get("dual_trace", [])])


@dataclass
class ProvisionReport:
    scheme: str
    sizer: str
    per_mbs: list  # (bs id, Sizing)
    total_capex: float
    per_slot: list  # SlotResult
    qb_bound: QosBound | None
    zeta: float
    bias: float | None = None
    feasible: bool = True
    diagnostics: list = field(default_factory=list)

    @property
    def total_weighted_power(self) -> float:
        return float(sum(r.weighted_power for r in self.per_slot))

    @property
    def max_mu(self) -> float:
        return max((r.max_mu for r in self.per_slot), default=0.0)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "sizer": self.sizer,
            "bias": self.bias,
            "zeta": self.zeta,
            "feasible": self.feasible,
            "diagnostics": list(self.diagnostics),
            "total_capex": _num(self.total_capex),
            "total_weighted_power": self.total_weighted_power,
            "max_mu": _num(self.max_mu),
            "qb_bound": None if self.qb_bound is None else {
                "mu_star": [_num(m) for m in self.qb_bound.mu_star],
                "zeta_star": _num(self.qb_bound.zeta_star), "exact": self.qb_bound.exact},
            "per_mbs": [dict(bs=bs_id, **sz.to_dict()) for bs_id, sz in self.per_mbs],
            "per_slot": [r.to_dict() for r in self.per_slot],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ProvisionReport":
        per_mbs = []
        for m in d["per_mbs"]:
            B = m["battery_wslot"]
            c = _unnum(m["cost"])
            per_mbs.append((int(m["bs"]), Sizing(
                panel_area=int(m["panel_m2"]), battery_capacity=None if B is None else int(B),
                cost=c, weighted_cost=_unnum(m["weighted_cost"]), weight=float(m["weight"]),
                iterations=int(m["iterations"]), s_min=m["s_min"], s_max=m["s_max"])))
        qb = d.get("qb_bound")
        qb = None if qb is None else QosBound(
            mu_star=tuple(_unnum(v) for v in qb["mu_star"]), zeta_star=_unnum(qb["zeta_star"]),
            exact=bool(qb["exact"]))
        return cls(scheme=d["scheme"], sizer=d["sizer"], per_mbs=per_mbs,
                   total_capex=_unnum(d["total_capex"]),
                   per_slot=[SlotResult.from_dict(r) for r in d["per_slot"]], qb_bound=qb,
                   zeta=float(d["zeta"]), bias=d.get("bias"), feasible=bool(d["feasible"]),
                   diagnostics=list(d.get("diagnostics", [])))

    def sizing_csv(self) -> str:
        return sizing_csv(self.per_mbs)

    def slots_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slot", "weighted_power", "max_mu", "converged", "iterations"])
        for r in self.per_slot:
            w.writerow([r.slot, repr(r.weighted_power), repr(float(r.max_mu)),
                        int(r.converged), r.iterations])
        return buf.getvalue()


def load_report(path) -> ProvisionReport:
    with open(path) as fh:
        return ProvisionReport.from_dict(json.load(fh))


def save_report(report: ProvisionReport, path) -> None:
    atomic_write_text(path, report.to_json())


def capex_total(report: ProvisionReport) -> float:
    """Sum of the weighted per-macro costs, in macro order."""
    total = 0.0
    for _, sz in report.per_mbs:
        total += sz.weighted_cost
    return total


# --------------------------------------------------------------------------
# pipeline stages
# --------------------------------------------------------------------------

def check_zeta(scenario, rates, strict: bool = False, mode: str = "auto"):
    """QoS bound for ``scenario``; returns ``(bound, diagnostics)``.

    A threshold below the bound is a warning unless ``strict``.
    """
    diags = []
    try:
        qb = qb_lower_bound(scenario, rates, mode=mode)
    except InfeasibleError as exc:
        if strict:
            raise
        log.warning("%s", exc)
        return None, [str(exc)]
    if scenario.zeta < qb.zeta_star:
        msg = (f"zeta={scenario.zeta:g} is below the QoS bound {qb.zeta_star:.6g}; "
               "some slots may not meet it")
        if strict:
            raise InfeasibleError(msg)
        log.warning("%s", msg)
        diags.append(msg)
    return qb, diags


def balance_slots(scenario, scheme: str, rates=None, params: SolverParams | None = None,
                  bias: float = DEFAULT_BIAS, slots=None, threads: int | None = None) -> list:
    """Solve ``scheme`` on each 0-based slot in ``slots`` (all by default)."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")
    rates = rates if rates is not None else compute_rate_matrix(scenario)
    slots = range(scenario.n_slots) if slots is None else slots
    return _pool_map(lambda k: solve_scheme(scheme, k, scenario, rates, params, bias),
                     slots, threads)


def slot_diagnostics(scenario, sols) -> list:
    out = []
    stable = 1.0 - scenario.epsilon_load
    for sol in sols:
        k = sol.slot + 1
        over = np.flatnonzero(sol.loads > stable + 1e-12)
        for j in over:
            out.append(f"slot {k}: BS {scenario.base_stations[j].id} load "
                       f"{sol.loads[j]:.4f} exceeds the stability limit {stable:g}")
        if sol.scheme == "pca" and not sol.converged:
            out.append(f"slot {k}: PCA did not converge to a cap-feasible association")
    return out


def demand_profiles(scenario, sols) -> list:
    """``(bs index, DemandProfile)`` per macro from per-slot solutions in slot order."""
    loads = np.array([sol.loads for sol in sols])
    return [(j, green_demand(scenario.base_stations[j], loads[:, j], scenario.alpha,
                             scenario.solar_row(j)))
            for j in scenario.macro_indices]


def size_all(scenario, profiles, sizer: str, threads: int | None = None):
    if sizer not in SIZERS:
        raise ValueError(f"unknown sizer {sizer!r}; expected one of {', '.join(SIZER_NAMES)}")
    fn = SIZERS[sizer]

    def one(item):
        j, prof = item
        bs = scenario.base_stations[j]
        try:
            return bs.id, fn(prof, scenario.phi_s, scenario.phi_b, bs.cost_weight), None
        except SizingError as exc:
            bad = Sizing(panel_area=0, battery_capacity=None, cost=math.inf,
                         weighted_cost=math.inf, weight=bs.cost_weight)
            return bs.id, bad, f"BS {bs.id}: {exc}"

    res = _pool_map(one, profiles, threads)
    return [(bs_id, sz) for bs_id, sz, _ in res], [d for _, _, d in res if d]


def provision(scenario, scheme: str = "pca", sizer: str = "bess", *, rates=None,
              params: SolverParams | None = None, bias: float = DEFAULT_BIAS,
              strict_feasibility: bool = False, threads: int | None = None,
              solutions=None, qb: QosBound | None = None, qb_mode: str = "auto") -> ProvisionReport:
    """Balance every slot with ``scheme``, size every macro with ``sizer``.

    ``solutions`` (one per slot, in slot order) skips the balancing stage;
    ``qb`` skips the QoS bound check.
    """
    rates = rates if rates is not None else compute_rate_matrix(scenario)
    diags = []
    if qb is None:
        qb, diags = check_zeta(scenario, rates, strict_feasibility, qb_mode)
    if solutions is None:
        solutions = balance_slots(scenario, scheme, rates, params, bias, threads=threads)
    diags += slot_diagnostics(scenario, solutions)
    if strict_feasibility and any("exceeds the stability" in d for d in diags):
        raise InfeasibleError("; ".join(diags))
    per_mbs, size_diags = size_all(scenario, demand_profiles(scenario, solutions), sizer, threads)
    diags += size_diags
    slot_ok = not any(d.startswith("slot ") for d in diags)
    report = ProvisionReport(
        scheme=scheme, sizer=sizer, per_mbs=per_mbs, total_capex=0.0,
        per_slot=[SlotResult.from_solution(s) for s in solutions], qb_bound=qb,
        zeta=float(scenario.zeta), bias=float(bias) if scheme == "drb" else None,
        feasible=slot_ok and not size_diags, diagnostics=diags)
    report.total_capex = capex_total(report)
    return report


# --------------------------------------------------------------------------
# comparisons
# --------------------------------------------------------------------------

@dataclass
class Comparison:
    reports: dict  # (scheme, sizer) -> ProvisionReport
    errors: dict  # (scheme, sizer) -> message

    def ranked(self) -> list:
        """``(scheme, sizer, total_capex)`` sorted by cost, then by name."""
        rows = [(k[0], k[1], r.total_capex) for k, r in self.reports.items()]
        return sorted(rows, key=lambda t: (t[2], t[0], t[1]))

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "scheme", "sizer", "total_capex", "total_weighted_power", "max_mu",
                    "feasible"])
        for i, (sch, sz, capex) in enumerate(self.ranked(), 1):
            r = self.reports[(sch, sz)]
            w.writerow([i, sch, sz, repr(capex), repr(r.total_weighted_power),
                        repr(float(r.max_mu)), int(r.feasible)])
        for (sch, sz), msg in sorted(self.errors.items()):
            w.writerow(["", sch, sz, "", "", "", f"error: {msg}"])
        return buf.getvalue()


def compare(scenario, schemes=SCHEMES, sizers=("bess", "bm"), *, rates=None,
            params: SolverParams | None = None, bias: float = DEFAULT_BIAS,
            threads: int | None = None) -> Comparison:
    """One report per (scheme, sizer); balancing runs once per scheme."""
    rates = rates if rates is not None else compute_rate_matrix(scenario)
    qb, _ = check_zeta(scenario, rates)
    reports, errors = {}, {}
    for sch in schemes:
        try:
            sols = balance_slots(scenario, sch, rates, params, bias, threads=threads)
        except (ValueError, ArithmeticError) as exc:
            for sz in sizers:
                errors[(sch, sz)] = str(exc)
            continue
        for sz in sizers:
            try:
                reports[(sch, sz)] = provision(scenario, sch, sz, rates=rates, params=params,
                                               bias=bias, threads=threads, solutions=sols, qb=qb)
            except (ValueError, ArithmeticError) as exc:
                errors[(sch, sz)] = str(exc)
    return Comparison(reports, errors)


def bias_sweep(scenario, biases=range(1, 11), rates=None, threads: int | None = None) -> list:
    """``(bias, max_mu, weighted_power)`` for DRB over all slots."""
    rates = rates if rates is not None else compute_rate_matrix(scenario)
    rows = []
    for b in biases:
        sols = balance_slots(scenario, "drb", rates, bias=float(b), threads=threads)
        rows.append((float(b), max(s.max_mu for s in sols),
                     float(sum(s.weighted_power for s in sols))))
    return rows


def alpha_sweep(scenario, alphas=(0.2, 0.4, 0.6, 0.8, 1.0),
                solutions=(("pca", "bess"), ("drb", "bess"), ("lm", "bess")), *, rates=None,
                params: SolverParams | None = None, bias: float = DEFAULT_BIAS,
                threads: int | None = None) -> list:
    """``(alpha, scheme, sizer, total_capex)`` with a constant green fraction per run."""
    rates = rates if rates is not None else compute_rate_matrix(scenario)
    qb, _ = check_zeta(scenario, rates)
    rows = []
    for a in alphas:
        sc = scenario.with_params(alpha=float(a))
        cache = {}
        for sch, sz in solutions:
            if sch not in cache:
                cache[sch] = balance_slots(sc, sch, rates, params, bias, threads=threads)
            rep = provision(sc, sch, sz, rates=rates, params=params, bias=bias, threads=threads,
                            solutions=cache[sch], qb=qb)
            rows.append((float(a), sch, sz, rep.total_capex))
    return rows

