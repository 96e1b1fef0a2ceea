"""Balance traffic and size solar+battery systems for macro cells.

Sub-commands: generate, balance, size, provision, compare, report. Every
command except ``generate`` and ``report`` takes ``--scenario FILE``;
without it the default scenario for ``--seed`` is generated in memory.
``--out`` is a file for ``generate`` and a directory for everything else.

Exit codes: 0 ok, 1 infeasible, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from .qos import InfeasibleError, latency_or_inf
from .radio import CoverageError, compute_rate_matrix
from .scenario import (GeneratorConfig, ScenarioError, atomic_write_text, dumps_scenario,
                       generate_scenario, load_scenario, save_scenario)
from .sizing import SizingError
from . import provisioner as prov

log = logging.getLogger("greenprov")

FIGURES = ("dual_trace", "bias_sweep", "scheme_comparison", "cost_vs_alpha")
DEFAULT_ALPHAS = (0.2, 0.4, 0.6, 0.8, 1.0)


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# comparison bundle (what `compare` writes and `report` reads back)
# --------------------------------------------------------------------------

def comparison_to_dict(cmp: prov.Comparison, bias_rows=None, alpha_rows=None) -> dict:
    return {
        "kind": "comparison",
        "ranking": [{"scheme": s, "sizer": z, "total_capex": prov._num(c)}
                    for s, z, c in cmp.ranked()],
        "reports": {f"{s}/{z}": r.to_dict() for (s, z), r in sorted(cmp.reports.items())},
        "errors": {f"{s}/{z}": m for (s, z), m in sorted(cmp.errors.items())},
        "bias_sweep": [{"bias": b, "max_mu": prov._num(m), "weighted_power": w}
                       for b, m, w in (bias_rows or [])],
        "alpha_sweep": [{"alpha": a, "scheme": s, "sizer": z, "total_capex": prov._num(c)}
                        for a, s, z, c in (alpha_rows or [])],
    }


def _load_any(path):
    with open(path) as fh:
        d = json.load(fh)
    if d.get("kind") == "comparison":
        return d
    return prov.ProvisionReport.from_dict(d)


# --------------------------------------------------------------------------
# plot data
# --------------------------------------------------------------------------

def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return "inf" if x is None else repr(float(x))


def _reports_of(report) -> list:
    if isinstance(report, prov.ProvisionReport):
        return [report]
    if isinstance(report, prov.Comparison):
        return [r for _, r in sorted(report.reports.items())]
    return [prov.ProvisionReport.from_dict(r) for _, r in sorted(report["reports"].items())]


def emit_plot_data(report, figure_id: str, out, slot: int | None = None) -> Path:
    """Write the CSV series behind one figure.

    ``report`` is a :class:`ProvisionReport` or a comparison bundle dict.
    ``slot`` (1-based) picks the dual trace; the default is the slot with
    the largest weighted power.
    """
    if figure_id not in FIGURES:
        raise UsageError(f"unknown figure id {figure_id!r}; valid ids: {', '.join(FIGURES)}")
    if figure_id == "dual_trace":
        reps = [r for r in _reports_of(report) if r.scheme == "pca"]
        if not reps:
            raise UsageError("dual_trace needs a PCA report")
        rows_src = reps[0].per_slot
        if slot is None:
            pick = max(rows_src, key=lambda r: (r.weighted_power, -r.slot))
        else:
            match = [r for r in rows_src if r.slot == slot]
            if not match:
                raise UsageError(f"slot {slot} is not in the report")
            pick = match[0]
        text = _csv_text(["iter", "g"], [(i + 1, repr(g)) for i, g in enumerate(pick.dual_trace)])
    elif figure_id == "scheme_comparison":
        rows = []
        seen = set()
        for r in _reports_of(report):
            # sizers share the balancing result, one block per scheme is enough
            if r.scheme in seen:
                continue
            seen.add(r.scheme)
            rows += [(r.scheme, s.slot, _fmt(prov._num(s.max_mu)), repr(s.weighted_power))
                     for s in r.per_slot]
        text = _csv_text(["scheme", "slot", "max_mu", "weighted_power"], rows)
    elif figure_id == "bias_sweep":
        series = report.get("bias_sweep") if isinstance(report, dict) else None
        if not series:
            raise UsageError("bias_sweep needs a comparison bundle with a bias sweep")
        text = _csv_text(["bias", "max_mu", "weighted_power"],
                         [(repr(r["bias"]), _fmt(r["max_mu"]), repr(r["weighted_power"]))
                          for r in series])
    else:
        series = report.get("alpha_sweep") if isinstance(report, dict) else None
        if not series:
            raise UsageError("cost_vs_alpha needs a comparison bundle run with --alpha sweep")
        text = _csv_text(["alpha", "solution", "total_capex"],
                         [(repr(r["alpha"]), f"{r['scheme']}+{r['sizer']}",
                           _fmt(r["total_capex"])) for r in series])
    out = Path(out)
    atomic_write_text(out, text)
    return out


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------

def _slot_arg(text: str):
    if text == "all":
        return "all"
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a slot number or 'all', got {text!r}")
    if k < 1:
        raise argparse.ArgumentTypeError("slots are numbered from 1")
    return k


def _alpha_arg(text: str):
    if text == "sweep":
        return "sweep"
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number in [0, 1] or 'sweep', got {text!r}")
    if not 0.0 <= a <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must be in [0, 1], got {a}")
    return a


def _seed_arg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="greenprov", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(sp, scheme=True, sizer=False, multi=False):
        sp.add_argument("--scenario", type=Path, help="scenario JSON (default: generate one)")
        sp.add_argument("--seed", type=_seed_arg, default=0,
                        help="generator seed when no --scenario is given")
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        sp.add_argument("--zeta", type=_positive, help="override the latency threshold")
        sp.add_argument("--bias", type=_positive, default=prov.DEFAULT_BIAS,
                        help="small-cell rate bias for DRB")
        if scheme:
            kw = dict(action="append") if multi else dict(default="pca")
            sp.add_argument("--scheme", choices=prov.SCHEMES, **kw)
        if sizer:
            kw = dict(action="append") if multi else dict(default="bess")
            sp.add_argument("--sizer", choices=prov.SIZER_NAMES, **kw)

    g = sub.add_parser("generate", help="write a synthetic scenario")
    g.add_argument("--out", type=Path, required=True, help="scenario JSON path")
    g.add_argument("--seed", type=_seed_arg, default=0)
    g.add_argument("--zeta", type=_positive)
    g.add_argument("--alpha", type=_alpha_arg)
    g.add_argument("--csv-series", action="store_true",
                   help="store traffic and solar series in side CSV files")

    b = sub.add_parser("balance", help="associate pixels for one or all slots")
    common(b)
    b.add_argument("--alpha", type=_alpha_arg)
    b.add_argument("--slot", type=_slot_arg, default="all")

    s = sub.add_parser("size", help="balance every slot, then size each macro BS")
    common(s, sizer=True)
    s.add_argument("--alpha", type=_alpha_arg)
    s.add_argument("--strict-feasibility", action="store_true")

    pv = sub.add_parser("provision", help="full pipeline with report and plot data")
    common(pv, sizer=True)
    pv.add_argument("--alpha", type=_alpha_arg)
    pv.add_argument("--strict-feasibility", action="store_true")

    c = sub.add_parser("compare", help="every scheme x sizer pair, ranked")
    common(c, sizer=True, multi=True)
    c.add_argument("--alpha", type=_alpha_arg, help="a fixed fraction, or 'sweep'")

    r = sub.add_parser("report", help="emit plot data from a saved report")
    r.add_argument("--report", type=Path, required=True)
    r.add_argument("--figure", required=True, help=f"one of {', '.join(FIGURES)} or 'all'")
    r.add_argument("--slot", type=_slot_arg, default="all", help="slot for dual_trace")
    r.add_argument("--out", type=Path, required=True, help="output directory")
    return p


def _scenario(args):
    if args.scenario is not None:
        if not args.scenario.exists():
            raise UsageError(f"--scenario: no such file {args.scenario}")
        sc = load_scenario(args.scenario)
    else:
        sc = generate_scenario(GeneratorConfig(seed=args.seed))
    kw = {}
    if getattr(args, "zeta", None) is not None:
        kw["zeta"] = args.zeta
    alpha = getattr(args, "alpha", None)
    if alpha is not None and alpha != "sweep":
        kw["alpha"] = alpha
    return sc.with_params(**kw) if kw else sc


def _outdir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_generate(args) -> int:
    sc = generate_scenario(GeneratorConfig(seed=args.seed))
    over = {}
    if args.zeta is not None:
        over["zeta"] = args.zeta
    if args.alpha is not None:
        if args.alpha == "sweep":
            raise UsageError("--alpha sweep is only valid for compare")
        over["alpha"] = args.alpha
    if over:
        sc = sc.with_params(**over)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    if args.csv_series:
        save_scenario(sc, args.out, csv_series=True)
    else:
        atomic_write_text(args.out, dumps_scenario(sc))
    print(f"wrote {args.out}")
    return 0


def _cmd_balance(args) -> int:
    sc = _scenario(args)
    out = _outdir(args.out)
    if args.slot != "all" and args.slot > sc.n_slots:
        raise UsageError(f"--slot {args.slot} is past the last slot {sc.n_slots}")
    slots = range(sc.n_slots) if args.slot == "all" else [args.slot - 1]
    rates = compute_rate_matrix(sc)
    sols = prov.balance_slots(sc, args.scheme, rates, bias=args.bias, slots=slots)
    ids = [bs.id for bs in sc.base_stations]
    assoc = [(s.slot + 1, x, ids[j]) for s in sols for x, j in enumerate(s.association.serving)]
    atomic_write_text(out / "association.csv", _csv_text(["slot", "pixel", "bs"], assoc))
    theta = [bs.theta2_half for bs in sc.base_stations]
    load_rows = []
    for s in sols:
        mu = latency_or_inf(s.loads, theta)
        load_rows += [(s.slot + 1, ids[j], repr(float(s.loads[j])), repr(float(mu[j])))
                      for j in range(len(ids))]
    atomic_write_text(out / "loads.csv", _csv_text(["slot", "bs", "load", "mu"], load_rows))
    print(f"{'slot':>4} {'weighted_power':>15} {'max_mu':>9} converged")
    for s in sols:
        print(f"{s.slot + 1:>4} {s.weighted_power:>15.3f} {s.max_mu:>9.4f} {s.converged}")
    diags = prov.slot_diagnostics(sc, sols)
    for d in diags:
        print(d, file=sys.stderr)
    return 1 if diags else 0


def _provision(args):
    sc = _scenario(args)
    return prov.provision(sc, args.scheme, args.sizer, bias=args.bias,
                          strict_feasibility=args.strict_feasibility)


def _print_sizing(report) -> None:
    print(f"{'bs':>3} {'panel_m2':>9} {'battery_wslot':>14} {'cost':>12} {'weighted':>12}")
    for bs_id, sz in report.per_mbs:
        B = "inf" if sz.battery_capacity is None else str(sz.battery_capacity)
        print(f"{bs_id:>3} {sz.panel_area:>9} {B:>14} {sz.cost:>12.2f} {sz.weighted_cost:>12.2f}")
    print(f"total weighted CAPEX: {report.total_capex:.4f}")


def _cmd_size(args) -> int:
    report = _provision(args)
    out = _outdir(args.out)
    atomic_write_text(out / "sizing.csv", report.sizing_csv())
    _print_sizing(report)
    for d in report.diagnostics:
        print(d, file=sys.stderr)
    return 0 if report.feasible else 1


def _cmd_provision(args) -> int:
    report = _provision(args)
    out = _outdir(args.out)
    prov.save_report(report, out / "report.json")
    atomic_write_text(out / "sizing.csv", report.sizing_csv())
    atomic_write_text(out / "slots.csv", report.slots_csv())
    emit_plot_data(report, "scheme_comparison", out / "scheme_comparison.csv")
    if report.scheme == "pca":
        emit_plot_data(report, "dual_trace", out / "dual_trace.csv")
    _print_sizing(report)
    for d in report.diagnostics:
        print(d, file=sys.stderr)
    return 0 if report.feasible else 1


def _cmd_compare(args) -> int:
    sc = _scenario(args)
    out = _outdir(args.out)
    schemes = tuple(dict.fromkeys(args.scheme or prov.SCHEMES))
    sizers = tuple(dict.fromkeys(args.sizer or ("bess", "bm", "sweep")))
    rates = compute_rate_matrix(sc)
    cmp = prov.compare(sc, schemes, sizers, rates=rates, bias=args.bias)
    bias_rows = prov.bias_sweep(sc, range(1, 11), rates=rates)
    alpha_rows = None
    if args.alpha == "sweep":
        pairs = tuple((s, z) for s in schemes for z in sizers)
        alpha_rows = prov.alpha_sweep(sc, DEFAULT_ALPHAS, pairs, rates=rates, bias=args.bias)
    bundle = comparison_to_dict(cmp, bias_rows, alpha_rows)
    atomic_write_text(out / "compare.json",
                      json.dumps(bundle, indent=2, sort_keys=True, allow_nan=False) + "\n")
    atomic_write_text(out / "summary.csv", cmp.summary_csv())
    for fig in ("scheme_comparison", "bias_sweep") + (("cost_vs_alpha",) if alpha_rows else ()):
        emit_plot_data(bundle, fig, out / f"{fig}.csv")
    if "pca" in schemes and cmp.reports:
        emit_plot_data(bundle, "dual_trace", out / "dual_trace.csv")
    print(f"{'rank':>4} {'scheme':>6} {'sizer':>6} {'total_capex':>14}")
    for i, (s, z, c) in enumerate(cmp.ranked(), 1):
        print(f"{i:>4} {s:>6} {z:>6} {c:>14.4f}")
    for key, msg in sorted(cmp.errors.items()):
        print(f"{key[0]}/{key[1]}: {msg}", file=sys.stderr)
    infeasible = cmp.errors or any(not r.feasible for r in cmp.reports.values())
    return 1 if infeasible else 0


def _cmd_report(args) -> int:
    if not args.report.exists():
        raise UsageError(f"--report: no such file {args.report}")
    rep = _load_any(args.report)
    out = _outdir(args.out)
    figs = FIGURES if args.figure == "all" else (args.figure,)
    slot = None if args.slot == "all" else args.slot
    for fig in figs:
        try:
            path = emit_plot_data(rep, fig, out / f"{fig}.csv", slot=slot)
        except UsageError:
            if args.figure == "all":
                continue
            raise
        print(f"wrote {path}")
    return 0


COMMANDS = {"generate": _cmd_generate, "balance": _cmd_balance, "size": _cmd_size,
            "provision": _cmd_provision, "compare": _cmd_compare, "report": _cmd_report}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"greenprov: error: {exc}", file=sys.stderr)
        return 2
    except (ScenarioError, json.JSONDecodeError, KeyError) as exc:
        print(f"greenprov: invalid input: {exc}", file=sys.stderr)
        return 2
    except (InfeasibleError, SizingError, CoverageError) as exc:
        print(f"greenprov: infeasible: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
