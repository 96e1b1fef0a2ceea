import json
import math

import numpy as np
import pytest

from greenprov import provisioner as prov
from greenprov.qos import InfeasibleError
from greenprov.scenario import GeneratorConfig, generate_scenario
from greenprov.sizing import Sizing

from conftest import SMALL_CONFIG


@pytest.fixture(scope="module")
def solutions(small_scenario, small_rates):
    return {s: prov.balance_slots(small_scenario, s, small_rates) for s in prov.SCHEMES}


@pytest.fixture(scope="module")
def reports(small_scenario, small_rates, solutions):
    return {s: prov.provision(small_scenario, s, "bess", rates=small_rates,
                              solutions=solutions[s]) for s in prov.SCHEMES}


def test_report_totals(reports):
    for r in reports.values():
        assert r.feasible and not r.diagnostics
        assert r.total_capex == sum(sz.weighted_cost for _, sz in r.per_mbs)
        assert prov.capex_total(r) == r.total_capex
        assert len(r.per_slot) == 8 and len(r.per_mbs) == 3


def test_pca_respects_zeta(reports, small_scenario):
    r = reports["pca"]
    assert all(s.converged for s in r.per_slot)
    assert r.max_mu <= small_scenario.zeta + 0.05


def test_pca_cheapest(reports):
    assert reports["pca"].total_capex <= reports["drb"].total_capex
    assert reports["pca"].total_capex <= reports["lm"].total_capex
    assert reports["pca"].total_weighted_power <= reports["drb"].total_weighted_power


def test_zero_traffic_static_only():
    sc = generate_scenario(GeneratorConfig(**dict(SMALL_CONFIG, peak_traffic_bps=0.0)))
    r = prov.provision(sc, "pca", "bess")
    profiles = prov.demand_profiles(sc, prov.balance_slots(sc, "pca"))
    for _, p in profiles:
        np.testing.assert_array_equal(p.demand, 750.0)
    assert r.feasible


def test_capex_examples():
    sz = Sizing(panel_area=1, battery_capacity=1, cost=1.1, weighted_cost=2 * 1.1, weight=2.0)
    r = prov.ProvisionReport("pca", "bess", [(0, sz)], 0.0, [], None, 2.0)
    assert prov.capex_total(r) == pytest.approx(2.2)
    zero = Sizing(panel_area=5, battery_capacity=3, cost=5.1, weighted_cost=0.0, weight=0.0)
    assert prov.capex_total(prov.ProvisionReport("pca", "bess", [(0, zero)] * 3, 0.0, [],
                                                 None, 2.0)) == 0.0


def test_sweep_never_above_bess(small_scenario, small_rates, solutions):
    a = prov.provision(small_scenario, "pca", "bess", rates=small_rates,
                       solutions=solutions["pca"])
    b = prov.provision(small_scenario, "pca", "sweep", rates=small_rates,
                       solutions=solutions["pca"])
    assert b.total_capex <= a.total_capex + prov.CAPEX_ABS_TOL


def test_alpha_scaling(small_scenario, small_rates, solutions):
    costs = []
    for a in (0.2, 0.6, 1.0):
        sc = small_scenario.with_params(alpha=a)
        sols = prov.balance_slots(sc, "pca", small_rates)
        costs.append(prov.provision(sc, "pca", "bess", rates=small_rates,
                                    solutions=sols).total_capex)
    assert costs == sorted(costs)


def test_report_json_round_trip(tmp_path, reports):
    r = reports["pca"]
    p = tmp_path / "r.json"
    prov.save_report(r, p)
    back = prov.load_report(p)
    assert back.to_json() == r.to_json()
    assert json.loads(p.read_text())["total_capex"] == r.total_capex


def test_slots_csv(reports):
    lines = reports["lm"].slots_csv().splitlines()
    assert lines[0] == "slot,weighted_power,max_mu,converged,iterations"
    assert [int(l.split(",")[0]) for l in lines[1:]] == list(range(1, 9))


def test_compare_single_pair(small_scenario, small_rates, reports):
    cmp = prov.compare(small_scenario, ("pca",), ("bess",), rates=small_rates)
    assert list(cmp.reports) == [("pca", "bess")]
    assert cmp.reports[("pca", "bess")].to_json() == reports["pca"].to_json()
    assert cmp.ranked() == [("pca", "bess", reports["pca"].total_capex)]


def test_compare_collects_errors(small_scenario, small_rates):
    cmp = prov.compare(small_scenario, ("drb", "nope"), ("bess",), rates=small_rates)
    assert ("drb", "bess") in cmp.reports
    assert "unknown scheme" in cmp.errors[("nope", "bess")]
    assert "error: unknown scheme" in cmp.summary_csv()


def test_bias_sweep_rows(small_scenario, small_rates):
    rows = prov.bias_sweep(small_scenario, range(1, 11), rates=small_rates)
    assert [b for b, _, _ in rows] == [float(b) for b in range(1, 11)]
    wp = [w for _, _, w in rows]
    assert all(b <= a * (1 + 1e-6) for a, b in zip(wp, wp[1:]))


def test_zeta_below_bound(small_scenario, small_rates):
    sc = small_scenario.with_params(zeta=0.01)
    qb, diags = prov.check_zeta(sc, small_rates)
    assert diags and "below the QoS bound" in diags[0]
    with pytest.raises(InfeasibleError):
        prov.check_zeta(sc, small_rates, strict=True)


def test_overloaded_scenario_marked_infeasible():
    sc = generate_scenario(GeneratorConfig(**dict(SMALL_CONFIG, peak_traffic_bps=2e9)))
    r = prov.provision(sc, "drb", "bess")
    assert not r.feasible
    assert any("stability limit" in d for d in r.diagnostics)
    assert r.to_dict()["total_capex"] is None or math.isfinite(r.total_capex)
    with pytest.raises(InfeasibleError):
        prov.provision(sc, "drb", "bess", strict_feasibility=True)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("GREENPROV_THREADS", "2")
    assert prov.thread_count(8) == 2
    monkeypatch.setenv("GREENPROV_THREADS", "junk")
    assert prov.thread_count(3) == 3


def test_threads_do_not_change_results(small_scenario, small_rates, reports, monkeypatch):
    monkeypatch.setenv("GREENPROV_THREADS", "1")
    one = prov.provision(small_scenario, "lm", "bess", rates=small_rates)
    assert one.to_json() == reports["lm"].to_json()
