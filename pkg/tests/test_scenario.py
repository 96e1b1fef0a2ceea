import json

import numpy as np
import pytest

from greenprov.scenario import (BaseStation, GeneratorConfig, Scenario, ScenarioError,
                                diurnal_level, dumps_scenario, generate_scenario, load_scenario,
                                loads_scenario, save_scenario, scenario_to_dict, solar_curve,
                                validate)


def test_default_config(default_scenario):
    s = default_scenario
    macros = [bs for bs in s.base_stations if bs.is_macro]
    smalls = [bs for bs in s.base_stations if not bs.is_macro]
    assert len(macros) == 5 and len(smalls) == 15
    assert all(bs.static_power == 750 and bs.load_power_coeff == 500 for bs in macros)
    assert all(bs.cost_weight == 0 for bs in smalls)
    assert s.traffic.grid.n_pixels == 1600
    assert s.n_slots == 48
    assert validate(s) == []


def test_zero_traffic_single_macro():
    s = generate_scenario(GeneratorConfig(n_slots=1, n_macro=1, n_small=0, peak_traffic_bps=0.0))
    assert s.n_slots == 1 and s.n_bs == 1
    assert np.all(s.traffic.offered_bps(0) == 0)


def test_same_seed_byte_identical():
    a = dumps_scenario(generate_scenario(GeneratorConfig(seed=3, pixel_size=200.0)))
    b = dumps_scenario(generate_scenario(GeneratorConfig(seed=3, pixel_size=200.0)))
    c = dumps_scenario(generate_scenario(GeneratorConfig(seed=4, pixel_size=200.0)))
    assert a == b
    assert a != c


@pytest.mark.parametrize("kw, field", [
    ({"n_macro": 0}, "n_macro"),
    ({"pixel_size": 5000.0}, "pixel"),
    ({"peak_traffic_bps": -1.0}, "peak_traffic_bps"),
    ({"zeta": 0.0}, "zeta"),
])
def test_bad_config_names_field(kw, field):
    with pytest.raises(ScenarioError, match=field):
        generate_scenario(GeneratorConfig(**kw))


def test_round_trip_json(tmp_path):
    s = generate_scenario(GeneratorConfig(pixel_size=200.0, seed=1))
    p = tmp_path / "s.json"
    save_scenario(s, p)
    assert load_scenario(p) == s


def test_round_trip_csv_series(tmp_path):
    s = generate_scenario(GeneratorConfig(pixel_size=200.0, seed=2))
    p = tmp_path / "s.json"
    save_scenario(s, p, csv_series=True)
    assert (tmp_path / "s_solar.csv").exists() and (tmp_path / "s_traffic.csv").exists()
    back = load_scenario(p)
    assert back.n_slots == 48
    assert back == s


def _dict():
    return scenario_to_dict(generate_scenario(GeneratorConfig(pixel_size=400.0, n_small=2)))


def test_small_bs_with_weight_rejected():
    d = _dict()
    small = next(i for i, bs in enumerate(d["base_stations"]) if bs["kind"] == "small")
    d["base_stations"][small]["cost_weight"] = 0.5
    with pytest.raises(ScenarioError, match=rf"base_stations\[{small}\].*small BS cost_weight"):
        loads_scenario(json.dumps(d))


def test_alpha_out_of_range_rejected():
    d = _dict()
    d["alpha"][3] = 1.2
    with pytest.raises(ScenarioError, match=r"alpha\[slot 3\]"):
        loads_scenario(json.dumps(d))


def test_slot_count_mismatch_rejected():
    d = _dict()
    d["solar"]["e"] = [row[:-1] for row in d["solar"]["e"]]
    with pytest.raises(ScenarioError, match="slot-count mismatch"):
        loads_scenario(json.dumps(d))


def test_malformed_json_reports_position():
    with pytest.raises(ScenarioError, match=r"<string>:1:"):
        loads_scenario("{not json")


def test_validate_zeta_zero(default_scenario):
    assert validate(default_scenario.with_params(zeta=0.0)) == ["zeta must be > 0"]


def test_validate_negative_solar_names_slot(default_scenario):
    e = default_scenario.solar.e.copy()
    e[:, 5] = -1.0
    s = default_scenario.with_params(solar=type(default_scenario.solar)(e, shared=True))
    v = validate(s)
    assert v and all("slot 5" in m for m in v)


def test_validate_needs_macro():
    bs = BaseStation(id=0, kind="small", x=0.0, y=0.0, tx_power_dbm=30.0)
    s0 = generate_scenario(GeneratorConfig(pixel_size=400.0, n_small=0, n_macro=1))
    s = Scenario(base_stations=(bs,), traffic=s0.traffic, solar=s0.solar, alpha=s0.alpha)
    assert any("macro" in m for m in validate(s))


def test_solar_curve_zero_at_night():
    h = np.array([0.0, 6.0, 7.0, 13.0, 19.0, 23.5])
    e = solar_curve(h, 200.0)
    assert e[0] == e[1] == e[2] == e[4] == e[5] == 0
    assert e[3] == pytest.approx(200.0)


def test_diurnal_peak_in_evening():
    h = np.arange(0, 24, 0.5)
    lv = diurnal_level(h)
    assert 19 <= h[np.argmax(lv)] <= 22
    assert lv.min() > 0


def test_generated_scenario_frozen(default_scenario):
    with pytest.raises(ValueError):
        default_scenario.traffic.arrival_rate[0, 0] = 1.0
