import numpy as np
import pytest
from hypothesis import settings

from greenprov.radio import compute_rate_matrix
from greenprov.scenario import (BaseStation, Grid, Scenario, SolarProfile, TrafficField,
                                GeneratorConfig, generate_scenario)

# fixed example streams keep the suite repeatable run to run
settings.register_profile("repeatable", derandomize=True, print_blob=True)
settings.load_profile("repeatable")

# one verdict line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


def tiny_scenario(rng, n_macro=2, n_small=0, n_pix=4, load_scale=1.0, zeta=2.0, n_slots=1,
                  pixel_size=100.0):
    """A 1-row strip of pixels with BSs dropped at random along it."""
    grid = Grid(n_pix, 1, pixel_size)
    length = n_pix * pixel_size
    bss = []
    for j in range(n_macro + n_small):
        macro = j < n_macro
        bss.append(BaseStation(
            id=j, kind="macro" if macro else "small",
            x=float(rng.uniform(0, length)), y=float(rng.uniform(-50, 150)),
            tx_power_dbm=43.0 if macro else 33.0,
            static_power=750.0 if macro else 0.0, load_power_coeff=500.0 if macro else 0.0,
            cost_weight=float(rng.uniform(0.5, 1.5)) if macro else 0.0))
    sc = Scenario(base_stations=bss,
                  traffic=TrafficField(grid, np.ones((n_slots, n_pix)), np.ones((n_slots, n_pix))),
                  solar=SolarProfile(np.ones((1, n_slots))), alpha=np.ones(n_slots), zeta=zeta)
    rates = compute_rate_matrix(sc)
    # offered traffic sized so the total load is load_scale times one cap
    best = rates.rate.max(axis=0)
    share = rng.dirichlet(np.ones(n_pix), size=n_slots)
    cap = zeta / (1 + zeta)
    offered = share * load_scale * cap * (n_macro + n_small) / np.sum(share / best, axis=1,
                                                                        keepdims=True)
    traffic = TrafficField(grid, offered / 1e6, np.full((n_slots, n_pix), 1e6))
    sc = Scenario(base_stations=bss, traffic=traffic, solar=sc.solar, alpha=sc.alpha, zeta=zeta)
    return sc, rates


@pytest.fixture(scope="session")
def default_scenario():
    return generate_scenario(GeneratorConfig())


@pytest.fixture(scope="session")
def default_rates(default_scenario):
    return compute_rate_matrix(default_scenario)


def day_profile(rng):
    """Random demand over a day with one solar hump starting at slot 1."""
    from greenprov.sizing import DemandProfile
    n = int(rng.integers(4, 25))
    m = int(rng.integers(2, n + 1))
    t = (np.arange(m) + 0.5) / m
    e = np.zeros(n)
    e[:m] = np.round(rng.uniform(1, 10) * np.sin(np.pi * t) ** rng.uniform(0.5, 2), 3)
    d = np.round(rng.uniform(0, 5, n), 2)
    return DemandProfile(d, e)


def feasible_day_profiles(seed, count):
    """``count`` day profiles that some battery can serve at the closed-form S^max."""
    from greenprov.sizing import SizingError, feasible_any_battery, s_max
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        p = day_profile(rng)
        try:
            hi = s_max(p)
        except SizingError:
            continue
        if feasible_any_battery(hi, p):
            out.append(p)
    return out


SMALL_CONFIG = dict(pixel_size=200.0, n_slots=8, n_small=6, n_macro=3, peak_traffic_bps=20e6)


@pytest.fixture(scope="session")
def small_scenario():
    return generate_scenario(GeneratorConfig(**SMALL_CONFIG))


@pytest.fixture(scope="session")
def small_rates(small_scenario):
    return compute_rate_matrix(small_scenario)
