import csv
import json

import pytest

from greenprov import cli
from greenprov.provisioner import load_report
from greenprov.scenario import dumps_scenario


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def scen_file(tmp_path_factory, small_scenario):
    p = tmp_path_factory.mktemp("scen") / "small.json"
    p.write_text(dumps_scenario(small_scenario))
    return p


@pytest.fixture(scope="module")
def provisioned(tmp_path_factory, scen_file):
    out = tmp_path_factory.mktemp("prov")
    before = scen_file.read_bytes()
    assert cli.run(["provision", "--scenario", str(scen_file), "--out", str(out)]) == 0
    assert scen_file.read_bytes() == before
    return out


@pytest.fixture(scope="module")
def compared(tmp_path_factory, scen_file):
    out = tmp_path_factory.mktemp("cmp")
    code = cli.run(["compare", "--scenario", str(scen_file), "--out", str(out),
                    "--sizer", "bess", "--alpha", "sweep"])
    assert code == 0
    return out


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.run(["generate", "--out", str(a), "--seed", "7"]) == 0
    assert cli.run(["generate", "--out", str(b), "--seed", "7"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())


def test_generate_rejects_alpha_sweep(tmp_path, capsys):
    assert cli.run(["generate", "--out", str(tmp_path / "s.json"), "--alpha", "sweep"]) == 2
    assert "only valid for compare" in capsys.readouterr().err


def test_provision_outputs(provisioned):
    names = {p.name for p in provisioned.iterdir()}
    assert {"report.json", "sizing.csv", "slots.csv", "dual_trace.csv",
            "scheme_comparison.csv"} <= names
    rep = load_report(provisioned / "report.json")
    assert rep.scheme == "pca" and rep.feasible
    trace = _rows(provisioned / "dual_trace.csv")
    assert trace[0] == ["iter", "g"]
    hottest = max(rep.per_slot, key=lambda s: (s.weighted_power, -s.slot))
    assert len(trace) - 1 == hottest.iterations == len(hottest.dual_trace)
    assert len(_rows(provisioned / "sizing.csv")) == 1 + 3


def test_report_figures(provisioned, tmp_path):
    rep = load_report(provisioned / "report.json")
    assert cli.run(["report", "--report", str(provisioned / "report.json"),
                    "--figure", "dual_trace", "--slot", "2", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "dual_trace.csv")
    assert len(rows) - 1 == rep.per_slot[1].iterations
    assert cli.run(["report", "--report", str(provisioned / "report.json"),
                    "--figure", "all", "--out", str(tmp_path / "all")]) == 0
    assert {p.name for p in (tmp_path / "all").iterdir()} == {"dual_trace.csv",
                                                              "scheme_comparison.csv"}


def test_report_unknown_figure(provisioned, tmp_path, capsys):
    code = cli.run(["report", "--report", str(provisioned / "report.json"),
                    "--figure", "fig7", "--out", str(tmp_path)])
    assert code == 2
    assert "valid ids" in capsys.readouterr().err


def test_report_missing_file(tmp_path):
    assert cli.run(["report", "--report", str(tmp_path / "none.json"),
                    "--figure", "all", "--out", str(tmp_path)]) == 2


def test_balance_single_slot(scen_file, tmp_path):
    code = cli.run(["balance", "--scenario", str(scen_file), "--scheme", "drb", "--bias", "4",
                    "--slot", "3", "--out", str(tmp_path)])
    assert code == 0
    assoc = _rows(tmp_path / "association.csv")
    assert assoc[0] == ["slot", "pixel", "bs"]
    assert {r[0] for r in assoc[1:]} == {"3"}
    loads = _rows(tmp_path / "loads.csv")
    assert len(loads) == 1 + 9


def test_balance_slot_out_of_range(scen_file, tmp_path):
    assert cli.run(["balance", "--scenario", str(scen_file), "--slot", "99",
                    "--out", str(tmp_path)]) == 2
    assert cli.run(["balance", "--scenario", str(scen_file), "--slot", "0",
                    "--out", str(tmp_path)]) == 2


def test_bad_arguments(tmp_path):
    assert cli.run([]) == 2
    assert cli.run(["size", "--out", str(tmp_path), "--sizer", "magic"]) == 2
    assert cli.run(["size", "--scenario", str(tmp_path / "x.json"), "--out", str(tmp_path)]) == 2


def test_malformed_scenario(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.run(["size", "--scenario", str(p), "--out", str(tmp_path)]) == 2


def test_size_command(scen_file, tmp_path, capsys):
    assert cli.run(["size", "--scenario", str(scen_file), "--scheme", "lm", "--sizer", "bm",
                    "--out", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / "sizing.csv")) == 4
    assert "total" in capsys.readouterr().out.lower()


def test_compare_outputs(compared):
    names = {p.name for p in compared.iterdir()}
    assert {"compare.json", "summary.csv", "scheme_comparison.csv", "bias_sweep.csv",
            "cost_vs_alpha.csv", "dual_trace.csv"} <= names
    assert len(_rows(compared / "bias_sweep.csv")) == 1 + 10
    alpha = _rows(compared / "cost_vs_alpha.csv")
    assert alpha[0] == ["alpha", "solution", "total_capex"]
    assert len(alpha) == 1 + 5 * 3
    summary = _rows(compared / "summary.csv")
    assert len(summary) == 1 + 3


def test_report_reads_comparison_bundle(compared, tmp_path):
    assert cli.run(["report", "--report", str(compared / "compare.json"),
                    "--figure", "all", "--out", str(tmp_path)]) == 0
    for fig in cli.FIGURES:
        assert (tmp_path / f"{fig}.csv").read_bytes() == (compared / f"{fig}.csv").read_bytes()
