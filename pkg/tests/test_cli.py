import csv
import io
import json

import pytest

from ebcache.cli import main

TWO_USER = {"K": 2, "N": 2, "delta": [0.25, 0.5], "mem": [2 / 3, 4 / 3],
        "file_sizes": [1, 1]}
SYM3 = {"K": 3, "N": 3, "delta": [0.5, 0.5, 0.5], "mem": [1.5, 1.5, 1.5],
        "file_sizes": [1000, 1000, 1000]}


@pytest.fixture
def two_user(tmp_path):
    path = tmp_path / "two_user.json"
    path.write_text(json.dumps(TWO_USER))
    return str(path)


@pytest.fixture
def sym3(tmp_path):
    path = tmp_path / "sym3.json"
    path.write_text(json.dumps(SYM3))
    return str(path)


def run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


def test_region_emits_reference_coefficients(capsys, two_user):
    code, out = run(capsys, ["region", "--config", two_user])
    assert code == 0
    doc = json.loads(out)
    assert doc["coeffs"]["w1"] == pytest.approx(8 / 9, abs=1e-9)
    assert doc["coeffs"]["w12"] == pytest.approx(16 / 63, abs=1e-9)
    assert doc["coeffs"]["w2"] == pytest.approx(2 / 3, abs=1e-9)
    assert len(doc["inequalities"]) == 2


def test_feasible_verb(capsys, two_user):
    code, out = run(capsys, ["feasible", "--config", two_user,
                             "--rates", "0.78,1.20"])
    assert code == 0
    assert json.loads(out)["feasible"] is True


def test_ttot_verb_reports_gap_field(capsys, two_user):
    code, out = run(capsys, ["ttot", "--config", two_user])
    doc = json.loads(out)
    assert code == 0
    assert doc["ttot_closed_form"] == pytest.approx(8 / 7, abs=1e-9)
    assert doc["maximizer"] == [1, 2]
    assert doc["gap"] == pytest.approx(0.0, abs=1e-9)


def test_plan_verb(capsys, two_user):
    code, out = run(capsys, ["plan", "--config", two_user])
    assert code == 0
    doc = json.loads(out)
    assert doc["total"] == pytest.approx(8 / 7, abs=1e-9)


def test_simulate_full_with_trace_and_export(capsys, tmp_path, two_user):
    trace = tmp_path / "trace.csv"
    export = tmp_path / "pm.json"
    code, out = run(capsys, [
        "simulate", "--config", two_user, "--seed", "1", "--F", "200",
        "--trace", str(trace), "--export-placement", str(export)])
    assert code == 0
    doc = json.loads(out)
    assert doc["decode_ok"] == [True, True]
    assert doc["slots_total"] >= 1
    with open(trace, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["slot", "subphase", "receivers", "action"]
    assert len(rows) == doc["slots_total"] + 1
    assert {r[3] for r in rows[1:]} <= {"deliver", "promote", "waste"}
    pm_doc = json.loads(export.read_text())
    assert pm_doc["scheme"] == "decentralized"
    assert len(pm_doc["files"][0]) == 200


def test_simulate_length_only(capsys, sym3):
    code, out = run(capsys, ["simulate", "--config", sym3, "--seed", "2",
                             "--length-only"])
    assert code == 0
    doc = json.loads(out)
    assert doc["decode_ok"] is None
    assert 1.2 < doc["slots_per_file_unit"] < 1.8


def test_simulate_start_phase_skips_lower_pools(capsys, two_user):
    code, out = run(capsys, ["simulate", "--config", two_user, "--F", "100",
                             "--length-only", "--start-phase", "2"])
    assert code == 0
    doc = json.loads(out)
    assert all(not k.startswith("[1]") for k in doc["slots_per_subphase"])


def test_sweep_csv_header_and_round_trip(capsys, tmp_path):
    base = tmp_path / "base.json"
    base.write_text(json.dumps({"K": 2, "N": 4, "delta": [0.4, 0.4],
                                "mem": [0, 0], "file_sizes": [1, 1, 1, 1]}))
    code, out = run(capsys, ["sweep", "--config", str(base), "--vary", "mem",
                             "--grid", "0,2,4", "--trials", "2", "--F", "400",
                             "--seed", "1", "--jobs", "1", "--output", "csv"])
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["param", "T_fb", "T_nofb", "T_cent", "T_sim_mean",
                       "T_sim_ci95", "trials", "F", "seed"]
    assert len(rows) == 4
    # full caches leave nothing to send
    assert float(rows[3][1]) == 0.0


def test_optimize_mem_verb(capsys, tmp_path):
    base = tmp_path / "opt.json"
    base.write_text(json.dumps({"K": 2, "N": 4, "delta": [0.2, 0.6],
                                "mem": [0, 0], "file_sizes": [1, 1, 1, 1]}))
    code, out = run(capsys, ["optimize-mem", "--config", str(base),
                             "--budget", "4", "--step", "1"])
    assert code == 0
    doc = json.loads(out)
    assert sum(doc["mem"]) == pytest.approx(4.0)
    assert doc["lower_bound"] <= doc["objective"] + 1e-9


def test_verify_verb_passes(capsys):
    code, out = run(capsys, ["verify", "--K", "4", "--samples", "60",
                             "--seed", "7"])
    assert code == 0
    doc = json.loads(out)
    assert doc["ok"] is True
    assert doc["max_residual"] < 1e-9


def test_missing_config_file_is_exit_1(capsys):
    assert main(["region", "--config", "/nonexistent.json"]) == 1


def test_invalid_config_is_exit_1(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"K": 2, "N": 2, "delta": [0.2, 1.0],
                               "mem": [0, 0], "file_sizes": [1, 1]}))
    assert main(["region", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "delta[2]" in err


def test_unknown_config_key_is_exit_1(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"K": 2, "N": 2, "delta": [0.2, 0.2],
                               "mem": [0, 0], "file_sizes": [1, 1],
                               "oops": 1}))
    assert main(["region", "--config", str(bad)]) == 1


def test_decode_failure_is_exit_2(capsys, tmp_path):
    cfgp = tmp_path / "q2.json"
    cfgp.write_text(json.dumps({"K": 2, "N": 2, "delta": [0.2, 0.2],
                                "mem": [1, 1], "file_sizes": [24, 24],
                                "field_order": 2}))
    code = main(["simulate", "--config", str(cfgp), "--seed", "0",
                 "--cleanup-budget", "0"])
    assert code == 2


def test_numeric_output_rounded_to_twelve_significant_digits(capsys, two_user):
    code, out = run(capsys, ["ttot", "--config", two_user])
    doc = json.loads(out)
    # 8/7 = 1.142857142857142857... rounded at the 12th significant digit
    assert doc["ttot_closed_form"] == 1.14285714286
