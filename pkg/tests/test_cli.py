import json
import subprocess
import sys

import pytest

from kertesz_lab import cli
from kertesz_lab.lattice import BondConfig


def run_cli(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bounds_json_report(capsys):
    code, out, _ = run_cli(["bounds", "--p", "0.55", "--q", "2"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["h_upper_rc"] == pytest.approx(0.665636426641, abs=1e-9)
    assert doc["result"]["mu"] == 12.20703125
    assert doc["config"]["p"] == 0.55
    assert doc["config"]["seed"] == 1


def test_bounds_check_dom_flag(capsys):
    code, out, _ = run_cli(["bounds", "--p", "0.55", "--q", "2",
                            "--check-dom", "0.5,2,0.3,0.5,2,0.3",
                            "--nmax", "8"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["eksplicit_condition"]["holds"] is True


def test_animals_csv_golden(capsys):
    code, out, _ = run_cli(["animals", "--n", "5", "--format", "csv"], capsys)
    assert code == 0
    rows = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert rows[0] == "n,count,mu_pow_n,kesten_ok"
    got = [r.split(",")[:2] for r in rows[1:]]
    assert got == [["1", "1"], ["2", "4"], ["3", "18"], ["4", "76"], ["5", "315"]]
    assert all(r.endswith("true") for r in rows[1:])


def test_expansion_json(capsys):
    code, out, _ = run_cli(["expansion", "--q", "2", "--h", "4"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["converged"] is True
    code, out, _ = run_cli(["expansion", "--q", "2", "--h", "3"], capsys)
    assert json.loads(out)["result"]["converged"] is False


def test_exact_subcommand_value(capsys):
    code, out, _ = run_cli(["exact", "--graph", "single", "--p", "0.5",
                            "--q", "2", "--ph", "0.5",
                            "--event", "ghost_open:0"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["value"] == pytest.approx(1 / 3, abs=1e-9)
    assert doc["result"]["partition_function"] == pytest.approx(3.0, abs=1e-9)


def test_selftest_passes(capsys):
    code, out, _ = run_cli(["selftest"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert all(item["ok"] for item in doc["result"])


def test_unknown_flag_exits_2(capsys):
    code, _, _ = run_cli(["bounds", "--p", "0.5", "--q", "2", "--bogus"], capsys)
    assert code == 2


def test_validation_error_exits_2(capsys):
    code, _, err = run_cli(["exact", "--graph", "single", "--p", "1.5",
                            "--q", "2"], capsys)
    assert code == 2
    assert "error" in err


def test_unknown_subcommand_exits_2(capsys):
    assert run_cli(["frobnicate"], capsys)[0] == 2


def test_byte_identical_reruns(capsys):
    args = ["bounds", "--p", "0.55", "--q", "2", "--seed", "7"]
    _, out1, _ = run_cli(args, capsys)
    _, out2, _ = run_cli(args, capsys)
    assert out1 == out2


def test_sample_cftp_hex_roundtrip(capsys):
    code, out, _ = run_cli(["sample", "--graph", "box2x2", "--p", "0.6",
                            "--q", "2", "--ph", "0.1", "--n", "5",
                            "--sampler", "cftp", "--seed", "3"], capsys)
    assert code == 0
    doc = json.loads(out)
    g = None
    from kertesz_lab import catalog
    g = catalog.make_graph("box2x2")
    for h in doc["result"]["configs_hex"]:
        cfg = BondConfig.from_hex(h, g)
        assert len(cfg.bits) == g.n_edges
    # deterministic rerun
    _, out2, _ = run_cli(["sample", "--graph", "box2x2", "--p", "0.6",
                          "--q", "2", "--ph", "0.1", "--n", "5",
                          "--sampler", "cftp", "--seed", "3"], capsys)
    assert out == out2


def test_sample_cftp_timeout_exits_3(capsys):
    code, _, err = run_cli(["sample", "--graph", "square", "--p", "0.7",
                            "--q", "50", "--ph", "0.005", "--n", "50",
                            "--sampler", "cftp", "--t-max", "2",
                            "--seed", "0"], capsys)
    assert code == 3
    assert "unresolved" in err


def test_config_file_merging(tmp_path, capsys):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("# demo config\np=0.55\nq=2\nseed=99\n")
    code, out, _ = run_cli(["bounds", "--config", str(cfgfile), "--q", "3"],
                           capsys)
    assert code == 0
    doc = json.loads(out)
    # flag overrides file; file fills the rest
    assert doc["config"]["q"] == 3.0
    assert doc["config"]["p"] == 0.55
    assert doc["config"]["seed"] == 99


def test_config_file_rejects_unknown_key(tmp_path, capsys):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("nonsense=1\n")
    code, _, err = run_cli(["bounds", "--config", str(cfgfile), "--p", "0.5",
                            "--q", "2"], capsys)
    assert code == 2


def test_out_file_and_csv(tmp_path, capsys):
    path = tmp_path / "report.csv"
    code, out, _ = run_cli(["bounds", "--p", "0.55", "--q", "2",
                            "--format", "csv", "--out", str(path)], capsys)
    assert code == 0 and out == ""
    text = path.read_text()
    assert text.startswith("# kertesz-lab")
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert lines[0].startswith("p,q,d,")


def test_curve_upper_csv(capsys):
    code, out, _ = run_cli(["curve", "--kind", "upper", "--q-list", "1.1,2,10",
                            "--p-steps", "5", "--format", "csv"], capsys)
    assert code == 0
    rows = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert rows[0] == "q,p,h_upper_rc,h_upper_bern"
    assert len(rows) == 1 + 3 * 5


def test_curve_h0_csv(capsys):
    code, out, _ = run_cli(["curve", "--kind", "h0", "--q-min", "1.1",
                            "--q-max", "4", "--q-steps", "7",
                            "--format", "csv"], capsys)
    assert code == 0
    rows = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert rows[0] == "q,h0"
    vals = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(b > a for a, b in zip(vals, vals[1:]))  # h0 increasing in q


def test_scan_tiny_csv(capsys):
    code, out, _ = run_cli(["scan", "--p-grid", "0.55", "--q", "2",
                            "--sizes", "6", "--tol-h", "0.2",
                            "--samples", "600", "--burn-in", "64",
                            "--delta-override", "0.01", "--k-max", "2",
                            "--pipeline-samples", "300",
                            "--format", "csv", "--seed", "4"], capsys)
    assert code in (0, 3)
    rows = [ln for ln in out.splitlines() if not ln.startswith("#")]
    from kertesz_lab.kertesz import SCAN_CSV_HEADER
    assert rows[0] == SCAN_CSV_HEADER
    assert len(rows) == 2


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "kertesz_lab.cli",
                           "--version"], capture_output=True, text=True)
    assert proc.returncode == 0


def test_bounds_measure_decay_resolves_pipeline(capsys):
    code, out, _ = run_cli(["bounds", "--p", "0.4", "--q", "2",
                            "--measure-decay", "400", "--k-max", "3",
                            "--delta-override", "0.01", "--seed", "2"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["k_star"] is not None
    assert doc["result"]["h_lower"] not in (None, "inf")


def test_sample_heat_bath_path(capsys):
    code, out, _ = run_cli(["sample", "--rect", "4,3", "--p", "0.5", "--q", "2",
                            "--ph", "0.2", "--n", "4", "--sampler", "heat_bath",
                            "--burn-in", "32", "--seed", "6"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert len(doc["result"]["configs_hex"]) == 4
