import json
import subprocess
import sys

import pytest

from pbvcharge.cli import main
from pbvcharge.errors import OutputError
from pbvcharge.output import render, write_results
from pbvcharge.reproduce import run_reproduction

CONFIG = "configs/default.yaml"


@pytest.fixture(scope="module")
def mech_bundle(cfg):
    return run_reproduction("mechanism", cfg, 0)


def test_same_bundle_same_hashes(mech_bundle, tmp_path):
    m1 = write_results(mech_bundle, "csv", tmp_path / "a")
    m2 = write_results(mech_bundle, "csv", tmp_path / "b")
    assert m1["files"] == m2["files"]


def test_csv_layout(mech_bundle, tmp_path):
    write_results(mech_bundle, "csv", tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["manifest.json", "mechanism_orders.csv", "mechanism_summary.json"]
    head = (tmp_path / "mechanism_orders.csv").read_text().splitlines()[0]
    assert head == "transition,threshold_eV,wavelength_nm,photon_eV,order"


def test_json_one_file_per_stage(mech_bundle, tmp_path):
    manifest = write_results(mech_bundle, "json", tmp_path)
    assert [f["name"] for f in manifest["files"]] == ["mechanism.json"]
    doc = json.loads((tmp_path / "mechanism.json").read_text())
    assert doc["metadata"]["schema_version"] == 1
    assert doc["records"]["dark_state_hypothesis"] == "neutral"


def test_unwritable_dir(mech_bundle, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError) as exc:
        write_results(mech_bundle, "csv", blocker / "sub")
    assert str(blocker / "sub") in str(exc.value)


def test_timings_not_hashed(mech_bundle):
    a = render(mech_bundle, "json")
    mech_bundle.timings["mechanism"] = 123.0
    assert render(mech_bundle, "json") == a


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "pbvcharge", *args], capture_output=True, text=True)


def test_cli_mechanism_prints_csv():
    r = run_cli("mechanism")
    assert r.returncode == 0
    lines = r.stdout.splitlines()
    assert lines[0] == "transition,threshold_eV,wavelength_nm,photon_eV,order" and len(lines) == 9


@pytest.mark.parametrize("args,code,tag", [
    (["simulate"], 2, "CONFIG_ERROR"),
    (["--config", "/does/not/exist", "reproduce", "fig2"], 2, "CONFIG_ERROR"),
    (["fit-decay", "/does/not/exist.csv"], 4, "IO_ERROR"),
])
def test_cli_errors_single_line(args, code, tag):
    r = run_cli(*args)
    assert r.returncode == code
    lines = r.stderr.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith(f"error: {tag}: ")


def test_cli_fit_failure_exit_code(tmp_path, monkeypatch, capsys):
    from pbvcharge import cli
    from pbvcharge.errors import FitError

    def boom(*a, **k):
        raise FitError("did not converge")

    monkeypatch.setattr(cli, "fit_monoexponential", boom)
    data = tmp_path / "d.csv"
    data.write_text("t_s,signal\n0,5\n0.001,3\n0.002,2\n0.003,1.5\n")
    assert main(["fit-decay", str(data)]) == 3
    assert capsys.readouterr().err.startswith("error: FIT_ERROR: ")


def test_cli_simulate_histogram_pipeline(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", CONFIG, "--n-reps", "20", "--seed", "3", "--jumps", "--out", str(out)]) == 0
    traces = (out / "simulate_traces.csv").read_text().splitlines()
    assert traces[0] == "rep,window_index,t_start_ms,t_stop_ms,count" and len(traces) == 1 + 20 * 16
    assert (out / "simulate_jumps.csv").read_text().startswith("rep,jump_time_s,new_state")
    capsys.readouterr()
    assert main(["histogram", str(out / "simulate_traces.csv"), "--window", "0"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["records"]["population"]["n"] == 20


def test_cli_fit_commands(tmp_path, capsys):
    decay = tmp_path / "decay.csv"
    decay.write_text("t_s,signal\n" + "".join(f"{k * 5e-4},{5 * 2.718281828459045 ** (-320 * k * 5e-4) + 0.1}\n"
                                             for k in range(16)))
    assert main(["fit-decay", str(decay)]) == 0
    fit = json.loads(capsys.readouterr().out)["records"]["fit"]
    assert fit["params"]["rate"] == pytest.approx(320, rel=1e-6)
    power = tmp_path / "power.csv"
    power.write_text("power_uW,rate_Hz,rate_err_Hz\n" + "".join(f"{p},{0.05 * p * p},{0.005 * p * p}\n"
                                                             for p in (10, 20, 40, 80)))
    assert main(["fit-power", str(power)]) == 0
    fit = json.loads(capsys.readouterr().out)["records"]["fit"]
    assert fit["params"]["exponent"] == pytest.approx(2.0, abs=1e-9)


def test_cli_ple_roundtrip(tmp_path, capsys):
    out = tmp_path / "ple"
    assert main(["ple", "--config", CONFIG, "--seed", "2", "--out", str(out), "--format", "csv"]) == 0
    spec = out / "ple_spectrum.csv"
    assert spec.read_text().startswith("detuning_GHz,counts\n")
    capsys.readouterr()
    assert main(["ple", "--input", str(spec), "--dwell", "10"]) == 0
    rec = json.loads(capsys.readouterr().out)["records"]
    assert rec["present"] and rec["fit"]["fwhm_MHz"] == pytest.approx(38, rel=0.1)


def test_cli_flags_before_subcommand(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--seed", "5", "--config", CONFIG, "simulate", "--n-reps", "5", "--out", str(a)]) == 0
    assert main(["simulate", "--seed", "5", "--config", CONFIG, "--n-reps", "5", "--out", str(b)]) == 0
    assert (a / "simulate_traces.csv").read_bytes() == (b / "simulate_traces.csv").read_bytes()
