import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from combsync.cli import main
from combsync.sim import default_scenario, read_series_csv


def run_cli(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def short_scenario(tmp_path):
    d = default_scenario().to_dict()
    d["duration_s"] = 1800.0
    p = tmp_path / "short.json"
    p.write_text(json.dumps(d))
    return p


def test_run_writes_outputs(tmp_path, short_scenario, capsys):
    out = tmp_path / "out"
    code, stdout, _ = run_cli(["run", "--scenario", str(short_scenario), "--out", str(out)], capsys)
    assert code == 0
    assert "rms_wander_ps=" in stdout
    for name in ("report.json", "offsets.csv", "two_way.csv", "uncompensated.csv", "histogram.csv"):
        assert (out / name).is_file()
    t, off = read_series_csv(out / "offsets.csv")
    assert t.size == 18_000


def test_rerun_byte_identical(tmp_path, short_scenario, capsys):
    for d in ("a", "b"):
        assert main(["run", "--scenario", str(short_scenario), "--out", str(tmp_path / d)]) == 0
    capsys.readouterr()
    assert (tmp_path / "a" / "offsets.csv").read_bytes() == (tmp_path / "b" / "offsets.csv").read_bytes()


def test_seeds_differ(tmp_path, capsys):
    wanders = {}
    for seed in (7, 8):
        out = tmp_path / str(seed)
        code, stdout, _ = run_cli(["run", "--seed", str(seed), "--out", str(out), "--format", "json"], capsys)
        assert code == 0
        metrics = json.loads(stdout[stdout.index("{"):])
        assert metrics["seed"] == seed
        wanders[seed] = metrics["rms_wander_s"]
    assert wanders[7] != wanders[8]
    assert all(w < 30e-12 for w in wanders.values())


def test_directory_of_scenarios(tmp_path, short_scenario, capsys):
    out = tmp_path / "batch"
    code, stdout, _ = run_cli(["run", "--scenario", str(short_scenario.parent), "--out", str(out)], capsys)
    assert code == 0
    assert (out / "short" / "offsets.csv").is_file()


def test_validate_writes_nothing(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, stdout, _ = run_cli(["validate"], capsys)
    assert code == 0
    assert stdout.startswith("ok scenario=default config_hash=")
    assert list(tmp_path.iterdir()) == []


def test_fading_table(capsys):
    code, stdout, _ = run_cli(["fading-table", "--filters", "5e10", "--lengths", "0", "2"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(stdout)))
    zero = [r for r in rows if float(r["length_km"]) == 0.0]
    assert zero and all(float(r["amplitude"]) == 1.0 for r in zero)
    k10 = [r for r in rows if r["k"] == "10" and float(r["length_km"]) == 2.0]
    assert float(k10[0]["amplitude"]) > 0.9


def test_fading_table_default_comb_rows(capsys):
    code, stdout, _ = run_cli(["fading-table", "--lengths", "0", "1", "2", "13", "20", "50"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(stdout)))
    amp = {(float(r["filter_bw_hz"]), float(r["length_km"])): float(r["amplitude"])
           for r in rows if r["k"] == "10"}
    assert 0.0 < amp[(50e9, 13.0)] <= 1.0
    for L in (1.0, 2.0, 20.0, 50.0):
        assert amp[(200e9, L)] < amp[(50e9, L)]
    # no k=10 line pair fits through a 25 GHz filter
    assert amp[(25e9, 2.0)] == 0.0


def test_run_outputs_parse(tmp_path, short_scenario, capsys):
    assert main(["run", "--scenario", str(short_scenario), "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    meta = json.loads((tmp_path / "report.json").read_text())
    hist = np.loadtxt(tmp_path / "histogram.csv", delimiter=",", skiprows=1)
    assert hist[:, 1].sum() == meta["per_ru"][0]["n_samples"]
    _, sync = read_series_csv(tmp_path / "offsets.csv")
    _, two = read_series_csv(tmp_path / "two_way.csv")
    _, green = read_series_csv(tmp_path / "uncompensated.csv")
    assert np.array_equal(green, sync + two / 2)


def test_fading_table_json_to_file(tmp_path, capsys):
    code, _, _ = run_cli(["fading-table", "--format", "json", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = json.loads((tmp_path / "fading_table.json").read_text())
    assert {r["filter_bw_hz"] for r in rows} == {25e9, 50e9, 100e9, 200e9}


def test_jitter(capsys):
    code, stdout, err = run_cli(["jitter", "--format", "json"], capsys)
    assert code == 0
    rows = {r["name"]: r for r in json.loads(stdout)}
    assert rows["clock_2g5_with_data"]["rms_jitter_fs"] == pytest.approx(93.1, rel=5e-3)
    assert "amplitude=" in err


def test_presets_listing(tmp_path, capsys):
    code, stdout, _ = run_cli(["presets", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert len(list(csv.DictReader(io.StringIO(stdout)))) == 4
    assert len(list(tmp_path.glob("*.json"))) == 4


def test_invalid_scenario_exit_1(tmp_path, capsys):
    d = default_scenario().to_dict()
    d["n_rus"] = 0
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    code, _, err = run_cli(["validate", "--scenario", str(p)], capsys)
    assert code == 1 and "error:" in err


def test_missing_file_exit_2(tmp_path, capsys):
    code, _, _ = run_cli(["run", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)], capsys)
    assert code == 2


def test_missing_presets_exit_1(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("COMBSYNC_PRESET_DIR", str(tmp_path))
    assert run_cli(["jitter"], capsys)[0] == 1
    assert run_cli(["presets"], capsys)[0] == 1
    assert run_cli(["validate"], capsys)[0] == 1


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "combsync", "validate"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0, proc.stderr
    assert "config_hash=" in proc.stdout
