import json
import math
import subprocess
import sys

import pytest

from attrition_ri import DesignSpec, StatConfig, build_null, load_dataset, prediction_band, two_step_test
from attrition_ri.cli import dispatch, fmt_num


@pytest.fixture
def data(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("z,y\n1,3.0\n1,4.0\n0,1.0\n0,2.0\n1,NA\n0,0.5\n1,2.5\n0,NA\n")
    return str(p)


def run(capsys, *argv):
    code = dispatch(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_test_command_reports_p_value(capsys, data):
    code, out, _ = run(capsys, "test", "--data", data, "--mechanism", "general", "--stat", "ranksum", "--s", "1", "--delta", "0")
    assert code == 0
    doc = json.loads(out)
    assert 0 < doc["p_value"] <= 1 and doc["b"] == "inf" and doc["null_mode"] == "exact"
    assert doc["subsample"] is False


def test_delta_from_file(capsys, data, tmp_path):
    f = tmp_path / "delta.csv"
    f.write_text("delta\n" + "\n".join(["0.5"] * 8) + "\n")
    a = json.loads(run(capsys, "test", "--data", data, "--delta", f"@{f}")[1])
    b = json.loads(run(capsys, "test", "--data", data, "--delta", "0.5")[1])
    assert a["p_value"] == b["p_value"]
    f.write_text("0.5\n0.5\n")
    assert run(capsys, "test", "--data", data, "--delta", f"@{f}")[0] == 1


def test_mar_uses_subsample(capsys, data):
    doc = json.loads(run(capsys, "test", "--data", data, "--mechanism", "mar")[1])
    assert doc["subsample"] is True


def test_exit_codes(capsys, data, tmp_path):
    assert run(capsys, "test", "--data", data, "--stat", "median")[0] == 2
    assert run(capsys)[0] == 2
    assert run(capsys, "test", "--data", str(tmp_path / "missing.csv"))[0] == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("z,y\n1,1\n1,2\n")
    code, _, err = run(capsys, "test", "--data", str(bad))
    assert code == 1 and "degenerate" in err
    # Monte Carlo without a seed
    assert run(capsys, "test", "--data", data, "--null", "mc")[0] == 2
    # unsupported combination
    assert run(capsys, "two-step", "--data", data, "--mechanism", "general", "--stat", "mwu")[0] == 2


def test_mc_runs_are_byte_identical(capsys, data, tmp_path):
    args = ["test", "--data", data, "--null", "mc", "--draws", "3000", "--seed", "5", "--stat", "mwu", "--s", "3"]
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    assert dispatch(args + ["--out", str(out1), "--threads", "1"]) == 0
    assert dispatch(args + ["--out", str(out2), "--threads", "4"]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert json.loads(out1.read_text())["seed"] == 5


def test_null_cache_is_reused(capsys, data, tmp_path):
    cache = tmp_path / "cache"
    args = ["test", "--data", data, "--null-cache", str(cache), "--s", "4"]
    first = run(capsys, *args)[1]
    files = list(cache.iterdir())
    assert len(files) == 1
    stamp = files[0].stat().st_mtime_ns
    assert run(capsys, *args)[1] == first
    assert files[0].stat().st_mtime_ns == stamp


def test_two_step_mn_is_label_switched(capsys, data):
    code, out, _ = run(capsys, "two-step", "--data", data, "--mechanism", "mn", "--stat", "mwu", "--s", "2", "--alpha", "0.2")
    assert code == 0
    doc = json.loads(out)
    assert doc["label_switched"] is True and doc["beta"] == 0.1
    ds = load_dataset(data)
    cfg = StatConfig.mwu_power(2)
    res, _ = two_step_test(ds, 0, cfg, 0.2, 0.1, build_null(DesignSpec(ds.n, ds.n0), cfg, "exact"), "mn")
    assert doc["p_value"] == fmt_num(res.p_value)


def test_ci_constant(capsys, data):
    doc = json.loads(run(capsys, "ci-constant", "--data", data, "--mechanism", "mp", "--alpha", "0.5")[1])
    assert doc["sides"] == "two-sided" and doc["level"] == 0.5
    lo, hi = (float(doc[k]) if isinstance(doc[k], str) else doc[k] for k in ("lower", "upper"))
    assert lo <= hi


def test_band_csv_matches_library(capsys, data):
    code, out, _ = run(capsys, "quantile-band", "--data", data, "--mechanism", "mp", "--stat", "mwu", "--s", "6", "--alpha", "0.05")
    assert code == 0
    band = prediction_band(load_dataset(data), "mp", StatConfig.mwu_power(6), 0.05)
    assert out == band.to_csv()
    assert out.splitlines()[0] == "k,lower"


def test_band_json_and_populations(capsys, data):
    doc = json.loads(run(capsys, "quantile-band", "--data", data, "--mechanism", "sharp", "--population", "all", "--format", "json")[1])
    assert doc[0]["population"] == "all" and doc[0]["lower"] == "-inf"
    assert doc[0]["guarantee"] == pytest.approx(0.8)
    code, out, _ = run(capsys, "quantile-band", "--data", data, "--mechanism", "mar", "--population", "all",
                       "--targets", "2,6", "--budget", "0.2", "--format", "json")
    assert code == 0 and [r["k"] for r in json.loads(out)] == [2, 6]
    assert run(capsys, "quantile-band", "--data", data, "--mechanism", "mar", "--population", "all")[0] == 2


def test_simulate_command(capsys, tmp_path):
    spec = tmp_path / "spec.txt"
    spec.write_text("kind = type1\nn = 30\nn1 = 15\nreps = 4\nnull_draws = 500\nsub_null_draws = 500\nmissing = random\np = 0.9\n")
    code, out, _ = run(capsys, "simulate", "--spec", str(spec), "--out", str(tmp_path / "res"))
    assert code == 0
    assert (tmp_path / "res" / "report.csv").exists()
    assert json.loads(out)["kind"] == "type1"


def test_oracle_check_command(capsys):
    code, out, _ = run(capsys, "oracle-check", "--instances", "10", "--seed", "1")
    assert code == 0 and json.loads(out)["mismatches"] == []


def test_fmt_num():
    assert fmt_num(math.inf) == "inf" and fmt_num(-math.inf) == "-inf"
    assert fmt_num(1 / 3) == 0.333333333333


def test_module_entry_point(data):
    proc = subprocess.run([sys.executable, "-m", "attrition_ri", "test", "--data", data],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "p_value" in proc.stdout
