import json
import subprocess
import sys

import pytest

from blpp_lab.cli import compare, main


def _records(path):
    return [json.loads(ln) for ln in path.read_text().splitlines() if ln.strip()]


def _strip_timing(rec):
    rec = dict(rec)
    rec.pop("timing")
    return rec


def test_validate_all_quick(tmp_path):
    assert main(["validate-all", "--quick", "--out", str(tmp_path)]) == 0
    rec = _records(tmp_path / "validate-all.jsonl")[-1]
    assert rec["passed"] and rec["verdicts"]
    assert all(v["passed"] for v in rec["verdicts"])


def test_fredholm_continuum_narrow_wedge(tmp_path, capsys):
    assert main(["fredholm-continuum", "--out", str(tmp_path)]) == 0
    rec = _records(tmp_path / "fredholm-continuum.jsonl")[-1]
    assert rec["result"]["estimates"][0]["value"] == pytest.approx(0.5, abs=1e-5)
    assert (tmp_path / "fredholm-continuum.csv").exists()
    assert "estimates" in capsys.readouterr().out


def test_records_reproducible_apart_from_timing(tmp_path):
    args = ["mc-glpp", "--samples", "5000", "--seed", "3", "--out", str(tmp_path)]
    assert main(args) == 0
    assert main(args) == 0
    a, b = _records(tmp_path / "mc-glpp.jsonl")
    assert json.dumps(_strip_timing(a), sort_keys=True) == json.dumps(_strip_timing(b), sort_keys=True)
    assert set(a["timing"]) == {"runtime_s", "timestamp"}


def test_compare_pass_and_mismatch(tmp_path, capsys):
    d1, d2, d3 = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["fredholm-discrete", "--out", str(d1)]) == 0
    assert main(["mc-glpp", "--samples", "20000", "--out", str(d2)]) == 0
    assert main(["compare", str(d1 / "fredholm-discrete.jsonl"), str(d2 / "mc-glpp.jsonl")]) == 0
    assert "PASS" in capsys.readouterr().out
    cfg = tmp_path / "m3.json"
    cfg.write_text(json.dumps({"m": 3}))
    assert main(["mc-glpp", "--samples", "2000", "--config", str(cfg), "--out", str(d3)]) == 0
    assert main(["compare", str(d1 / "fredholm-discrete.jsonl"), str(d3 / "mc-glpp.jsonl")]) == 1
    assert "records differ" in capsys.readouterr().out


def test_compare_vacuous():
    def rec(thr):
        return {"result": {"quantity": {"model": "x"}, "estimates": [{"thresholds": thr, "value": 0.5, "stderr": 0.0}]}}

    rep = compare(rec([1.0]), rec([2.0]))
    assert rep["vacuous"] and rep["diagnostic"]


def test_unknown_config_key_exits_2(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"nope": 1}))
    assert main(["gue-oracle", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["lemma-check", "--nodes", "4", "--out", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "blpp_lab", "kernel-eval", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "kernel-eval.jsonl").exists()
