import csv
import json
import math
import os
import shutil
import sys

import numpy as np
import pytest

from benchdesign import echo_runner

from benchdesign.cli import main
from benchdesign.errors import ConfigError, IncompleteDesignError
from benchdesign.power import DesignSpec
from benchdesign.sampler import SamplingConfig
from benchdesign.state import ExperimentState

GOLDEN_FILES = ["hypotheses.csv", "instance_se.csv", "run_counts.csv", "ci_chart.csv", "summary.json"]


def write(path, obj):
    path.write_text(json.dumps(obj, indent=1))
    return str(path)


def base_config(**over):
    cfg = {
        "design": {"alpha_f": 0.05, "power_target": 0.8, "mres": 0.5, "correction": "holm-mean"},
        "sampling": {"comparison": "simple", "se_star": 0.15, "n0": 5},
        "algorithms": ["A", "B", "C"],
        "instances": [f"i{k:02d}" for k in range(8)],
        "runner": {"kind": "synthetic", "synthetic": {
            "distribution": "normal",
            "params": {"A": [10.0, 0.5], "B": [10.2, 0.8], "C": [11.0, 0.4]},
            "instance_shift": {"i01": 1.0, "i04": -0.7, "i06": 0.3},
        }},
        "seed": 7,
    }
    cfg.update(over)
    return cfg


def run_cli(*args):
    return main([str(a) for a in args])


def test_design_command_case_study(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {"design": {
        "alpha_f": 0.05, "power_target": 0.8, "mres": 0.5, "num_comparisons": 21,
        "correction": "holm-mean", "alternative": "two-sided", "test_family": "paired-t"}})
    assert run_cli("design", "--config", cfg, "--out", tmp_path / "d.json") == 0
    assert "N* = 57" in capsys.readouterr().out
    doc = json.loads((tmp_path / "d.json").read_text())
    assert doc["result"]["n_instances"] == 57 and doc["result"]["alternative"] == "two-sided"


def test_design_k_derived_from_algorithms(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", base_config())
    assert run_cli("design", "--config", cfg, "--state", tmp_path / "s.json") == 0
    st = ExperimentState.load(tmp_path / "s.json")
    assert st.design.num_comparisons == 3 and st.status == "designed"
    assert st.design_result.n_instances == 40


def test_design_inconsistent_k(tmp_path):
    cfg = base_config()
    cfg["design"]["num_comparisons"] = 5
    assert run_cli("design", "--config", write(tmp_path / "c.json", cfg)) == 1


def test_config_errors_exit_1(tmp_path, capsys):
    bad = write(tmp_path / "bad.json", {"design": {"alpha_f": 2}})
    assert run_cli("design", "--config", bad) == 1
    assert "alpha_f" in capsys.readouterr().err
    assert run_cli("design", "--config", tmp_path / "missing.json") == 1
    (tmp_path / "junk.json").write_text("{nope")
    assert run_cli("design", "--config", tmp_path / "junk.json") == 1
    assert run_cli("design", "--config", write(tmp_path / "x.json", {"extra": 1})) == 1
    with pytest.raises(SystemExit) as info:
        run_cli("frobnicate")
    assert info.value.code == 1


def test_run_resume_equals_uninterrupted(tmp_path):
    cfg = write(tmp_path / "c.json", base_config())
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run_cli("run", "--config", cfg, "--state", a, "--max-instances", 3) == 0
    st = ExperimentState.load(a)
    assert st.status == "sampling" and len(st.reports) == 3
    assert run_cli("run", "--state", a, "--max-instances", 2, "--workers", 2) == 0
    assert run_cli("run", "--state", a) == 0
    assert run_cli("run", "--config", cfg, "--state", b) == 0
    assert a.read_bytes() == b.read_bytes()
    before = a.read_bytes()
    assert run_cli("run", "--state", a) == 0
    assert a.read_bytes() == before


def test_run_reports_satisfy_dichotomy(tmp_path):
    cfg = base_config(algorithms=list("ABCDE"), instances=[f"j{k}" for k in range(10)])
    cfg["runner"]["synthetic"]["params"].update({"D": [9.5, 1.0], "E": [10.0, 0.3]})
    cfg["sampling"].update(se_star=0.2, n0=10)
    assert run_cli("run", "--config", write(tmp_path / "c.json", cfg), "--state", tmp_path / "s.json") == 0
    st = ExperimentState.load(tmp_path / "s.json")
    assert len(st.reports) == 10 and st.status == "sampled"
    for rep in st.reports.values():
        assert (rep.max_se() <= 0.2) != rep.budget_exhausted
        assert min(rep.counts().values()) >= 10


def test_flag_overrides_and_locking_of_sampling(tmp_path):
    cfg = write(tmp_path / "c.json", base_config())
    s = tmp_path / "s.json"
    assert run_cli("run", "--config", cfg, "--state", s, "--se-star", 0.3, "--n0", 4,
                   "--n-max", 60, "--seed", 3, "--max-instances", 1) == 0
    st = ExperimentState.load(s)
    assert (st.sampling.se_star, st.sampling.n0, st.sampling.n_max, st.global_seed) == (0.3, 4, 60, 3)
    assert run_cli("run", "--state", s, "--se-star", 0.1) == 1


def test_runner_failure_then_resume(tmp_path):
    script = tmp_path / "script.json"
    values = {f"{a}/i{k}": [1.0 + k + 0.1 * n for n in range(5)] for a in "AB" for k in range(4)}
    values_bad = dict(values)
    values_bad["B/i2"] = ["fail"]
    script.write_text(json.dumps(values_bad))
    cmd = f"{sys.executable} {echo_runner.__file__} {script} {{algorithm}} {{instance}} {{seed}}"
    cfg = base_config(algorithms=["A", "B"], instances=[f"i{k}" for k in range(4)],
                      runner={"kind": "external", "external": {"command": cmd, "timeout": 30}})
    cfg["sampling"].update(se_star=10.0, n0=3)
    c = write(tmp_path / "c.json", cfg)
    s = tmp_path / "s.json"
    assert run_cli("run", "--config", c, "--state", s) == 2
    st = ExperimentState.load(s)
    assert sorted(st.reports) == ["i0", "i1"] and st.status == "sampling"
    assert run_cli("analyze", "--state", s, "--out", tmp_path / "o") == 2
    script.write_text(json.dumps(values))
    assert run_cli("run", "--state", s) == 0
    full = tmp_path / "full.json"
    assert run_cli("run", "--config", c, "--state", full) == 0
    assert s.read_bytes() == full.read_bytes()


def test_analyze_requires_complete_state(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", base_config())
    s = tmp_path / "s.json"
    run_cli("run", "--config", cfg, "--state", s, "--max-instances", 2)
    capsys.readouterr()
    assert run_cli("analyze", "--state", s, "--out", tmp_path / "o") == 2
    err = capsys.readouterr().err
    assert "(A, i02)" in err


def test_null_experiment_has_no_rejections(tmp_path):
    cfg = base_config(instances=[f"n{k}" for k in range(20)])
    cfg["runner"]["synthetic"]["params"] = {a: [10.0, 1.0] for a in "ABC"}
    s = tmp_path / "s.json"
    run_cli("run", "--config", write(tmp_path / "c.json", cfg), "--state", s)
    assert run_cli("analyze", "--state", s, "--out", tmp_path / "o") == 0
    doc = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert doc["num_rejected"] == 0


def test_degraded_algorithm_detected(tmp_path):
    rng = np.random.default_rng(2024)
    instances = [f"g{k:02d}" for k in range(57)]
    gap = rng.normal(1.0, 1.0, 57)  # per-instance degradation: mean 1 sd, sd 1
    overrides = {inst: {"C": [10.0 + float(g), 0.3]} for inst, g in zip(instances, gap)}
    cfg = base_config(instances=instances)
    cfg["runner"]["synthetic"]["params"] = {"A": [10.0, 0.3], "B": [10.0, 0.3], "C": [10.0, 0.3]}
    cfg["runner"]["synthetic"]["overrides"] = overrides
    cfg["sampling"].update(se_star=0.05, n0=5, n_max=1000)
    s = tmp_path / "s.json"
    assert run_cli("run", "--config", write(tmp_path / "c.json", cfg), "--state", s) == 0
    assert run_cli("analyze", "--state", s, "--out", tmp_path / "o") == 0
    rows = {(r["algorithm_i"], r["algorithm_j"]): r for r in csv.DictReader(open(tmp_path / "o" / "hypotheses.csv"))}
    for pair in (("A", "C"), ("B", "C")):
        assert rows[pair]["reject"] == "true"
        assert abs(abs(float(rows[pair]["d_hat"])) - 1.0) <= 0.3
    assert rows[("A", "B")]["reject"] == "false"


def _experiment(tmp_path, name="x"):
    d = tmp_path / name
    d.mkdir()
    s = d / "s.json"
    assert run_cli("run", "--config", write(d / "c.json", base_config()), "--state", s) == 0
    assert run_cli("analyze", "--state", s, "--out", d / "out") == 0
    return d / "out"


def test_exports_byte_identical_across_runs(tmp_path):
    a = _experiment(tmp_path, "a")
    b = _experiment(tmp_path, "b")
    for f in GOLDEN_FILES:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def _numeric_equal(x, y):
    try:
        fx, fy = float(x), float(y)
    except (TypeError, ValueError):
        return x == y
    if math.isinf(fx) or math.isinf(fy):
        return fx == fy
    return math.isclose(fx, fy, rel_tol=1e-9, abs_tol=1e-12)


def _same_json(a, b):
    if isinstance(a, dict):
        return isinstance(b, dict) and a.keys() == b.keys() and all(_same_json(a[k], b[k]) for k in a)
    if isinstance(a, list):
        return isinstance(b, list) and len(a) == len(b) and all(_same_json(x, y) for x, y in zip(a, b))
    if isinstance(a, (int, float)) and not isinstance(a, bool):
        return _numeric_equal(a, b)
    return a == b


def test_golden_exports(tmp_path, golden_dir):
    out = _experiment(tmp_path)
    if os.environ.get("BENCHDESIGN_UPDATE_GOLDEN"):
        golden_dir.mkdir(exist_ok=True)
        for f in GOLDEN_FILES:
            shutil.copy(out / f, golden_dir / f)
    for f in GOLDEN_FILES:
        got, ref = out / f, golden_dir / f
        if f.endswith(".json"):
            assert _same_json(json.loads(got.read_text()), json.loads(ref.read_text())), f
            continue
        rows_got = list(csv.reader(open(got)))
        rows_ref = list(csv.reader(open(ref)))
        assert rows_got[0] == rows_ref[0]
        assert len(rows_got) == len(rows_ref)
        for rg, rr in zip(rows_got[1:], rows_ref[1:]):
            assert all(_numeric_equal(x, y) for x, y in zip(rg, rr)), (f, rg, rr)


def test_state_roundtrip_and_status(tmp_path):
    st = ExperimentState(DesignSpec(num_comparisons=1), SamplingConfig(), ["a", "b"], ["i"])
    st.save(tmp_path / "s.json")
    back = ExperimentState.load(tmp_path / "s.json")
    assert back.to_dict() == st.to_dict()
    back.advance("sampled")
    with pytest.raises(ConfigError):
        back.advance("sampling")
    data = st.to_dict()
    data["schema_version"] = 99
    with pytest.raises(ConfigError):
        ExperimentState.from_dict(data)
    with pytest.raises(IncompleteDesignError):
        st.require_complete()


def test_state_rejects_unknown_report(tmp_path):
    cfg = write(tmp_path / "c.json", base_config())
    s = tmp_path / "s.json"
    run_cli("run", "--config", cfg, "--state", s, "--max-instances", 1)
    data = json.loads(s.read_text())
    data["instances"] = data["instances"][1:]
    with pytest.raises(ConfigError):
        ExperimentState.from_dict(data)


def test_state_lock_blocks_second_owner(tmp_path):
    from benchdesign.state import acquire, state_lock

    s = tmp_path / "s.json"
    first = acquire(state_lock(s))
    try:
        with pytest.raises(ConfigError):
            acquire(state_lock(s, timeout=0.05))
    finally:
        first.release()


def test_sample_command(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", base_config())
    assert run_cli("sample", "--config", cfg, "--instance", "i03", "--out", tmp_path / "r.json") == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["instance_id"] == "i03"
    assert run_cli("sample", "--config", cfg, "--instance", "zzz") == 1


def test_powercurve_command(tmp_path):
    cfg = write(tmp_path / "c.json", {"design": {"num_comparisons": 7, "mres": 0.3, "power_target": 0.8}})
    out = tmp_path / "pc.csv"
    assert run_cli("powercurve", "--config", cfg, "--n", 200, "--d-grid", "0:0.5:0.05", "--out", out) == 0
    rows = list(csv.DictReader(open(out)))
    pw = [float(r["mean_power"]) for r in rows]
    assert all(b >= a for a, b in zip(pw, pw[1:]))
    at = {round(float(r["effect_size"]), 6): float(r["mean_power"]) for r in rows}
    assert 0.83 <= at[0.25] <= 0.87
    assert at[0.0] <= 0.06
    interp = [r for r in rows if r["interpolated"] == "true"]
    assert len(interp) == 0  # 0.3 lies on the grid
    assert run_cli("powercurve", "--config", cfg, "--n", 200, "--d-grid", "0.2,0.4", "--out", out) == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["interpolated"] for r in rows] == ["false", "true", "false"]


def test_validate_command(tmp_path):
    cfg = write(tmp_path / "c.json", {"design": {"num_comparisons": 10, "correction": "bonferroni"}})
    out1, out2 = tmp_path / "v1.json", tmp_path / "v2.json"
    for out in (out1, out2):
        assert run_cli("validate", "--config", cfg, "--effect", 0, "--structure", "all-vs-all",
                       "--n-sim", 1000, "--seed", 4, "--out", out) == 0
    assert out1.read_bytes() == out2.read_bytes()
    doc = json.loads(out1.read_text())
    assert doc["fwer"] <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / 1000)
    assert run_cli("validate", "--config", cfg, "--n-sim", 10) == 1
