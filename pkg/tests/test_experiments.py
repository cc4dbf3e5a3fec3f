import json
from pathlib import Path

import pytest

from tbrw import experiments as ex
from tbrw.engine import EngineError
from tbrw.experiments import ConfigError, resolve_config, run_experiment, sweep


def small_degree(out, **over):
    cfg = resolve_config("degree-dist", {"horizon": {"max_growth": 300}, "replicas": 3,
                                         "params": {"checkpoints": [100, 300]}}, seed=11, out=str(out))
    for k, v in over.items():
        ex.set_path(cfg, k, v)
    return cfg


def csv_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_resolve_layers(tmp_path):
    cfg = resolve_config("growth-times", {"replicas": 3, "params": {"ratio_max": 0.5}}, seed=9, replicas=4)
    assert cfg["replicas"] == 4 and cfg["seed"] == 9
    assert cfg["params"]["ratio_max"] == 0.5
    assert cfg["params"]["compare"] == [100, 10_000]


@pytest.mark.parametrize("experiment,override", [
    ("degree-dist", {"law": {"variant": "LogBurst", "delta": 0.8}}),
    ("recurrence-windows", {"mode": {"kind": "shortcut", "policy": "fast", "epsilon": 0.01}}),
    ("growth-times", {"replicas": 0}),
    ("degree-dist", {"law": {"variant": "Nope"}}),
    ("degree-dist", {"horizon": {"max_growth": -5}}),
])
def test_config_errors(experiment, override):
    with pytest.raises(ConfigError):
        resolve_config(experiment, override, out="/nonexistent")


def test_unknown_experiment():
    with pytest.raises(ConfigError):
        resolve_config("no-such-thing")


def test_degree_run_layout(tmp_path):
    code, summary = run_experiment(small_degree(tmp_path))
    assert code in (0, 1)
    for i in range(3):
        r = tmp_path / f"replica_{i:03d}"
        for f in ("degree_dist.csv", "tau.csv", "distance.csv", "redblue.csv"):
            assert (r / f).is_file()
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["master_seed"] == 11
    assert meta["replica_seeds"][2] == {"entropy": 11, "spawn_key": [2]}
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["gates"] == summary["gates"]
    # summary is recomputable from the CSVs alone
    assert ex.summarize(small_degree(tmp_path), tmp_path)["gates"] == summary["gates"]


def test_thread_count_does_not_change_output(tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("TBRW_THREADS", threads)
        out = tmp_path / threads
        run_experiment(small_degree(out))
        outs.append((csv_bytes(out), (out / "summary.json").read_bytes()))
    assert outs[0] == outs[1]
    assert outs[0][0]


def test_seed_changes_output(tmp_path):
    run_experiment(small_degree(tmp_path / "a"))
    run_experiment(small_degree(tmp_path / "b", seed=12))
    assert csv_bytes(tmp_path / "a") != csv_bytes(tmp_path / "b")


def test_gate_failure_exit_one(tmp_path):
    cfg = resolve_config("growth-times", {"replicas": 2, "horizon": {"max_growth": 200},
                                          "params": {"compare": [10, 200], "ratio_max": 1e-300}},
                         out=str(tmp_path))
    code, summary = run_experiment(cfg)
    assert code == 1 and summary["gates"] == {"tau_ratio": False}


def test_replica_failure_is_recorded(tmp_path, monkeypatch):
    def boom(cfg, i, rdir, *a):
        if i == 1:
            raise EngineError("synthetic")
        return real(cfg, i, rdir, *a)
    real = ex._REPLICA_RUNNERS["growth-times"]
    monkeypatch.setitem(ex._REPLICA_RUNNERS, "growth-times", boom)
    cfg = resolve_config("growth-times", {"replicas": 3, "horizon": {"max_growth": 100},
                                          "params": {"compare": [10, 100]}}, out=str(tmp_path))
    code, summary = run_experiment(cfg)
    assert code == 1
    assert summary["failures"] == [{"replica": "replica_001", "error": "EngineError: synthetic"}]
    assert (tmp_path / "replica_000" / "tau.csv").is_file()


def test_growth_times_pass(tmp_path):
    cfg = resolve_config("growth-times", {"replicas": 4, "horizon": {"max_growth": 1000},
                                          "params": {"compare": [10, 1000], "ratio_max": 0.5}},
                         out=str(tmp_path))
    code, s = run_experiment(cfg)
    assert code == 0 and s["metrics"]["ratio"] < 0.5


def test_window_specs_gm2():
    cfg = resolve_config("recurrence-windows")
    specs = ex.window_specs(cfg)
    assert len(specs) == 27
    assert specs[0].start == 10_000 and specs[-1].start == 9_000_000
    assert all(s.length >= 1 for s in specs)


def test_small_windows_run(tmp_path):
    cfg = resolve_config("recurrence-windows", {"replicas": 2, "horizon": {"max_steps": 200_000},
                                                "params": {"bases": [1000, 10_000]}}, out=str(tmp_path))
    code, s = run_experiment(cfg)
    assert 0.0 <= s["metrics"]["fraction"] <= 1.0
    assert (tmp_path / "replica_000" / "windows.csv").is_file()


def test_sweep(tmp_path):
    cfg = resolve_config("growth-times", {"replicas": 2, "horizon": {"max_growth": 200},
                                          "params": {"compare": [10, 200]}}, out=str(tmp_path))
    code, table = sweep(cfg, {"law.gamma": [0.7, 0.9], "params.ratio_max": [1e-300, 1.0]})
    assert len(table["points"]) == 4
    assert code == 1
    assert sorted(pt["passed"] for pt in table["points"]) == [False, False, True, True]
    assert (tmp_path / "point_003" / "summary.json").is_file()
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "point,assignment,exit,passed,median_tv,ratio,fraction"
    assert len(lines) == 5


def test_sweep_bad_point_is_local(tmp_path):
    cfg = resolve_config("growth-times", {"replicas": 1, "horizon": {"max_growth": 50},
                                          "params": {"compare": [10, 50], "ratio_max": 1.0}},
                         out=str(tmp_path))
    code, table = sweep(cfg, {"replicas": [1, 0]})
    assert [pt["exit"] for pt in table["points"]] == [0, 2]
    assert code == 2


def test_monte_carlo_return_time_star():
    import numpy as np
    parents = [-1, 0, 0, 0, 0]
    # stationary return time to a leaf of a star: 2|E| / deg = 8
    est = ex.monte_carlo_return_time(parents, 1, 200_000, np.random.default_rng(0))
    assert est == pytest.approx(8.0, rel=0.03)
