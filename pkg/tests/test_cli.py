import json
import subprocess
import sys

import numpy as np
import pytest

from uagnn.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, TRAIN_KEYS, RunConfig, ConfigError, main
from uagnn.graph import bfs_distances, generate_sbm, load_graph, save_graph
from uagnn.model import init_params

GEN = ["--n", "24", "--k", "2", "--p-in", "0.4", "--p-out", "0.05", "--feature-dim", "3",
       "--feature-shift", "2.0", "--seed", "5"]
FAST_HP = {"layers": 2, "hidden_dim": 6, "max_epochs": 15}


@pytest.fixture
def dataset(tmp_path):
    assert main(["generate", *GEN, "--out", str(tmp_path / "ds")]) == EXIT_OK
    return tmp_path / "ds"


def write_config(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_generate_manifest_and_files(dataset):
    manifest = json.loads((dataset / "manifest.json").read_text())
    g = load_graph(dataset)
    assert {"n", "d", "k", "homophily", "seed"} <= set(manifest)
    assert (manifest["n"], manifest["d"], manifest["k"], manifest["seed"]) == (24, 3, 2, 5)
    assert g.n == 24 and g.num_classes == 2


def test_generate_low_homophily_example(tmp_path):
    args = ["generate", "--n", "200", "--k", "2", "--p-in", "0.02", "--p-out", "0.10",
            "--feature-dim", "2", "--seed", "7", "--out", str(tmp_path / "h")]
    assert main(args) == EXIT_OK
    assert json.loads((tmp_path / "h" / "manifest.json").read_text())["homophily"] < 0.25


def test_generate_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["generate", *GEN, "--out", str(tmp_path / name)]) == EXIT_OK
    for f in ("edges.tsv", "features.csv", "labels.txt", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_generate_invalid_writes_nothing(tmp_path, capsys):
    args = ["generate", "--n", "201", "--k", "2", "--p-in", "0.1", "--p-out", "0.1",
            "--feature-dim", "2", "--out", str(tmp_path / "bad")]
    assert main(args) == EXIT_INVALID
    assert not (tmp_path / "bad").exists()
    assert "error" in capsys.readouterr().err


def test_generate_from_config(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"generator": {"n": 10, "k": 2, "p_in": 0.5, "p_out": 0.1,
                                                           "feature_dim": 2, "seed": 1}})
    assert main(["generate", "--config", cfg, "--out", str(tmp_path / "g")]) == EXIT_OK
    assert load_graph(tmp_path / "g").n == 10


def test_train_report_schema(dataset, tmp_path):
    cfg = write_config(tmp_path / "c.json", {"dataset": str(dataset), "hp": FAST_HP})
    assert main(["train", "--config", cfg, "--seeds", "3", "--out", str(tmp_path / "run")]) == EXIT_OK
    report = json.loads((tmp_path / "run" / "seed_3.json").read_text())
    assert set(report) == set(TRAIN_KEYS)
    for m in ("f1", "nmi", "conductance"):
        assert 0.0 <= report[m] <= 1.0
    records = [json.loads(x) for x in (tmp_path / "run" / "metrics.jsonl").read_text().splitlines()]
    assert {r["metric"] for r in records} == {"f1", "nmi", "conductance"}


def test_train_summary_uses_sample_std(dataset, tmp_path):
    seeds = list(range(10))
    cfg = write_config(tmp_path / "c.json", {"dataset": str(dataset), "hp": {**FAST_HP, "max_epochs": 5},
                                             "seeds": seeds, "kmeans_inits": 3})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "run")]) == EXIT_OK
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    nmis = [json.loads((tmp_path / "run" / f"seed_{s}.json").read_text())["nmi"] for s in seeds]
    assert summary["metrics"]["nmi"]["mean"] == pytest.approx(np.mean(nmis))
    assert summary["metrics"]["nmi"]["std"] == pytest.approx(np.std(nmis, ddof=1))
    assert summary["failed_seeds"] == [] and summary["seeds"] == seeds


def test_train_is_deterministic(dataset, tmp_path):
    cfg = write_config(tmp_path / "c.json", {"dataset": str(dataset), "hp": FAST_HP, "seeds": [1, 2]})
    for name in ("a", "b"):
        assert main(["train", "--config", cfg, "--out", str(tmp_path / name)]) == EXIT_OK
    for f in ("seed_1.json", "seed_2.json", "summary.json", "metrics.jsonl"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_train_all_seeds_diverge_is_runtime_failure(tmp_path):
    g = generate_sbm(10, 2, 0.5, 0.2, 2, 1.0, seed=0)
    save_graph(g.__class__(g.n, g.edges, g.features * 1e200, g.labels), tmp_path / "huge")
    cfg = write_config(tmp_path / "c.json", {"dataset": str(tmp_path / "huge"), "hp": FAST_HP, "seeds": [0]})
    with np.errstate(all="ignore"):
        code = main(["train", "--config", cfg, "--out", str(tmp_path / "run")])
    assert code == EXIT_RUNTIME
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summary["failed_seeds"] == [0] and summary["partial"]
    assert json.loads((tmp_path / "run" / "seed_0.json").read_text())["failed"] is True


def sweep_config(tmp_path, dataset, budget):
    return write_config(tmp_path / "sweep.json", {
        "dataset": str(dataset), "seeds": [0], "kmeans_inits": 2,
        "sweep": {"budget": budget, "fixed": {"max_epochs": 5, "hidden_dim": 4},
                  "space": {"layers": [1, 2, 3], "epsilon": [0.1, 0.5]}}})


def read_lines(path):
    return [json.loads(x) for x in path.read_text().splitlines()]


def test_sweep_budget_and_best(dataset, tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", sweep_config(tmp_path, dataset, 5), "--out", str(out)]) == EXIT_OK
    lines = read_lines(out / "trials.jsonl")
    assert len(lines) == 5
    best = json.loads((out / "best_hp.json").read_text())
    top = max(lines, key=lambda r: (r["mean"], -r["trial"]))
    assert best["trial"] == top["trial"] and best["hp"] == top["hp"] and best["mean"] == top["mean"]


def test_sweep_resumes(dataset, tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", sweep_config(tmp_path, dataset, 3), "--out", str(out)]) == EXIT_OK
    first = (out / "trials.jsonl").read_text().splitlines()
    assert len(first) == 3
    assert main(["sweep", "--config", sweep_config(tmp_path, dataset, 5), "--out", str(out)]) == EXIT_OK
    lines = (out / "trials.jsonl").read_text().splitlines()
    assert lines[:3] == first and len(lines) == 5
    assert [json.loads(x)["trial"] for x in lines] == [0, 1, 2, 3, 4]
    straight = tmp_path / "straight"
    assert main(["sweep", "--config", sweep_config(tmp_path, dataset, 5), "--out", str(straight)]) == EXIT_OK
    strip = lambda rows: [(r["trial"], r["hp"], r["per_seed"]) for r in rows]
    assert strip(read_lines(out / "trials.jsonl")) == strip(read_lines(straight / "trials.jsonl"))


def test_sweep_budget_flag_overrides_config(dataset, tmp_path):
    out = tmp_path / "sw"
    args = ["sweep", "--config", sweep_config(tmp_path, dataset, 5), "--budget", "2", "--out", str(out)]
    assert main(args) == EXIT_OK
    assert len(read_lines(out / "trials.jsonl")) == 2


def diagnose(tmp_path, gamma, extra=()):
    cfg = write_config(tmp_path / f"d{gamma}.json", {
        "generator": {"type": "path", "n": 9, "feature_dim": 3},
        "hp": {"layers": 4, "hidden_dim": 4, "gamma": gamma, "aggregation": "phi1"}})
    out = tmp_path / f"diag{gamma}"
    return main(["diagnose", "--config", cfg, "--out", str(out), *extra]), out


def test_diagnose_regimes_and_csv(tmp_path):
    code, out = diagnose(tmp_path, 0.0)
    assert code == EXIT_OK
    report = json.loads((out / "diagnose.json").read_text())
    assert report["regime"] == "non_dissipative"
    rows = (out / "sensitivity.csv").read_text().strip().splitlines()[1:]
    g_dist = set(range(9))
    assert sorted(int(r.split(",")[0]) for r in rows) == sorted(g_dist)
    code, out = diagnose(tmp_path, 1.0)
    assert json.loads((out / "diagnose.json").read_text())["regime"] == "dissipative"


def test_diagnose_csv_rows_match_bfs(tmp_path, dataset):
    cfg = write_config(tmp_path / "c.json", {"dataset": str(dataset), "hp": {"layers": 2, "hidden_dim": 3}})
    assert main(["diagnose", "--config", cfg, "--out", str(tmp_path / "d")]) == EXIT_OK
    dist = bfs_distances(load_graph(dataset), 0)
    rows = (tmp_path / "d" / "sensitivity.csv").read_text().strip().splitlines()[1:]
    assert [int(r.split(",")[0]) for r in rows] == sorted(set(dist[dist >= 0].tolist()))


def test_diagnose_with_params_file(tmp_path):
    init_params(3, 4, 9, seed=8).save(tmp_path / "p.json")
    code, _ = diagnose(tmp_path, 0.0, ["--params", str(tmp_path / "p.json")])
    assert code == EXIT_OK
    (tmp_path / "bad.json").write_text("{not json")
    code, _ = diagnose(tmp_path, 0.0, ["--params", str(tmp_path / "bad.json")])
    assert code == EXIT_INVALID
    init_params(3, 5, 9, seed=8).save(tmp_path / "wrong.json")
    code, _ = diagnose(tmp_path, 0.0, ["--params", str(tmp_path / "wrong.json")])
    assert code == EXIT_INVALID


def test_invalid_configs(tmp_path, dataset):
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == EXIT_INVALID
    cfg = write_config(tmp_path / "c.json", {"dataset": str(dataset), "hp": {"depth": 3}})
    assert main(["train", "--config", cfg]) == EXIT_INVALID
    cfg = write_config(tmp_path / "c2.json", {"hp": FAST_HP})
    assert main(["train", "--config", cfg]) == EXIT_INVALID
    cfg = write_config(tmp_path / "c3.json", {"dataset": str(tmp_path / "nowhere")})
    assert main(["train", "--config", cfg]) == EXIT_INVALID


def test_run_config_rules():
    with pytest.raises(ConfigError):
        RunConfig(dataset="a", generator={"n": 4})
    with pytest.raises(ConfigError):
        RunConfig(dataset="a", seeds=[])
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"dataset": "a", "colour": "red"})
    cfg = RunConfig.from_dict({"dataset": "a", "split": {"fractions": [0.5, 0.25, 0.25], "seed": 3}})
    assert cfg.fractions == (0.5, 0.25, 0.25) and cfg.split_seed == 3


def test_flags_override_config(dataset, tmp_path):
    cfg = write_config(tmp_path / "c.json", {"dataset": "/nonexistent", "hp": FAST_HP, "seeds": [1, 2, 3],
                                             "out": str(tmp_path / "from_config")})
    args = ["train", "--config", cfg, "--dataset", str(dataset), "--seeds", "4", "--out", str(tmp_path / "flag")]
    assert main(args) == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "flag").glob("seed_*.json")) == ["seed_4.json"]
    assert not (tmp_path / "from_config").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "uagnn", "generate", *GEN, "--out", str(tmp_path / "m")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m" / "manifest.json").is_file()
