import json
import subprocess
import sys

import numpy as np
import pytest

from qdsom.cli import (
    AGENT_CSV, AGGREGATE_JSON, GLOBAL_CSV, OUTPUT_ENV_VAR, SUMMARY_JSON, SWEEP_CSV, main,
    read_agent_rewards, read_global_rewards, read_json, read_sweep,
)
from qdsom.harness import build_scenario, run

FAST = ["--mode", "daily", "--size", "small", "--steps", "30"]


def cli(*args):
    return main([str(a) for a in args])


class TestRun:
    def test_outputs(self, tmp_path):
        out = tmp_path / "r"
        assert cli("run", *FAST, "--reward", "comfort", "--seed", 42, "--out", out) == 0
        assert {p.name for p in out.iterdir()} == {GLOBAL_CSV, AGENT_CSV, SUMMARY_JSON}
        g = read_global_rewards(out / GLOBAL_CSV)
        a = read_agent_rewards(out / AGENT_CSV)
        summary = read_json(out / SUMMARY_JSON)
        assert g.shape == (30,) and a.shape == (30, 26)
        assert summary["seed"] == 42 and summary["spec"]["reward"] == "comfort"
        assert {"score", "wall_time", "warnings"} <= set(summary)
        assert summary["score"] == pytest.approx(g.mean(), abs=1e-15)

    def test_round_trip_is_exact(self, tmp_path):
        cli("run", *FAST, "--reward", "equity", "--algo", "qdsom", "--seed", 3, "--out", tmp_path)
        res = run(build_scenario("daily", "small", "equity", "qdsom", seed=3, steps=30))
        assert np.array_equal(read_global_rewards(tmp_path / GLOBAL_CSV), res.global_rewards)
        assert np.array_equal(read_agent_rewards(tmp_path / AGENT_CSV), res.agent_rewards)
        assert read_json(tmp_path / SUMMARY_JSON)["score"] == res.score

    def test_byte_identical(self, tmp_path):
        for d in ("a", "b"):
            cli("run", *FAST, "--seed", 42, "--out", tmp_path / d)
        for name in (GLOBAL_CSV, AGENT_CSV):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_unknown_reward_exits_2(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            cli("run", *FAST, "--reward", "pollution", "--out", tmp_path)
        assert exc.value.code == 2

    @pytest.mark.parametrize("extra", [["--set", "bogus=1"], ["--set", "tau"], ["--set", "tau=-1"],
                                       ["--env-config", "missing.json"]])
    def test_invalid_configuration_exits_2(self, tmp_path, extra, capsys):
        assert cli("run", *FAST, *extra, "--out", tmp_path) == 2
        assert "error" in capsys.readouterr().err

    def test_runtime_failure_exits_1(self, tmp_path, monkeypatch, capsys):
        from qdsom import cli as cli_module
        from qdsom.errors import ContractViolation
        from qdsom.harness import StepError

        def boom(spec, check_invariants=False):
            raise StepError(7, ContractViolation("battery bookkeeping off"))

        monkeypatch.setattr(cli_module, "run", boom)
        assert cli("run", *FAST, "--out", tmp_path) == 1
        assert "step 7" in capsys.readouterr().err

    def test_env_var_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV_VAR, str(tmp_path / "env"))
        assert cli("run", *FAST) == 0
        assert (tmp_path / "env" / GLOBAL_CSV).exists()

    def test_env_config(self, tmp_path):
        cfg = {"mode": "daily", "roster": [{"profile": "Office", "count": 3}], "scarcity_factor": 1.0}
        (tmp_path / "env.json").write_text(json.dumps(cfg))
        assert cli("run", *FAST, "--env-config", tmp_path / "env.json", "--out", tmp_path / "o") == 0
        assert read_agent_rewards(tmp_path / "o" / AGENT_CSV).shape == (30, 3)

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "qdsom", "run", *FAST, "--steps", "5", "--out", str(tmp_path)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / SUMMARY_JSON).exists()


class TestBatch:
    def test_aggregate(self, tmp_path):
        assert cli("batch", *FAST, "--n-seeds", 3, "--first-seed", 5, "--out", tmp_path) == 0
        agg = read_json(tmp_path / AGGREGATE_JSON)
        scores = [s["score"] for s in agg["scores"]]
        assert [s["seed"] for s in agg["scores"]] == [5, 6, 7]
        assert agg["n_seeds"] == 3 and agg["mean"] == pytest.approx(np.mean(scores), abs=1e-15)
        assert agg["min"] == min(scores) and agg["max"] == max(scores)
        assert len([p for p in tmp_path.iterdir() if p.is_dir()]) == 3

    def test_single_seed(self, tmp_path):
        cli("batch", *FAST, "--seeds", 9, "--out", tmp_path)
        agg = read_json(tmp_path / AGGREGATE_JSON)
        assert agg["mean"] == agg["scores"][0]["score"]

    def test_duplicate_seeds(self, tmp_path):
        cli("batch", *FAST, "--seeds", 4, 4, "--out", tmp_path)
        a, b = read_json(tmp_path / AGGREGATE_JSON)["scores"]
        assert a["score"] == b["score"]

    def test_parallel_matches_serial(self, tmp_path):
        cli("batch", *FAST, "--seeds", 1, 2, "--out", tmp_path / "s")
        cli("batch", *FAST, "--seeds", 1, 2, "--jobs", 2, "--out", tmp_path / "p")
        assert read_json(tmp_path / "s" / AGGREGATE_JSON)["scores"] == read_json(tmp_path / "p" / AGGREGATE_JSON)["scores"]

    def test_negative_seed(self, tmp_path):
        assert cli("batch", *FAST, "--seeds", -1, "--out", tmp_path) == 2


class TestSweep:
    def test_table(self, tmp_path):
        assert cli("sweep", *FAST, "--grid", "tau=0.4,0.6", "--n-seeds", 2, "--out", tmp_path) == 0
        rows = read_sweep(tmp_path / SWEEP_CSV)
        assert len(rows) == 2
        assert sorted(r["tau"] for r in rows) == ["0.4", "0.6"]
        assert [r["rank"] for r in rows] == [1, 2]
        means = [r["mean_score"] for r in rows]
        assert means == sorted(means, reverse=True)
        runs = list(tmp_path.glob("combo_*/seed_*"))
        assert len(runs) == 4

    def test_two_parameters(self, tmp_path):
        assert cli("sweep", *FAST, "--steps", 10, "--grid", "tau=0.4,0.6", "--grid", "noise=0.01,0.05,0.1",
                   "--seeds", 0, "--out", tmp_path) == 0
        rows = read_sweep(tmp_path / SWEEP_CSV)
        assert len(rows) == 6 and all(r["n_seeds"] == 1 for r in rows)
        assert all(rows[i]["mean_score"] >= rows[i + 1]["mean_score"] for i in range(5))

    def test_scores_match_batch(self, tmp_path):
        cli("sweep", *FAST, "--grid", "tau=0.5", "--seeds", 3, "--out", tmp_path / "sw")
        cli("batch", *FAST, "--set", "tau=0.5", "--seeds", 3, "--out", tmp_path / "b")
        assert read_sweep(tmp_path / "sw" / SWEEP_CSV)[0]["mean_score"] == read_json(tmp_path / "b" / AGGREGATE_JSON)["mean"]

    @pytest.mark.parametrize("grid", [[], ["--grid", "bogus=1,2"], ["--grid", "tau="], ["--grid", "tau=abc"]])
    def test_invalid_grid_exits_2(self, tmp_path, grid, capsys):
        assert cli("sweep", *FAST, *grid, "--out", tmp_path) == 2
