import csv
import json
import math
import random

import numpy as np
import pytest
import yaml

from bcostar import harness
from bcostar.cli import main
from bcostar.harness import (
    AGGREGATE_HEADER,
    METRICS_HEADER,
    ConfigError,
    aggregate,
    config_from_dict,
    read_aggregate,
    run_experiment,
    theory_report,
    write_aggregate,
)

GRID_PARAMS = {"width": 4, "height": 4, "goal": [3, 3], "obstacles": [[1, 1]], "horizon": 12}


def grid_config(**overrides):
    data = {
        "experiment_id": "tiny",
        "env": {"kind": "gridworld", "params": GRID_PARAMS},
        "algorithm": {"name": "bco_star", "rollouts_per_iter": 3, "max_iters": 2, "rollout_mode": "sample"},
        "learners": {"policy": {"kind": "tabular"}, "inverse": {"kind": "tabular"}},
        "n_demos": 5,
        "seeds": [0],
    }
    data.update(overrides)
    return data


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


def write_metrics(run_dir, rewards, accuracy=0.5):
    run_dir.mkdir(parents=True)
    with open(run_dir / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for i, r in enumerate(rewards):
            w.writerow([i, 10 * i, "nan", 0.1, accuracy, r])
    return run_dir


class TestConfig:
    def test_defaults_fill_in(self):
        cfg = config_from_dict({"experiment_id": "x"})
        assert cfg.env.kind == "mountain_car"
        assert cfg.algorithm.rollouts_per_iter == 25
        assert cfg.learners.policy.hidden_dims == [300, 200]
        assert not cfg.exact_eval

    def test_round_trip(self):
        cfg = config_from_dict(grid_config())
        assert config_from_dict(cfg.to_dict()) == cfg
        assert cfg.exact_eval

    @pytest.mark.parametrize(
        "bad",
        [
            {"experiment_id": "x", "typo": 1},
            {"experiment_id": "x", "algorithm": {"name": "dagger"}},
            {"experiment_id": "x", "env": {"kind": "gridworld", "params": {"width": 2}}},
            {"experiment_id": "x", "train": {"initial": {"epochs": 0}}},
            {"experiment_id": "x", "seeds": []},
            ["not", "a", "mapping"],
        ],
    )
    def test_rejects_invalid(self, bad):
        with pytest.raises(ConfigError):
            config_from_dict(bad)

    def test_shipped_configs_parse(self):
        from pathlib import Path

        root = Path(__file__).resolve().parents[1] / "configs"
        for path in root.glob("*.yaml"):
            if path.stem != "theory_grid":
                harness.load_config(path)


class TestRunExperiment:
    def test_bc_writes_single_row(self, tmp_path):
        cfg = config_from_dict(grid_config(algorithm={"name": "bc"}))
        result = run_experiment(cfg, output_dir=tmp_path)
        run_dir = tmp_path / "tiny_seed0"
        lines = (run_dir / "metrics.csv").read_text().splitlines()
        assert lines[0] == ",".join(METRICS_HEADER)
        assert len(lines) == 2
        for name in ("config.json", "run.json", "best_policy.json", "final_policy.json"):
            assert (run_dir / name).is_file()
        snapshot = json.loads((run_dir / "config.json").read_text())
        assert snapshot["config"] == cfg.to_dict() and snapshot["seed"] == 0
        assert result.failures == []

    def test_rerun_is_bit_identical(self, tmp_path):
        cfg = config_from_dict(grid_config(seeds=[0, 1]))
        run_experiment(cfg, output_dir=tmp_path / "a")
        run_experiment(cfg, output_dir=tmp_path / "b")
        for seed in (0, 1):
            a = (tmp_path / "a" / f"tiny_seed{seed}" / "metrics.csv").read_bytes()
            b = (tmp_path / "b" / f"tiny_seed{seed}" / "metrics.csv").read_bytes()
            assert a == b
        assert (tmp_path / "a" / "aggregate.csv").read_bytes() == (tmp_path / "b" / "aggregate.csv").read_bytes()

    def test_parallel_matches_serial(self, tmp_path):
        cfg = config_from_dict(grid_config(seeds=[0, 1]))
        run_experiment(cfg, output_dir=tmp_path / "serial")
        run_experiment(cfg, jobs=2, output_dir=tmp_path / "parallel")
        assert (tmp_path / "serial" / "aggregate.csv").read_bytes() == (
            tmp_path / "parallel" / "aggregate.csv"
        ).read_bytes()

    def test_seed_offset_changes_runs(self, tmp_path):
        cfg = config_from_dict(grid_config())
        result = run_experiment(cfg, seed_offset=10, output_dir=tmp_path)
        assert result.runs[0].seed == 10
        assert (tmp_path / "tiny_seed10" / "metrics.csv").is_file()

    def test_bco_star_interactions_grow(self, tmp_path):
        cfg = config_from_dict(grid_config())
        rows = harness.read_metrics(run_experiment(cfg, output_dir=tmp_path).runs[0].run_dir)
        inter = [r["env_interactions"] for r in rows]
        assert len(rows) == 3 and inter == sorted(inter) and inter[1] > inter[0] > 0

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(ConfigError):
            run_experiment(config_from_dict(grid_config()), output_dir=blocker / "sub")


class TestAggregate:
    def test_single_run_has_zero_std(self, tmp_path):
        table = aggregate([write_metrics(tmp_path / "r", [0.2, 0.5, 0.9])])
        assert [row["normalized_reward_std"] for row in table] == [0.0, 0.0, 0.0]
        assert [row["normalized_reward_mean"] for row in table] == [0.2, 0.5, 0.9]

    def test_constant_runs_give_flat_line(self, tmp_path):
        dirs = [write_metrics(tmp_path / f"r{i}", [0.7] * 4) for i in range(3)]
        table = aggregate(dirs)
        for row in table:
            assert row["normalized_reward_mean"] == pytest.approx(0.7, abs=1e-15)
            assert row["normalized_reward_std"] == pytest.approx(0.0, abs=1e-15)

    def test_order_invariant(self, tmp_path):
        rng = np.random.default_rng(0)
        dirs = [write_metrics(tmp_path / f"r{i}", rng.random(5).tolist(), rng.random()) for i in range(7)]
        reference = aggregate(dirs)
        for seed in range(5):
            shuffled = dirs[:]
            random.Random(seed).shuffle(shuffled)
            assert aggregate(shuffled) == reference

    def test_mean_and_std_values(self, tmp_path):
        dirs = [write_metrics(tmp_path / f"r{i}", [v]) for i, v in enumerate([0.0, 1.0])]
        row = aggregate(dirs)[0]
        assert row["normalized_reward_mean"] == 0.5
        assert row["normalized_reward_std"] == 0.5
        assert row["n_runs"] == 2

    def test_unequal_lengths_use_common_prefix(self, tmp_path):
        a = write_metrics(tmp_path / "a", [0.1, 0.2, 0.3])
        b = write_metrics(tmp_path / "b", [0.1, 0.2])
        with pytest.warns(RuntimeWarning, match="common|first 2"):
            table = aggregate([a, b])
        assert len(table) == 2

    def test_csv_round_trip(self, tmp_path):
        table = aggregate([write_metrics(tmp_path / "r", [0.25, 0.5])])
        write_aggregate(table, tmp_path / "agg.csv")
        assert (tmp_path / "agg.csv").read_text().splitlines()[0] == ",".join(AGGREGATE_HEADER)
        back = read_aggregate(tmp_path / "agg.csv")
        assert [r["normalized_reward_mean"] for r in back] == [0.25, 0.5]

    def test_nan_accuracy_stays_nan(self, tmp_path):
        table = aggregate([write_metrics(tmp_path / "r", [0.5], accuracy=float("nan"))])
        assert math.isnan(table[0]["pseudo_label_accuracy_mean"])


class TestPlot:
    @pytest.mark.parametrize("x", ["iter", "interactions"])
    def test_writes_svg(self, tmp_path, x):
        table = aggregate([write_metrics(tmp_path / "r", [0.2, 0.6, 0.9])])
        write_aggregate(table, tmp_path / "agg.csv")
        out = harness.plot(tmp_path / "agg.csv", tmp_path / "plot.svg", x=x, title="curve")
        text = (tmp_path / "plot.svg").read_text()
        assert out.endswith("plot.svg") and text.lstrip().startswith("<?xml") and "<svg" in text

    def test_deterministic_bytes(self, tmp_path):
        table = aggregate([write_metrics(tmp_path / "r", [0.2, 0.6])])
        harness.plot(table, tmp_path / "a.svg")
        harness.plot(table, tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


class TestTheoryReport:
    def test_tables(self, tmp_path):
        grid = {
            "bounds": {"u": [0.0, 2.0, 20.0], "epsilon": [0.25]},
            "recurrence": {"N0": 8.0, "u": 2.0, "K": 1.0, "t": 20.0},
            "divergence": {"k": [1, 2, 3, 4, 5, 6]},
        }
        tables = theory_report(grid, tmp_path)
        for name in ("bounds", "recurrence", "trajectory", "divergence"):
            assert (tmp_path / f"{name}.csv").is_file()
        assert (tmp_path / "theory.svg").is_file()
        by_u = {row["u"]: row for row in tables["bounds"]}
        assert by_u[0.0]["sample_ratio"] == 1.0
        assert by_u[2.0]["sample_ratio"] == 2.0
        assert not by_u[20.0]["recurrent"] and math.isnan(by_u[20.0]["sample_ratio"])
        gaps = [row["rel_gap"] for row in tables["recurrence"]]
        assert gaps == sorted(gaps, reverse=True) and gaps[-1] < 0.01
        div = tables["divergence"]
        slopes = np.diff([r["n"] for r in div]) / np.diff([r["neg_log_gap"] for r in div])
        # linear in -log(1/u - eps0) with slope 2 u^2 K once eps0 is close to 1/u
        np.testing.assert_allclose(slopes[-3:], 8.0, rtol=2e-3)

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError):
            theory_report({"bound": {}}, tmp_path)


class TestCli:
    def test_run_aggregate_plot(self, tmp_path, capsys):
        cfg = write_yaml(tmp_path / "c.yaml", grid_config(seeds=[0, 1]))
        assert main(["run", cfg, "--output", str(tmp_path / "out"), "--jobs", "1"]) == 0
        runs = [str(tmp_path / "out" / f"tiny_seed{s}") for s in (0, 1)]
        assert main(["aggregate", *runs, "--output", str(tmp_path / "agg.csv")]) == 0
        assert (tmp_path / "agg.csv").read_bytes() == (tmp_path / "out" / "aggregate.csv").read_bytes()
        assert main(["plot", str(tmp_path / "agg.csv"), "--output", str(tmp_path / "p.svg")]) == 0
        assert (tmp_path / "p.svg").is_file()

    def test_theory(self, tmp_path):
        grid = write_yaml(tmp_path / "g.yaml", {"recurrence": {"t": 5.0}})
        assert main(["theory", grid, "--output", str(tmp_path / "th")]) == 0
        assert (tmp_path / "th" / "recurrence.csv").is_file()

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        cfg = write_yaml(tmp_path / "c.yaml", grid_config(extra=1))
        assert main(["run", cfg]) == 2
        assert "extra" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path):
        assert main(["run", str(tmp_path / "none.yaml")]) == 2

    def test_bad_arguments_exit_2(self):
        with pytest.raises(SystemExit) as info:
            main(["run"])
        assert info.value.code == 2
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 2

    def test_bad_jobs_exits_2(self, tmp_path):
        cfg = write_yaml(tmp_path / "c.yaml", grid_config())
        assert main(["run", cfg, "--jobs", "0"]) == 2

    def test_failing_seed_exits_3(self, tmp_path, monkeypatch, capsys):
        real = harness.run_seed

        def flaky(cfg, seed, baselines, output_dir=None):
            if seed == 1:
                raise RuntimeError("diverged")
            return real(cfg, seed, baselines, output_dir)

        monkeypatch.setattr(harness, "run_seed", flaky)
        cfg = write_yaml(tmp_path / "c.yaml", grid_config(seeds=[0, 1]))
        assert main(["run", cfg, "--output", str(tmp_path / "out")]) == 3
        assert "seed 1" in capsys.readouterr().err
        # the surviving seed is still written and aggregated
        assert (tmp_path / "out" / "tiny_seed0" / "metrics.csv").is_file()
        assert (tmp_path / "out" / "aggregate.csv").is_file()

    def test_aggregate_missing_dir_exits_2(self, tmp_path):
        assert main(["aggregate", str(tmp_path / "nothing")]) == 2
