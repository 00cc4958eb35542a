import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from sensorsched.errors import ConfigError
from sensorsched.harness import cli
from sensorsched.harness.config import load_config, parse_config
from sensorsched.harness.runner import (
    CSV_COLUMNS,
    run_experiment,
    spearman,
    stream_seed,
    substream,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def base_config(**overrides):
    data = {
        "kind": "single_step_schedule",
        "id": "t",
        "seed": 1,
        "trials": 5,
        "model": {"m": 3, "n": 6, "sigma": 1.0},
        "schedule": {
            "k": 2,
            "epsilons": [0.5],
            "methods": [
                "brute_force_optimal",
                "classic_greedy",
                "randomized_greedy",
                "random_uniform",
            ],
        },
    }
    data.update(overrides)
    return data


def write_toml(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


class TestConfigParsing:
    def test_all_shipped_configs_load(self):
        for p in sorted(CONFIG_DIR.glob("*.toml")):
            cfg = load_config(p)
            assert cfg.kind in (
                "single_step_schedule",
                "multi_step_kalman",
                "curvature_study",
                "theorem2_study",
                "network_balance",
                "theorem1_verify",
                "speedup",
            )

    def test_unknown_key_is_an_error(self):
        data = base_config()
        data["model"]["bogus"] = 1
        with pytest.raises(ConfigError, match="bogus"):
            parse_config(data)

    def test_unknown_top_level_key(self):
        data = base_config()
        data["extra_table"] = {"x": 1}
        with pytest.raises(ConfigError, match="extra_table"):
            parse_config(data)

    def test_epsilon_out_of_range_names_field(self):
        data = base_config()
        data["schedule"]["epsilons"] = [1.5]
        with pytest.raises(ConfigError, match=r"schedule\.epsilons\[0\]"):
            parse_config(data)

    def test_epsilon_below_classic_limit(self):
        data = base_config()
        data["schedule"]["epsilons"] = [0.5 * math.exp(-2)]
        with pytest.raises(ConfigError, match=r"epsilons\[0\]"):
            parse_config(data)

    def test_budget_exceeding_sensor_count(self):
        data = base_config()
        data["schedule"]["k"] = 9
        with pytest.raises(ConfigError, match=r"schedule\.k"):
            parse_config(data)

    def test_missing_required_section(self):
        data = base_config()
        del data["schedule"]
        with pytest.raises(ConfigError, match=r"\[schedule\]"):
            parse_config(data)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="kind"):
            parse_config({"kind": "nope"})

    def test_type_errors_name_field(self):
        data = base_config()
        data["model"]["m"] = "four"
        with pytest.raises(ConfigError, match=r"model\.m"):
            parse_config(data)

    def test_network_rank_validation(self):
        data = {
            "kind": "network_balance",
            "network": {"nodes": 2, "state_dim": 4, "ranks": [5, 1]},
        }
        with pytest.raises(ConfigError, match=r"network\.ranks\[0\]"):
            parse_config(data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "missing.toml")

    def test_toml_syntax_error(self, tmp_path):
        p = write_toml(tmp_path / "bad.toml", "kind = [unclosed")
        with pytest.raises(ConfigError, match="parse error"):
            load_config(p)


TINY_SINGLE = """
kind = "single_step_schedule"
id = "tiny"
seed = 7
trials = 8

[model]
m = 3
n = 6

[schedule]
k = 2
epsilons = [0.5]
methods = ["brute_force_optimal", "classic_greedy", "randomized_greedy", "random_uniform"]
"""

TINY_NETWORK = """
kind = "network_balance"
id = "tinynet"
seed = 3

[network]
nodes = 3
state_dim = 6
ranks = [3, 4, 2]
budgets = [4]
gammas = [0.0, 50.0]
horizon = 3
runs = 2
"""


def read_rows(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class TestRunnerOutputs:
    def test_csv_schema_and_reproducibility(self, tmp_path):
        cfg_path = write_toml(tmp_path / "tiny.toml", TINY_SINGLE)
        cfg = load_config(cfg_path)
        run_experiment(cfg, out_dir=tmp_path / "a")
        run_experiment(cfg, out_dir=tmp_path / "b")
        rows_a = read_rows(tmp_path / "a" / "metrics.csv")
        rows_b = read_rows(tmp_path / "b" / "metrics.csv")
        assert rows_a and list(rows_a[0]) == CSV_COLUMNS
        for ra, rb in zip(rows_a, rows_b):
            for col in CSV_COLUMNS:
                if col != "wall_time_ns":
                    assert ra[col] == rb[col]

    def test_floats_round_trip(self, tmp_path):
        cfg = load_config(write_toml(tmp_path / "tiny.toml", TINY_SINGLE))
        summary, out = run_experiment(cfg, out_dir=tmp_path / "o")
        for row in read_rows(out / "metrics.csv"):
            if row["objective"]:
                val = float(row["objective"])
                assert repr(val) == row["objective"]

    def test_seed_changes_randomized_rows(self, tmp_path):
        cfg = load_config(write_toml(tmp_path / "tiny.toml", TINY_SINGLE))
        import dataclasses

        run_experiment(cfg, out_dir=tmp_path / "a")
        run_experiment(dataclasses.replace(cfg, seed=99), out_dir=tmp_path / "b")
        a = [r["seed"] for r in read_rows(tmp_path / "a" / "metrics.csv") if r["seed"]]
        b = [r["seed"] for r in read_rows(tmp_path / "b" / "metrics.csv") if r["seed"]]
        assert a != b

    def test_json_format(self, tmp_path):
        cfg = load_config(write_toml(tmp_path / "tiny.toml", TINY_SINGLE))
        _, out = run_experiment(cfg, out_dir=tmp_path / "o", fmt="json")
        records = json.loads((out / "metrics.json").read_text())
        assert records and set(records[0]) == set(CSV_COLUMNS)

    def test_threads_do_not_change_results(self, tmp_path):
        cfg = load_config(write_toml(tmp_path / "tiny.toml", TINY_SINGLE))
        run_experiment(cfg, out_dir=tmp_path / "a", threads=1)
        run_experiment(cfg, out_dir=tmp_path / "b", threads=4)
        rows_a = read_rows(tmp_path / "a" / "metrics.csv")
        rows_b = read_rows(tmp_path / "b" / "metrics.csv")
        for ra, rb in zip(rows_a, rows_b):
            for col in CSV_COLUMNS:
                if col != "wall_time_ns":
                    assert ra[col] == rb[col]

    def test_single_step_ordering_flags(self, tmp_path):
        cfg = load_config(write_toml(tmp_path / "tiny.toml", TINY_SINGLE))
        summary, _ = run_experiment(cfg, out_dir=tmp_path / "o")
        assert summary["ordering"]["opt_ge_classic"]
        assert summary["ordering"]["classic_ge_mean_randomized"]
        assert summary["ordering"]["mean_randomized_ge_mean_random"]

    def test_network_rows_per_node(self, tmp_path):
        cfg = load_config(write_toml(tmp_path / "net.toml", TINY_NETWORK))
        summary, out = run_experiment(cfg, out_dir=tmp_path / "o")
        rows = read_rows(out / "metrics.csv")
        methods = {r["method"] for r in rows}
        assert {"greedy_exchange:node0", "greedy_exchange:node1", "greedy_exchange:node2"} <= methods
        assert summary["per_budget"]["4"]["runs"] == 2


class TestCli:
    def test_run_exit_zero(self, tmp_path, capsys):
        cfg = write_toml(tmp_path / "tiny.toml", TINY_SINGLE)
        assert cli.main(["--out-dir", str(tmp_path / "o"), "run", str(cfg)]) == 0

    def test_config_error_exit_two(self, tmp_path, capsys):
        bad = write_toml(
            tmp_path / "bad.toml",
            TINY_SINGLE.replace("epsilons = [0.5]", "epsilons = [1.5]"),
        )
        assert cli.main(["run", str(bad)]) == 2
        assert "epsilons[0]" in capsys.readouterr().err

    def test_subcommand_kind_mismatch_exit_two(self, tmp_path, capsys):
        cfg = write_toml(tmp_path / "tiny.toml", TINY_SINGLE)
        assert cli.main(["network", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "network_balance" in err

    def test_oracle_cap_exit_three(self, tmp_path, capsys):
        big = write_toml(
            tmp_path / "big.toml",
            """
kind = "single_step_schedule"
id = "big"
trials = 1

[model]
m = 2
n = 40

[schedule]
k = 20
methods = ["brute_force_optimal"]
""",
        )
        assert cli.main(["--out-dir", str(tmp_path / "o"), "run", str(big)]) == 3

    def test_violation_exit_four(self, tmp_path, monkeypatch):
        cfg = write_toml(
            tmp_path / "v.toml",
            """
kind = "speedup"
id = "v"

[speedup]
n = 120
k = 5
m = 4
epsilons = [0.5]
repeats = 1
""",
        )
        from sensorsched.harness import runner

        def fake(cfg_, threads):
            return [], {"violations": 3}

        monkeypatch.setitem(runner._RUNNERS, "speedup", fake)
        assert cli.main(["--out-dir", str(tmp_path / "o"), "speedup", str(cfg)]) == 4

    def test_named_subcommands_map_to_kinds(self, tmp_path):
        net = write_toml(tmp_path / "net.toml", TINY_NETWORK)
        assert cli.main(["--out-dir", str(tmp_path / "o"), "network", str(net)]) == 0

    def test_seed_override_flag(self, tmp_path):
        cfg = write_toml(tmp_path / "tiny.toml", TINY_SINGLE)
        assert cli.main(["--seed", "5", "--out-dir", str(tmp_path / "a"), "run", str(cfg)]) == 0
        assert cli.main(["--seed", "6", "--out-dir", str(tmp_path / "b"), "run", str(cfg)]) == 0
        a = (tmp_path / "a" / "summary.json").read_text()
        b = (tmp_path / "b" / "summary.json").read_text()
        assert json.loads(a)["seed"] == 5
        assert json.loads(b)["seed"] == 6


class TestHelpers:
    def test_substream_independent_of_call_order(self):
        a = substream(1, 2, 3).standard_normal(4)
        b = substream(1, 2, 4).standard_normal(4)
        a2 = substream(1, 2, 3).standard_normal(4)
        assert np.array_equal(a, a2)
        assert not np.array_equal(a, b)

    def test_stream_seed_stable(self):
        assert stream_seed(7, 1, 2) == stream_seed(7, 1, 2)
        assert stream_seed(7, 1, 2) != stream_seed(7, 1, 3)

    def test_spearman_perfect_and_inverse(self):
        assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
        assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
        assert abs(spearman([1, 2, 3, 4], [2, 1, 4, 3])) < 1.0
