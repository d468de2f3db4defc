#!/usr/bin/env python3
"""
Tests for the cmc-explore command line
"""

import json

import numpy as np
import pytest
from pydantic import ValidationError

from cmc_explore.cli import ExperimentConfig, main, parse_param_space, parse_vector
from cmc_explore.core import CountTensor
from cmc_explore.environments import build_example
from cmc_explore.exceptions import ControlSetError
from cmc_explore.export import save_counts
from cmc_explore.policies import ParamShape


def read_json(path):
    return json.loads(path.read_text())


class TestParsing:
    """Vector and parameter-space arguments"""

    @pytest.mark.parametrize("text", ["1,1,7", "(1, 1, 7)", "[1,1,7]", " 1, 1, 7 "])
    def test_parse_vector(self, text):
        assert parse_vector(text) == (1, 1, 7)

    def test_parse_vector_rejects_text(self):
        with pytest.raises(ControlSetError):
            parse_vector("1,one,7")

    def test_parse_param_space_defaults(self):
        space = parse_param_space(None, ParamShape(num_entries=1), 2, 2, 20)
        assert space.bounds == ((1, 2), (1, 2), (1, 20))

    def test_parse_param_space_overrides(self):
        space = parse_param_space("state=1:1,time=5:9,entries=2,shared=true", ParamShape(num_entries=1), 4, 3, 20)
        assert space.shape == ParamShape(num_entries=2, shared_time_constant=True)
        assert space.bounds == ((1, 1), (1, 1), (1, 3), (1, 3), (5, 9))

    @pytest.mark.parametrize("text", ["time=5", "colour=1:2"])
    def test_parse_param_space_errors(self, text):
        with pytest.raises(ValueError):
            parse_param_space(text, ParamShape(num_entries=1), 2, 2, 20)


class TestExperimentConfig:
    """Validation of command configurations"""

    def test_needs_exactly_one_environment(self):
        with pytest.raises(ValidationError, match="Exactly one"):
            ExperimentConfig(horizon=5)

    def test_unknown_builtin(self):
        with pytest.raises(ValidationError, match="Unknown builtin"):
            ExperimentConfig(env="example9", horizon=5)

    def test_parametric_needs_vector(self):
        with pytest.raises(ValidationError, match="needs a parameter vector"):
            ExperimentConfig(env="example1", horizon=5, policy="parametric")

    def test_rejects_unknown_fields(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(env="example1", horizon=5, temperature=1.0)

    def test_sim_config(self):
        cfg = ExperimentConfig(env="Example 1", horizon=20, trajectories=4, seed=3)
        sim = cfg.sim_config()
        assert (sim.horizon, sim.num_trajectories, sim.master_seed) == (20, 4, 3)
        assert cfg.sim_config(1).num_trajectories == 1


def test_optimize_example1(tmp_path, capsys):
    code = main(["optimize", "--env", "example1", "--horizon", "20", "--method", "exhaustive", "--out", str(tmp_path)])
    assert code == 0
    record = read_json(tmp_path / "optimize.json")
    assert record["r"] == [1, 1, 7]
    assert json.loads(capsys.readouterr().out)["r"] == [1, 1, 7]


def test_cem_writes_trace(tmp_path):
    code = main(
        ["optimize", "--env", "example1", "--horizon", "20", "--method", "cem", "--seed", "1", "--out", str(tmp_path)]
    )
    assert code == 0
    lines = (tmp_path / "cem_trace.csv").read_text().splitlines()
    assert lines[0] == "iteration,best_objective,p_1,p_2,p_3"
    assert len(lines) >= 2


def test_simulate_parametric(tmp_path):
    code = main(["simulate", "--env", "example1", "--horizon", "20", "--r", "1,1,7", "--out", str(tmp_path)])
    assert code == 0
    summary = read_json(tmp_path / "summary.json")
    assert summary["policy"] == "parametric"
    assert summary["sampling_division"][0] == [1, 6]
    assert 0.09 <= summary["final_missing_info"] <= 0.11
    for name in ("trajectory.csv", "curve.csv", "counts.json"):
        assert (tmp_path / name).is_file()
    assert len((tmp_path / "curve.csv").read_text().splitlines()) == 22


def test_rollout_command(tmp_path):
    code = main(["rollout", "--env", "example1", "--horizon", "20", "--policy", "greedy", "--out", str(tmp_path)])
    assert code == 0
    summary = read_json(tmp_path / "rollout_summary.json")
    assert summary["base"] == "greedy"
    assert summary["sampling_division"] == [[1, 6], [7, 6]]


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--env", "example6", "--horizon", "30", "--trajectories", "8", "--policy", "random", "--seed", "3"],
        ["compare", "--env", "example1", "--horizon", "20", "--r", "1,1,7"],
    ],
)
def test_reruns_write_identical_files(tmp_path, argv):
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(argv + ["--out", str(first)]) == 0
    assert main(argv + ["--out", str(second)]) == 0
    names = sorted(p.name for p in first.iterdir())
    assert names and names == sorted(p.name for p in second.iterdir())
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_plan_from_model(tmp_path):
    bundle = build_example(4)
    model = tmp_path / "counts.json"
    model.write_bytes(save_counts(CountTensor(np.rint(3 * bundle.cmc.transitions).astype(np.int64))))
    out = tmp_path / "plan"
    code = main(
        ["plan", "--env", "example4", "--model", str(model), "--goal", "23", "--horizon", "1", "--out", str(out)]
    )
    assert code == 0
    record = read_json(out / "plan.json")
    assert record["path"] == [3, 8, 9, 10, 15, 14, 13, 12, 17, 16, 21, 22, 23]
    assert record["values"]["23"] == pytest.approx(0.0, abs=1e-9)


def test_plan_rejects_model_of_wrong_shape(tmp_path):
    model = tmp_path / "counts.json"
    model.write_bytes(save_counts(CountTensor.zeros(2, 2)))
    assert main(["plan", "--env", "example4", "--model", str(model), "--horizon", "1"]) == 2


def test_compare_example1(tmp_path):
    code = main(["compare", "--env", "example1", "--horizon", "20", "--r", "1,1,7", "--out", str(tmp_path)])
    assert code == 0
    results = read_json(tmp_path / "compare.json")
    assert set(results) == {"parametric", "greedy", "random", "rollout"}
    assert results["parametric"]["final_missing_info"] < results["greedy"]["final_missing_info"]
    header = (tmp_path / "compare_curves.csv").read_text().splitlines()[0]
    assert header == "period,parametric,greedy,random,rollout"


def test_reproduce_example1(tmp_path):
    assert main(["--reproduce", "example1", "--out", str(tmp_path)]) == 0
    assert read_json(tmp_path / "optimize.json")["r"] == [1, 1, 7]
    assert read_json(tmp_path / "summary.json")["r"] == [1, 1, 7]
    assert (tmp_path / "rollout_summary.json").is_file()


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["optimize", "--horizon", "5"],
        ["simulate", "--env", "example1", "--horizon", "5", "--r", "1,1"],
        ["simulate", "--env", "example1", "--horizon", "0", "--policy", "greedy"],
        ["optimize", "--env", "example1", "--horizon", "5", "--param-space", "time=9:2"],
        ["plan", "--env", "example1", "--horizon", "5", "--policy", "greedy"],
        ["--reproduce", "example9"],
        ["nonsense"],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == 2


def test_exhaustive_guard_exit_code():
    assert main(["optimize", "--env", "example4", "--horizon", "400", "--method", "exhaustive"]) == 3


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "cmc-explore" in capsys.readouterr().out


if __name__ == "__main__":
    pytest.main([__file__])
