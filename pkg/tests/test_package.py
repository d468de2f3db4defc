#!/usr/bin/env python3
"""
Packaging tests for cmc-explore

Checks that the builtin environment and experiment fixtures ship with the
package and stay consistent with the configuration models.
"""

import json

import pytest

import cmc_explore
from cmc_explore.cli import ExperimentConfig
from cmc_explore.environments import load_environment
from cmc_explore.utils import get_fixture_path, list_fixtures, normalized_fixture_name


class TestFixtures:
    """Builtin fixtures bundled under cmc_explore/fixtures"""

    def test_environment_fixtures_listed(self):
        assert list_fixtures("environments") == ["example3", "example4", "example4modifiedmaze", "example5"]

    def test_experiment_fixtures_listed(self):
        assert list_fixtures("experiments") == [f"example{n}" for n in range(1, 7)]

    @pytest.mark.parametrize("name", ["Example 4", "example-4", "example4.json", "EXAMPLE4"])
    def test_fixture_names_are_normalized(self, name):
        assert normalized_fixture_name(name) == "example4"
        assert get_fixture_path("experiments", name) is not None

    def test_missing_fixture_warns(self):
        with pytest.warns(UserWarning, match="not found"):
            assert get_fixture_path("experiments", "example9") is None

    @pytest.mark.parametrize("name", ["example3", "example4", "example4modifiedmaze", "example5"])
    def test_environment_fixtures_load(self, name):
        bundle = load_environment(get_fixture_path("environments", name))
        assert bundle.grid is not None
        assert bundle.cmc.is_deterministic

    @pytest.mark.parametrize("n", range(1, 7))
    def test_experiment_fixtures_validate(self, n):
        path = get_fixture_path("experiments", f"example{n}")
        cfg = ExperimentConfig.model_validate(json.loads(path.read_text()))
        assert cfg.env == f"example{n}"
        assert cfg.alpha == 0.05
        assert cfg.horizon >= 20


def test_public_api():
    for name in cmc_explore.__all__:
        assert hasattr(cmc_explore, name), f"{name} should be exported by cmc_explore"
    assert isinstance(cmc_explore.__version__, str)


if __name__ == "__main__":
    pytest.main([__file__])
