from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import qmc

from reifenberg.config import Configuration
from reifenberg.config import config_hash
from reifenberg.errors import ConfigurationError
from reifenberg.utils import dyadic_radii
from reifenberg.utils import parse_assignment
from reifenberg.utils import random_stream


def test_should_read_defaults():
    settings = Configuration.get().settings
    assert settings.dimension == 2
    assert settings.snowflake.theta == 0.1
    assert settings.whitney.K == 4.0
    assert settings.measure.radius_levels == [4, 5, 6, 7, 8]


def test_should_override_nested_values():
    configuration = Configuration.get()
    configuration.override(snowflake={"theta": 0.2}, seed=7)
    assert configuration.settings.snowflake.theta == 0.2
    assert configuration.settings.snowflake.depth == 2
    assert configuration.settings.seed == 7


def test_should_reject_theta_outside_unit_interval():
    with pytest.raises(ConfigurationError, match="snowflake.theta"):
        Configuration.get().override(snowflake={"theta": 1.5})


def test_should_reject_depth_above_limit():
    with pytest.raises(ConfigurationError, match="exceeds max_depth"):
        Configuration.get().override(snowflake={"depth": 9})


def test_should_reject_unknown_keys():
    with pytest.raises(ConfigurationError, match="Invalid configuration"):
        Configuration.get().override(snowflake={"colour": "blue"})


def test_should_reject_points_of_wrong_dimension():
    with pytest.raises(ConfigurationError, match="does not have 2 coordinates"):
        Configuration.get().override(enlargement={"e_points": [[0.0, 0.0, 0.0]]})


def test_should_load_run_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("seed = 11\n[harmonic]\nn = 500\n", encoding="utf-8")
    configuration = Configuration.get()
    configuration.load_file(path)
    assert configuration.settings.seed == 11
    assert configuration.settings.harmonic.n == 500
    assert configuration.settings.snowflake.theta == 0.1


def test_should_fail_on_missing_run_file(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        Configuration.get().load_file(tmp_path / "missing.toml")


def test_should_fail_on_invalid_run_file(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("seed = = 3\n", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="is not valid"):
        Configuration.get().load_file(path)


def test_should_change_hash_with_settings():
    configuration = Configuration.get()
    before = config_hash(configuration.settings)
    assert before == config_hash(configuration.settings)
    configuration.override(seed=1)
    assert before != config_hash(configuration.settings)


def test_should_parse_assignments():
    assert parse_assignment("snowflake.theta=0.2") == {"snowflake": {"theta": 0.2}}
    assert parse_assignment("seed=3") == {"seed": 3}
    assert parse_assignment("harmonic.pole=[0, 1]") == {"harmonic": {"pole": [0, 1]}}
    assert parse_assignment("snowflake.bounded=false") == {"snowflake": {"bounded": False}}


def test_should_reject_assignment_without_value():
    with pytest.raises(ValueError, match="Expected key=value"):
        parse_assignment("snowflake.theta")


def test_should_reproduce_random_streams():
    a = random_stream(5, 3).random(4)
    b = random_stream(5, 3).random(4)
    c = random_stream(5, 4).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_should_seed_scrambled_halton_from_stream():
    first = qmc.Halton(d=2, scramble=True, seed=random_stream(11, 0)).random(8)
    second = qmc.Halton(d=2, scramble=True, seed=random_stream(11, 0)).random(8)
    other = qmc.Halton(d=2, scramble=True, seed=random_stream(11, 1)).random(8)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, other)
    assert np.all((first >= 0) & (first < 1))


def test_should_accept_wide_stream_index():
    assert random_stream(3, 1 << 32).random() != random_stream(3, 0).random()


def test_should_list_dyadic_radii():
    assert dyadic_radii(0.25, 1 / 32).tolist() == [0.25, 0.125, 0.0625, 0.03125]
    assert dyadic_radii(0.3, 0.2).tolist() == [0.25]
