import json

import pytest

from minsurro.config import CamelBenchRun, ConfigError, SolveRun, TrainRun, as_array, config_to_dict, load_config_file, parse_overrides, resolve


def test_parse_overrides_forms():
    out = parse_overrides(["--K", "3", "--gamma=0.2", "--shared-head", "--k", "1,2"])
    assert out == {"K": "3", "gamma": "0.2", "shared_head": True, "k": "1,2"}


def test_negative_numbers_are_values():
    assert parse_overrides(["--x_lower", "-1,-2"]) == {"x_lower": "-1,-2"}


def test_parse_overrides_rejects_positional():
    with pytest.raises(ConfigError):
        parse_overrides(["oops"])


def test_resolve_coerces_by_default_type():
    cfg = resolve(TrainRun, {"K": 4, "widths": [3, 3]}, {"gamma": "0.5", "shared_head": "true", "head_hidden": "4,2"})
    assert cfg.K == 4 and cfg.gamma == 0.5 and cfg.shared_head is True
    assert cfg.widths == (3, 3) and cfg.head_hidden == (4, 2)


def test_overrides_win_over_file():
    assert resolve(TrainRun, {"K": 4}, {"K": "6"}).K == 6


def test_json_list_values():
    cfg = resolve(SolveRun, {}, {"rows": "[[1, 1, 0.5]]", "p": "[0.1]"})
    assert cfg.rows == [[1, 1, 0.5]] and cfg.p == (0.1,)


@pytest.mark.parametrize("over", [{"bogus": "1"}, {"K": "two"}, {"K": 2.5}, {"shared_head": "maybe"}])
def test_resolve_errors(over):
    with pytest.raises(ConfigError):
        resolve(TrainRun, {}, over)


def test_config_file(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"k": [5], "seed": 7}))
    cfg = resolve(CamelBenchRun, load_config_file(tmp_path / "c.json"))
    assert cfg.k == (5,) and cfg.seed == 7
    (tmp_path / "bad.json").write_text("[1]")
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "bad.json")
    with pytest.raises(FileNotFoundError):
        load_config_file(tmp_path / "none.json")


def test_config_to_dict_is_json_ready():
    d = config_to_dict(CamelBenchRun())
    assert d["k"] == [1, 2, 5]
    json.dumps(d)


def test_as_array_length():
    assert as_array([1, 2], 2).tolist() == [1.0, 2.0]
    with pytest.raises(ConfigError):
        as_array([1], 2, "p")
