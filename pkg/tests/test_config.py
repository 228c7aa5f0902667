import json

import pytest

from flexqueue.config import DEFAULTS, ConfigError, RunConfig, env_overrides, load_file, resolve


def test_defaults_are_valid():
    cfg = resolve(environ={})
    assert cfg.market.lam.tolist() == [40.0, 60.0]
    assert cfg.policy.name == "acr"
    assert cfg.seed == DEFAULTS["seed"]
    assert cfg.sigma_profile().sigma.tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_precedence_file_env_flags(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("seed: 1\nmarket:\n  theta: 2.0\nsolver:\n  tol: 1e-6\n")
    cfg = resolve(f, environ={})
    assert (cfg.seed, cfg.market.theta, cfg["solver"]["tol"]) == (1, 2.0, 1e-6)
    env = {"FLEXQ_SEED": "2", "FLEXQ_MARKET__THETA": "3.5"}
    cfg = resolve(f, environ=env)
    assert (cfg.seed, cfg.market.theta) == (2, 3.5)
    cfg = resolve(f, {"seed": 3, "market.theta": None}, environ=env)
    assert (cfg.seed, cfg.market.theta) == (3, 3.5)


def test_env_values_parse_as_yaml():
    out = env_overrides({"FLEXQ_MARKET__LAM": "[1, 2.5]", "FLEXQ_SOLVER__EPS": "1e-12",
                         "OTHER": "x"})
    assert out == {"market": {"lam": [1, 2.5]}, "solver": {"eps": 1e-12}}


@pytest.mark.parametrize("doc", [
    {"market": {"lamda": [1, 2]}},
    {"bogus": 1},
    {"solver": {"eps": 2.0}},
    {"policy": {"kind": "fifo"}},
    {"market": {"lam": [1, 2, 3]}},
    {"market": {"theta": -1}},
    {"sigma": [[0.5, 0.6], [0, 1]]},
    {"sweep": {"grid": [3, 2]}},
    {"solver": {"cap": [1, 2, 3]}},
    {"couple": {"base": [1]}},
    {"market": {"patience": {"kind": "max_rejections", "K": -1}}},
    {"output": {"format": "xml"}},
    {"market": 5},
])
def test_invalid_configs_rejected(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


def test_limited_patience_and_explicit_sigma():
    cfg = RunConfig.from_dict({"market": {"patience": {"kind": "max_rejections", "K": 1}},
                               "policy": {"kind": "rcr"}, "sigma": [[0.5, 0.5], [0, 1]]})
    assert cfg.market.patience.K == 1
    assert cfg.sigma_profile().sigma[0, 1] == 0.5
    assert RunConfig.from_dict({"sigma": "solve"}).sigma_profile() is None


def test_cap_forms():
    assert RunConfig.from_dict({"solver": {"cap": 7}}).cap == 7
    assert RunConfig.from_dict({"solver": {"cap": [7, 9]}}).cap == (7, 9)


def test_manifest_file_loads_as_config(tmp_path):
    doc = RunConfig.from_dict({"seed": 9}).to_dict()
    doc["manifest"] = {"command": ["waits"], "config_sha256": "x"}
    f = tmp_path / "m.json"
    f.write_text(json.dumps(doc))
    assert "manifest" not in load_file(f)
    assert resolve(f, environ={}).seed == 9


def test_unreadable_or_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_file(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("market: [unclosed\n")
    with pytest.raises(ConfigError):
        load_file(bad)
    lst = tmp_path / "list.yaml"
    lst.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_file(lst)
