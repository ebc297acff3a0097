from pathlib import Path

import pytest

from core.config import OUTPUT_ROOT, RunConfig, config_from_dict, load_config, with_overrides
from core.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def test_defaults():
    cfg = config_from_dict({})
    assert cfg == RunConfig()
    assert cfg.profile.kind == "schwarzschild" and cfg.solver.h == 0.05
    assert cfg.experiment.beta == 0.5
    assert cfg.output_dir() == OUTPUT_ROOT / "verify-hypotheses"
    assert cfg.to_dict()["domain"]["r0"] == 2.0


def test_yaml_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(
        "profile: {kind: reissner-nordstrom, n: 2, m: 0.5, q: 0.3}\n"
        "domain: {boundary: graph, r0: 2, coefficients: [0.1, 0]}\n"
        "experiment: {kind: sweep, amplitudes: [0, 0.1]}\n"
        "output: {dir: out}\n"
        "seed: 7\n", encoding="utf-8")
    cfg = load_config(path)
    assert cfg.profile.q == 0.3
    assert cfg.domain.r0 == 2.0 and isinstance(cfg.domain.r0, float)
    assert cfg.domain.coefficients == (0.1, 0.0)
    assert cfg.experiment.amplitudes == (0.0, 0.1)
    assert cfg.output_dir() == Path("out")
    assert cfg.seed == 7


@pytest.mark.parametrize("data", [
    {"profil": {}},
    {"profile": {"kind": "schwarzschild", "mass": 1.0}},
    {"profile": {"n": 2.5}},
    {"profile": {"kind": "kerr"}},
    {"solver": {"h": "small"}},
    {"solver": {"h": -0.1}},
    {"solver": {"degree": 1}},
    {"experiment": {"T_cap": -1.0}},
    {"experiment": {"beta1": 0.0}},
    {"domain": {"coefficients": 0.1}},
    {"output": {"field_csv": "yes"}},
    {"tolerances": {"identity": 0}},
    {"domain": [1, 2]},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("profile: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(bad)
    scalar = tmp_path / "scalar.yaml"
    scalar.write_text("3\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(scalar)


def test_overrides():
    cfg = with_overrides(RunConfig(), h=0.2, seed=3, out="elsewhere", experiment="sweep")
    assert cfg.solver.h == 0.2 and cfg.seed == 3
    assert cfg.output_dir() == Path("elsewhere")
    assert cfg.experiment.kind == "sweep"
    with pytest.raises(ConfigError):
        with_overrides(cfg, h=0.0)
    with pytest.raises(ConfigError):
        with_overrides(cfg, experiment="plot")


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.experiment.kind
