import json
from pathlib import Path

import pandas as pd
import pytest

from core.cli import _Checks, build_parser, main
from core.errors import (ConfigError, FlowError, NoHorizonError, ResidualThresholdError, SchemaError,
                         SolverError, SurfaceError, exit_code_for)
from core.report_store import HYPOTHESIS_COLUMNS

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("exc, code", [
    (ConfigError("x"), 2), (SchemaError("x"), 2), (NoHorizonError("x"), 2),
    (SurfaceError("x"), 3), (SolverError("x"), 3), (FlowError("x"), 3),
    (ResidualThresholdError("x"), 4), (RuntimeError("x"), 1),
])
def test_exit_codes(exc, code):
    assert exit_code_for(exc) == code


def test_checks_collect_and_raise_in_strict_mode():
    lenient = _Checks(strict=False)
    lenient.expect(False, "residual too large")
    lenient.finish()
    assert lenient.violations == ["residual too large"]
    strict = _Checks(strict=True)
    strict.expect(True, "fine")
    strict.finish()
    strict.expect(False, "residual too large")
    with pytest.raises(ResidualThresholdError):
        strict.finish()


def test_parser_requires_config():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["solve-serrin"])


@pytest.fixture(scope="module")
def hypotheses_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("hyp")
    code = main(["verify-hypotheses", "--config", str(CONFIG_DIR / "schwarzschild_hypotheses.yaml"),
                 "--out", str(out), "--log-level", "WARNING"])
    assert code == 0
    return out


def test_verify_hypotheses_writes_outputs(hypotheses_report):
    report = json.loads((hypotheses_report / "verify-hypotheses.json").read_text(encoding="utf-8"))
    assert report["schema"] == "warplab.report/1" and report["kind"] == "verify-hypotheses"
    assert report["all_passed"] is True
    assert isinstance(report["violations"], list)
    table = pd.read_csv(hypotheses_report / "hypotheses.csv", comment="#")
    assert list(table.columns) == HYPOTHESIS_COLUMNS
    assert list(table["hypothesis"]) == ["H1", "H2", "H3", "H4", "H5"]
    meta = json.loads((hypotheses_report / "metadata.json").read_text(encoding="utf-8"))
    assert meta["config"]["seed"] == 7


def test_compare(hypotheses_report, tmp_path):
    path = hypotheses_report / "verify-hypotheses.json"
    assert main(["compare", str(path), str(path)]) == 0
    data = json.loads(path.read_text(encoding="utf-8"))
    data["finite_difference"]["error_h"] *= 2
    changed = tmp_path / "changed.json"
    changed.write_text(json.dumps(data), encoding="utf-8")
    assert main(["compare", str(path), str(changed)]) == 1
    other = tmp_path / "other.json"
    other.write_text("{}", encoding="utf-8")
    assert main(["compare", str(path), str(other)]) == 2


def test_bad_configs_exit_2(tmp_path):
    broken = tmp_path / "broken.yaml"
    broken.write_text("profile: {kind: [\n", encoding="utf-8")
    assert main(["verify-hypotheses", "--config", str(broken), "--out", str(tmp_path)]) == 2
    unknown = tmp_path / "unknown.yaml"
    unknown.write_text("profile: {kind: schwarzschild, spin: 1}\n", encoding="utf-8")
    assert main(["verify-hypotheses", "--config", str(unknown), "--out", str(tmp_path)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_no_horizon_exit_2(tmp_path):
    cfg = tmp_path / "ads.yaml"
    cfg.write_text("profile: {kind: schwarzschild, n: 2, kappa: -1, m: 0.5}\n", encoding="utf-8")
    assert main(["verify-hypotheses", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_solve_serrin_on_a_ball(tmp_path):
    code = main(["solve-serrin", "--config", str(CONFIG_DIR / "hyperbolic_ball_serrin.yaml"),
                 "--h", "0.2", "--out", str(tmp_path), "--log-level", "WARNING"])
    assert code == 0
    report = json.loads((tmp_path / "solve-serrin.json").read_text(encoding="utf-8"))
    assert report["h"] == 0.2
    assert report["oracle"]["max_error"] < 1e-2
    assert "flow" in report["level_sets"]
    assert (tmp_path / "serrin_field.csv").exists()


def test_repeated_runs_write_identical_payloads(tmp_path):
    config = str(CONFIG_DIR / "schwarzschild_hypotheses.yaml")
    texts = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert main(["verify-hypotheses", "--config", config, "--out", str(out), "--log-level", "WARNING"]) == 0
        texts.append(((out / "verify-hypotheses.json").read_bytes(), (out / "hypotheses.csv").read_bytes()))
    assert texts[0] == texts[1]


def test_strict_mode_exits_4(tmp_path):
    # a repeated amplitude can never be strictly increasing
    cfg = tmp_path / "sweep.yaml"
    cfg.write_text("profile: {kind: schwarzschild, n: 2, m: 0.5}\n"
                   "domain: {boundary: graph, r0: 2.0}\n"
                   "experiment: {kind: sweep, problem: hk, family: [1.0], amplitudes: [0.05, 0.05], workers: 1}\n",
                   encoding="utf-8")
    args = ["run", "--config", str(cfg), "--h", "0.25", "--log-level", "WARNING"]
    assert main(args + ["--out", str(tmp_path / "lenient")]) == 0
    report = json.loads((tmp_path / "lenient" / "sweep.json").read_text(encoding="utf-8"))
    assert any("strictly increasing" in v for v in report["violations"])
    assert main(args + ["--out", str(tmp_path / "strict"), "--strict"]) == 4
    assert (tmp_path / "strict" / "sweep.json").exists()
