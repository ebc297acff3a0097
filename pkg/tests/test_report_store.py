import json

import numpy as np
import pandas as pd
import pytest

from core.elliptic_solver import field_from_function
from core.errors import SchemaError
from core.meridian_mesh import build_mesh
from core.report_store import (FIELD_COLUMNS, SCHEMA, SWEEP_COLUMNS, compare_reports, dump_report,
                               read_report, read_table, write_field, write_mesh, write_metadata,
                               write_report, write_table)


def test_report_roundtrip(tmp_path):
    payload = {"b": np.float64(1.5), "a": [1, np.int64(2)], "bad": float("nan"), "flag": np.bool_(True),
               "nested": {"z": np.array([0.25, np.inf])}}
    path = write_report(tmp_path, "solve", "solve-serrin", payload)
    text = path.read_text(encoding="utf-8")
    assert list(json.loads(text)) == sorted(json.loads(text))
    data = read_report(path)
    assert data["schema"] == SCHEMA and data["kind"] == "solve-serrin"
    assert data["bad"] is None and data["nested"]["z"] == [0.25, None]
    assert data["flag"] is True and data["a"] == [1, 2]
    assert dump_report("x", payload) == dump_report("x", payload)


def test_metadata_is_separate(tmp_path):
    path = write_metadata(tmp_path, config={"seed": 1})
    meta = json.loads(path.read_text(encoding="utf-8"))
    assert "created_utc" in meta and meta["config"] == {"seed": 1}
    assert "schema" not in meta


def test_read_report_rejects_other_files(tmp_path):
    other = tmp_path / "other.json"
    other.write_text(json.dumps({"schema": "something/2"}), encoding="utf-8")
    with pytest.raises(SchemaError):
        read_report(other)
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(SchemaError):
        read_report(broken)
    with pytest.raises(SchemaError):
        read_report(tmp_path / "absent.json")


def _report(**values):
    return json.loads(dump_report("hk-deficit", {"hk": dict(values)}))


def test_compare_reports():
    a = _report(deficit=1.0, delta=None)
    same = compare_reports(a, _report(deficit=1.0, delta=None))
    assert same["ok"].all()
    assert list(same.columns) == ["key", "a", "b", "rel_diff", "ok"]
    diff = compare_reports(a, _report(deficit=1.1, delta=None), tol=1e-3)
    row = diff.set_index("key").loc["hk.deficit"]
    assert not row["ok"] and row["rel_diff"] == pytest.approx(0.1 / 1.1)
    assert not compare_reports(a, _report(deficit=1.0, delta=2.0))["ok"].all()


def test_compare_rejects_mismatches():
    a = _report(deficit=1.0)
    with pytest.raises(SchemaError):
        compare_reports(a, json.loads(dump_report("cmc-deficit", {"hk": {"deficit": 1.0}})))
    with pytest.raises(SchemaError):
        compare_reports(a, _report(deficit=1.0, extra=0.0))


def test_table_footer(tmp_path):
    df = pd.DataFrame({"t": [0.0, 0.1], "hk_deficit": [0.0, 2e-3], "unused": [1, 2]})
    path = write_table(df, tmp_path / "sweep.csv", SWEEP_COLUMNS, footer={"fitted_exponent": 1.02})
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].split(",") == SWEEP_COLUMNS
    assert lines[-1] == "# fitted_exponent=1.02"
    back = read_table(path, SWEEP_COLUMNS)
    assert list(back.columns) == SWEEP_COLUMNS and len(back) == 2
    assert back["hk_deficit"].iloc[1] == pytest.approx(2e-3)
    assert back["E_serrin"].isna().all()


def test_field_and_mesh_dumps(tmp_path, euclidean_ball):
    mesh = build_mesh(euclidean_ball, 0.25)
    fld = field_from_function(mesh, lambda r, s: r**2 - 1.0)
    back = read_table(write_field(fld, tmp_path / "field.csv"), FIELD_COLUMNS)
    assert len(back) == len(mesh.r)
    np.testing.assert_allclose(back["f"], fld.values, atol=1e-11)
    nodes, elems = write_mesh(mesh, tmp_path)
    assert np.loadtxt(nodes).shape == (len(mesh.r), 3)
    assert np.loadtxt(elems).shape == (len(mesh.elements), 6)
