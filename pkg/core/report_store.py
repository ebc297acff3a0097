# core/report_store.py
"""
Report and table persistence.
- JSON reports with sorted keys and "schema": "warplab.report/1"; timestamps and
  environment details go to a separate metadata.json.
- CSV tables with fixed column schemas (FIELD_COLUMNS, SWEEP_COLUMNS,
  CONVERGENCE_COLUMNS, HYPOTHESIS_COLUMNS) normalised by _ensure_cols.
- write_mesh: node/element text dumps.
- compare_reports: per-field relative differences of two reports of one kind.
Output root via ENV (see core/config.py): WARPLAB_OUTPUT_ROOT.
"""
from __future__ import annotations

import json
import logging
import math
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import SchemaError

logger = logging.getLogger(__name__)

SCHEMA = "warplab.report/1"

FIELD_COLUMNS = ["node", "xi", "s", "r", "f", "f_r", "f_s_over_theta",
                 "H_rr", "H_rs", "H_ss", "H_hoop"]
SWEEP_COLUMNS = ["t", "hk_deficit", "delta", "cmc_deficit", "serrin_eps", "ring_A_norm",
                 "slice_distance", "E_warped", "E_serrin"]
CONVERGENCE_COLUMNS = ["identity", "h", "residual", "abs_residual", "observed_order"]
HYPOTHESIS_COLUMNS = ["hypothesis", "pass", "witness_r", "value"]

PathLike = Union[str, Path]


# ------------ helpers ------------
def _ensure_cols(df: Optional[pd.DataFrame], columns: Sequence[str]) -> pd.DataFrame:
    """Missing columns are added as NaN, extra columns dropped, order fixed."""
    if df is None:
        df = pd.DataFrame(columns=list(columns))
    df = df.copy()
    for c in columns:
        if c not in df.columns:
            df[c] = np.nan
    return df[list(columns)]


def _jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _ensure_dir(path: PathLike) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ------------ JSON reports ------------
def dump_report(kind: str, payload: Dict[str, Any]) -> str:
    body = {"schema": SCHEMA, "kind": kind, **_jsonable(payload)}
    return json.dumps(body, sort_keys=True, indent=2, allow_nan=False)


def write_report(out_dir: PathLike, name: str, kind: str, payload: Dict[str, Any]) -> Path:
    path = _ensure_dir(out_dir) / f"{name}.json"
    path.write_text(dump_report(kind, payload) + "\n", encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def read_report(path: PathLike) -> Dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read report {path}: {exc}") from exc
    if not isinstance(data, dict) or data.get("schema") != SCHEMA:
        raise SchemaError(f"{path} is not a {SCHEMA} report")
    return data


def write_metadata(out_dir: PathLike, config: Optional[Dict[str, Any]] = None,
                   extra: Optional[Dict[str, Any]] = None) -> Path:
    """Timestamps and library versions, kept apart from the deterministic payloads."""
    import scipy

    meta = {
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "python": platform.python_version(),
        "platform": platform.platform(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "config": config or {},
        **(extra or {}),
    }
    path = _ensure_dir(out_dir) / "metadata.json"
    path.write_text(json.dumps(_jsonable(meta), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


# ------------ CSV tables ------------
def write_table(df: pd.DataFrame, path: PathLike, columns: Sequence[str],
                footer: Optional[Dict[str, Any]] = None) -> Path:
    """CSV with a fixed column order; an optional footer is written as '# key=value' lines."""
    path = Path(path)
    _ensure_dir(path.parent)
    _ensure_cols(df, columns).to_csv(path, index=False, float_format="%.12g")
    if footer:
        with open(path, "a", encoding="utf-8") as fh:
            for key in sorted(footer):
                fh.write(f"# {key}={_jsonable(footer[key])}\n")
    logger.info("wrote %s", path)
    return path


def read_table(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    return _ensure_cols(pd.read_csv(path, comment="#"), columns)


def field_frame(fld) -> pd.DataFrame:
    """Nodal values and recovered derivatives of a solved field."""
    mesh = fld.mesh
    nd = fld.recovered.nodal
    return _ensure_cols(pd.DataFrame({
        "node": np.arange(len(mesh.r)),
        "xi": mesh.xi, "s": mesh.s, "r": mesh.r, "f": fld.values,
        "f_r": nd.f_r, "f_s_over_theta": nd.grad_s,
        "H_rr": nd.H_rr, "H_rs": nd.H_rs, "H_ss": nd.H_ss, "H_hoop": nd.H_hoop,
    }), FIELD_COLUMNS)


def write_field(fld, path: PathLike) -> Path:
    return write_table(field_frame(fld), path, FIELD_COLUMNS)


def write_mesh(mesh, out_dir: PathLike, stem: str = "mesh") -> List[Path]:
    """<stem>_nodes.txt (xi s r) and <stem>_elements.txt (six node ids per P2 triangle)."""
    out = _ensure_dir(out_dir)
    nodes = out / f"{stem}_nodes.txt"
    elems = out / f"{stem}_elements.txt"
    np.savetxt(nodes, np.column_stack([mesh.xi, mesh.s, mesh.r]), fmt="%.15g", header="xi s r")
    np.savetxt(elems, mesh.elements, fmt="%d", header="v0 v1 v2 m01 m12 m20")
    return [nodes, elems]


# ------------ comparison ------------
def _flatten(data: Any, prefix: str = "") -> Dict[str, float]:
    out: Dict[str, float] = {}
    if isinstance(data, dict):
        for k, v in data.items():
            out.update(_flatten(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(data, list):
        for i, v in enumerate(data):
            out.update(_flatten(v, f"{prefix}[{i}]"))
    elif data is None:
        out[prefix] = float("nan")
    elif isinstance(data, bool):
        out[prefix] = float(data)
    elif isinstance(data, (int, float)):
        out[prefix] = float(data)
    return out


def compare_reports(a: Dict[str, Any], b: Dict[str, Any], tol: float = 1e-8) -> pd.DataFrame:
    """Rows (key, a, b, rel_diff, ok) for every numeric leaf."""
    for key in ("schema", "kind"):
        if a.get(key) != b.get(key):
            raise SchemaError(f"reports differ in {key}: {a.get(key)!r} vs {b.get(key)!r}")
    fa, fb = _flatten(a), _flatten(b)
    if set(fa) != set(fb):
        diff = sorted(set(fa) ^ set(fb))
        raise SchemaError(f"reports have different fields: {diff[:5]}")
    rows = []
    for key in sorted(fa):
        x, y = fa[key], fb[key]
        if math.isnan(x) or math.isnan(y):
            rel = 0.0 if math.isnan(x) and math.isnan(y) else float("inf")
        else:
            rel = abs(x - y) / max(abs(x), abs(y), 1e-300) if x != y else 0.0
        rows.append({"key": key, "a": x, "b": y, "rel_diff": rel, "ok": rel <= tol})
    return pd.DataFrame(rows, columns=["key", "a", "b", "rel_diff", "ok"])
