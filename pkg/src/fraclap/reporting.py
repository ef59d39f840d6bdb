"""Deterministic report files: CSV/JSON with metadata, digests, goldens.

Every report is written atomically (temp file + rename) with a sidecar
``<name>.meta.json`` carrying the schema version, column list, artifact
version and input digests. Numbers are rendered with 17 significant
digits, '.' decimal, no locale, so reruns with identical configs are
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np

from . import __version__
from .errors import SchemaMismatchError

SCHEMA_VERSION = "1"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def digest_of(obj) -> str:
    """Stable 16-hex digest of a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, default=fmt).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def manifold_digest(M) -> str:
    payload = {
        "kind": M.kind, "dim": M.dim, "n_nodes": M.n_nodes,
        "volume": fmt(M.volume),
        "eigenvalues": [fmt(v) for v in M.eigenvalues],
    }
    return digest_of(payload)


def write_csv(path: str, rows: list[dict], meta: dict | None = None):
    if not rows:
        raise ValueError("refusing to write an empty report")
    cols = list(rows[0].keys())
    for r in rows:
        if list(r.keys()) != cols:
            raise ValueError("inconsistent row schemas")
    lines = [",".join(cols)]
    lines += [",".join(fmt(r[c]) for c in cols) for r in rows]
    _atomic_write(path, "\n".join(lines) + "\n")
    sidecar = {"schema_version": SCHEMA_VERSION, "columns": cols,
               "n_rows": len(rows), "artifact_version": __version__}
    sidecar.update(meta or {})
    _atomic_write(path + ".meta.json",
                  json.dumps(sidecar, indent=1, sort_keys=True) + "\n")


def write_json(path: str, obj: dict, meta: dict | None = None):
    payload = {"schema_version": SCHEMA_VERSION,
               "artifact_version": __version__}
    payload.update(meta or {})
    payload["data"] = obj
    _atomic_write(path, json.dumps(payload, indent=1, sort_keys=True,
                                   default=fmt) + "\n")


def read_csv(path: str):
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    cols = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        toks = ln.split(",")
        row = {}
        for c, t in zip(cols, toks):
            try:
                row[c] = float(t)
            except ValueError:
                row[c] = t
        rows.append(row)
    return cols, rows


def validate_report(path: str):
    """Round-trip check of a report file against its own schema.

    CSVs are checked against their sidecar (columns, row count, schema
    version); JSON reports must parse and carry the schema version.
    """
    if path.endswith(".json"):
        with open(path) as f:
            payload = json.load(f)
        if payload.get("schema_version") != SCHEMA_VERSION:
            raise SchemaMismatchError(f"schema version mismatch in {path}")
        return payload
    meta_path = path + ".meta.json"
    if not os.path.exists(meta_path):
        raise SchemaMismatchError(f"missing sidecar for {path}")
    with open(meta_path) as f:
        meta = json.load(f)
    cols, rows = read_csv(path)
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatchError("schema version mismatch")
    if meta.get("columns") != cols or meta.get("n_rows") != len(rows):
        raise SchemaMismatchError(f"sidecar does not match {path}")
    return cols, rows


def field_to_csv(path: str, field, meta: dict | None = None):
    """Write a nodal field as (node_index, value) rows."""
    rows = [{"node_index": i, "value": float(v)}
            for i, v in enumerate(field.values)]
    write_csv(path, rows, meta)


def field_from_csv(path: str, manifold):
    """Read a (node_index, value) CSV back into a Field."""
    from .manifold import Field
    _, rows = read_csv(path)
    values = np.full(manifold.n_nodes, np.nan)
    for r in rows:
        values[int(r["node_index"])] = r["value"]
    if np.any(np.isnan(values)):
        raise SchemaMismatchError(f"{path} does not cover every node")
    return Field(manifold, values)


def extension_field_rows(E, z_indices=None) -> list[dict]:
    """(node, z, value) rows of an extension field's tensor-grid samples."""
    idx = np.arange(E.z_grid.size) if z_indices is None \
        else np.atleast_1d(z_indices)
    U = E.values(idx)
    rows = []
    for j_pos, j in enumerate(idx):
        z = float(E.z_grid[j])
        for node in range(U.shape[0]):
            rows.append({"node": node, "z": z,
                         "value": float(U[node, j_pos])})
    return rows


def compare_golden(report_path: str, golden_path: str,
                   tolerances: dict) -> dict:
    """Per-column max relative deviation of a report against a golden file.

    ``tolerances`` maps column name to relative tolerance; a column
    present in the files but absent from the manifest is an
    incompatibility. Returns {column: {max_rel_dev, tol, ok}} plus an
    overall flag; breaches do not raise.
    """
    cols_r, rows_r = validate_report(report_path)
    cols_g, rows_g = read_csv(golden_path)
    if cols_r != cols_g or len(rows_r) != len(rows_g):
        raise SchemaMismatchError(
            f"report and golden schemas differ for {report_path}")
    out = {}
    ok = True
    for c in cols_r:
        vals_r = [r[c] for r in rows_r]
        vals_g = [r[c] for r in rows_g]
        if any(isinstance(v, str) for v in vals_r + vals_g):
            dev = 0.0 if vals_r == vals_g else float("inf")
        else:
            a = np.array(vals_r)
            b = np.array(vals_g)
            scale = np.maximum(np.abs(b), 1e-300)
            dev = float(np.max(np.abs(a - b) / scale)) if a.size else 0.0
        if c not in tolerances:
            raise SchemaMismatchError(
                f"tolerance manifest missing column {c!r}")
        tol = float(tolerances[c])
        col_ok = dev <= tol
        ok = ok and col_ok
        out[c] = {"max_rel_dev": dev, "tol": tol, "ok": col_ok}
    return {"columns": out, "ok": ok}
