"""Serialization of result bundles to CSV or JSON plus a hashed manifest."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import OutputError
from .reproduce import SCHEMA_VERSION, ResultBundle, Table

FORMATS = ("csv", "json")


def _plain(v):
    """JSON-safe value; non-finite floats become null so output stays strict JSON."""
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if v is None or isinstance(v, str):
        return v
    if hasattr(v, "to_dict"):
        return _plain(v.to_dict())
    return str(v)


def _cell(v) -> str:
    v = _plain(v)
    if v is None:
        return "nan"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def table_to_csv(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def table_to_records(table: Table) -> list[dict]:
    return [dict(zip(table.columns, row)) for row in table.rows]


def render(bundle: ResultBundle, fmt: str) -> dict[str, str]:
    """File name to content for every hashed output file."""
    if fmt not in FORMATS:
        raise OutputError("format", f"unknown format {fmt!r}; choose csv or json")
    files = {}
    for name, stage in bundle.stages.items():
        if fmt == "csv":
            for tname, table in stage.tables.items():
                files[f"{name}_{tname}.csv"] = table_to_csv(table)
            files[f"{name}_summary.json"] = dumps_json({"metadata": bundle.metadata, "records": stage.records})
        else:
            doc = {"metadata": bundle.metadata, "records": stage.records,
                   "tables": {t: {"columns": tab.columns, "rows": table_to_records(tab)}
                              for t, tab in stage.tables.items()}}
            files[f"{name}.json"] = dumps_json(doc)
    return files


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_results(bundle: ResultBundle, fmt: str, out_dir) -> dict:
    """Write every stage output plus ``manifest.json``; return the manifest.

    Timings go only into the manifest, which is not itself listed, so the
    hashed files depend on nothing but the config and seed.
    """
    files = render(bundle, fmt)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(str(out), exc.strerror or str(exc)) from exc
    if not os.access(out, os.W_OK):
        raise OutputError(str(out), "directory is not writable")
    entries = []
    for name in sorted(files):
        path = out / name
        try:
            path.write_text(files[name], encoding="utf-8")
        except OSError as exc:
            raise OutputError(str(path), exc.strerror or str(exc)) from exc
        entries.append({"name": name, "sha256": _sha256(files[name])})
    manifest = {"schema_version": SCHEMA_VERSION, "metadata": bundle.metadata,
                "files": entries, "timings": bundle.timings}
    mpath = out / "manifest.json"
    try:
        mpath.write_text(dumps_json(manifest), encoding="utf-8")
    except OSError as exc:
        raise OutputError(str(mpath), exc.strerror or str(exc)) from exc
    return _plain(manifest)
