"""Deterministic report files: manifest, equilibrium report, flow/player/path CSVs, control field."""
from __future__ import annotations

import hashlib
import io
import json
import platform
import zipfile
from pathlib import Path

import numpy as np

from . import __version__

FLOAT_FMT = "%.17g"
COARSE_LEVELS = (0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99)


class ReportError(OSError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT % float(x)


def _clean(obj):
    """Make an object JSON-serialisable with floats at 17 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            return None if np.isnan(x) else ("inf" if x > 0 else "-inf")
        return float(FLOAT_FMT % x)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def csv_text(header: list[str], rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str | bytes) -> None:
    try:
        if isinstance(text, bytes):
            path.write_bytes(text)
        else:
            path.write_text(text)
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc


def npz_bytes(arrays: dict) -> bytes:
    """``.npz`` archive with fixed entry timestamps, so reruns are byte-identical."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            arr = io.BytesIO()
            np.lib.format.write_array(arr, np.asarray(arrays[name]), allow_pickle=False)
            zf.writestr(info, arr.getvalue())
    return buf.getvalue()


def manifest(config_dict: dict, seed: int, command: str) -> dict:
    blob = json.dumps(_clean(config_dict), sort_keys=True).encode()
    return {
        "command": command,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "master_seed": int(seed),
        "versions": {"bubbleride": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }


def flow_rows(t, mean, impact, quantiles, levels):
    """Rows ``t, mean, impact, q01 ... q99`` for one cell."""
    levels = np.asarray(levels)
    cols = [int(np.argmin(np.abs(levels - q))) for q in COARSE_LEVELS]
    imp = np.append(impact, np.nan)
    for k in range(len(t)):
        yield [t[k], mean[k], imp[k]] + [quantiles[k, c] for c in cols]


FLOW_HEADER = ["t", "mean", "impact"] + [f"q{int(round(q * 100)):02d}" for q in COARSE_LEVELS]


def emit_reports(out_dir, manifest_data: dict, report: dict | None = None, flows=None,
                 time_grid=None, players: dict | None = None, paths: dict | None = None,
                 cells: dict | None = None, diagnostics: dict | None = None,
                 control_field: dict | None = None,
                 report_name: str = "equilibrium_report.json") -> list[Path]:
    """Write the report file set into ``out_dir`` and return the written paths.

    ``flows`` is a ``MeasureFlow``; ``players`` and ``paths`` map column
    names to equal-length arrays.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create {out}: {exc}") from exc
    written = []

    def put(name, content):
        p = out / name
        _write(p, content)
        written.append(p)

    put("manifest.json", dumps_json(manifest_data))
    if report is not None:
        put(report_name, dumps_json(report))
    if flows is not None:
        for c in range(flows.n_cells):
            rows = flow_rows(time_grid, flows.mean_x[c], flows.impact[c], flows.quantiles[c],
                             flows.levels)
            put(f"flows_cell{c}.csv", csv_text(FLOW_HEADER, rows))
    for name, table in (("players.csv", players), ("paths.csv", paths)):
        if table is not None:
            header = list(table)
            cols = [np.asarray(table[h]) for h in header]
            put(name, csv_text(header, zip(*cols)))
    if cells is not None:
        put("cells.json", dumps_json(cells))
    if diagnostics is not None:
        put("bsde_diagnostics.json", dumps_json(diagnostics))
    if control_field is not None:
        put("control_field.npz", npz_bytes(control_field))
    return written
