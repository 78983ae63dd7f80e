"""CSV readers and writers.

Every file starts with one comment line recording the tool version, the
column schema version and run metadata, followed by a header row.  Floats
are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .errors import ValidationError
from .fbm import FbmPath, TimeGrid
from .mle import CSV_HEADER, EstimateReport
from .solution import ModePaths

SCHEMA = 1
_GRID_RTOL = 1e-9


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def comment_line(**meta) -> str:
    parts = [f"fracspde {__version__}", f"schema={SCHEMA}"]
    for key, val in meta.items():
        if isinstance(val, (list, tuple)):
            val = ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in val)
        elif isinstance(val, float):
            val = f"{val:g}"
        parts.append(f"{key}={val}")
    return "# " + " | ".join(parts)


def render(comment: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(comment + "\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([fmt(x) for x in row])
    return buf.getvalue()


def parse_comment(line: str) -> dict[str, str]:
    if not line.startswith("#"):
        return {}
    meta = {}
    for part in line[1:].split("|"):
        key, sep, val = part.strip().partition("=")
        if sep:
            meta[key.strip()] = val.strip()
    return meta


def mode_paths_csv(paths: ModePaths, seed=None) -> str:
    K = paths.model.num_modes
    header = ["t"] + [f"u_{k}" for k in range(1, K + 1)]
    rows = zip(paths.grid.points, *paths.u)
    return render(comment_line(seed=seed, H=paths.model.hurst, model=paths.model.name), header, rows)


def driver_csv(path: FbmPath, seed=None) -> str:
    return render(
        comment_line(seed=seed, H=path.hurst),
        ["t", "w"],
        zip(path.grid.points, path.values),
    )


def estimates_csv(reports: Sequence[EstimateReport | tuple[str, str, str]], seed=None, H=None) -> str:
    """Rows are reports or ``(kind, status, notes)`` triples for failures."""
    rows = []
    for rep in reports:
        if isinstance(rep, EstimateReport):
            rows.append(rep.csv_row())
        else:
            kind, status, notes = rep
            rows.append([kind, None, None, "", None, None, status, notes])
    return render(comment_line(seed=seed, H=H), CSV_HEADER, rows)


def weights_csv(rows, H: float, rule: str) -> str:
    return render(comment_line(H=H, rule=rule), ["i", "w_i"], rows)


def read_table(path: str | Path) -> tuple[dict[str, str], list[str], np.ndarray]:
    """Comment metadata, header and numeric body of a fracspde CSV file."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such file: {path}")
    text = path.read_text().splitlines()
    meta = parse_comment(text[0]) if text else {}
    body = [ln for ln in text if ln and not ln.startswith("#")]
    if not body:
        raise ValidationError(f"{path}: empty file")
    header = next(csv.reader([body[0]]))
    try:
        data = np.array([[float(x) for x in row] for row in csv.reader(body[1:])], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric entry ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValidationError(f"{path}: ragged rows")
    return meta, header, data


def grid_from_times(t: np.ndarray) -> TimeGrid:
    if t.size < 2 or t[0] != 0.0:
        raise ValidationError("time column must start at 0 and have at least two rows")
    grid = TimeGrid(float(t[-1]), t.size - 1)
    if not np.allclose(t, grid.points, rtol=_GRID_RTOL, atol=_GRID_RTOL * grid.horizon):
        raise ValidationError("time column is not a uniform grid")
    return grid


def read_mode_paths(path: str | Path) -> tuple[TimeGrid, np.ndarray, dict[str, str]]:
    """Grid, ``K x (n+1)`` mode values and metadata from a mode-path CSV."""
    meta, header, data = read_table(path)
    if header[0] != "t" or any(h != f"u_{k}" for k, h in enumerate(header[1:], start=1)):
        raise ValidationError(f"{path}: expected header t,u_1,...,u_K, got {','.join(header)}")
    if len(header) < 2:
        raise ValidationError(f"{path}: no mode columns")
    return grid_from_times(data[:, 0]), data[:, 1:].T.copy(), meta
