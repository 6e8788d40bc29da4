"""Deterministic artifact emission: CSV tables, plot-data series, manifests.

Floats are serialized with ``repr`` (shortest round-trip form), so writing,
reading, and writing again is byte-identical and doubles survive exactly.
"""

from __future__ import annotations

import csv
import io
import platform
from pathlib import Path

import yaml


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(rows: list[dict], path: str | Path, columns: list[str]) -> None:
    """Write rows in a fixed column order; header is present even when empty."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        unknown = set(row) - set(columns)
        if unknown:
            raise ValueError(f"row has columns outside the schema: {sorted(unknown)}")
        writer.writerow([_cell(row.get(col)) for col in columns])
    Path(path).write_text(buf.getvalue())


def read_csv(path: str | Path) -> tuple[list[str], list[dict]]:
    """Read a CSV back as raw string cells (no type coercion)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [dict(zip(header, row)) for row in reader]
    return header, rows


def emit_plot_data(series: "list[tuple[float, float]]", path: str | Path) -> None:
    """Plain two-column series file, one ``x y`` pair per line."""
    lines = [f"{_cell(x)} {_cell(y)}" for x, y in series]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def package_versions() -> dict:
    import numpy

    from . import __version__

    return {
        "horizonlab": __version__,
        "numpy": numpy.__version__,
        "python": platform.python_version(),
    }


def write_manifest(
    path: str | Path,
    command: str,
    cfg_hash: str,
    seed: int,
    artifacts: list[str],
    wall_time_s: float,
) -> None:
    data = {
        "command": command,
        "config_hash": cfg_hash,
        "seed": seed,
        "artifacts": sorted(artifacts),
        "versions": package_versions(),
        "wall_time_s": round(wall_time_s, 3),
    }
    Path(path).write_text(yaml.safe_dump(data, sort_keys=True))


def read_manifest(path: str | Path) -> dict:
    return yaml.safe_load(Path(path).read_text())
