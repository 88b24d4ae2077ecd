"""File formats: long panel CSV, dense weights CSV, JSON reports, P5 heatmaps.

All writers are atomic (write to a temp file in the target directory, then
rename) and byte-deterministic: floats are serialized with ``repr``, which
round-trips exactly, and JSON keys are sorted.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import CoefficientSet, PanelDataset, WeightsMatrix
from .exceptions import ValidationError


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# panel CSV: unit_id,time,y,x1,...,xk  (balanced, sorted by unit then time)
# ---------------------------------------------------------------------------


def write_panel_csv(panel: PanelDataset, path: str | Path, times: list[float] | None = None) -> None:
    n, t, k = panel.n_units, panel.n_periods, panel.n_exog
    times = times if times is not None else list(range(t))
    if len(times) != t:
        raise ValidationError("times length must equal the number of periods")
    lines = ["unit_id,time," + ",".join(["y"] + [f"x{r + 1}" for r in range(k)])]
    for i, unit in enumerate(panel.unit_ids):
        for j in range(t):
            vals = [_fmt(panel.y[i, j])] + [_fmt(panel.x[i, j, r]) for r in range(k)]
            lines.append(f"{unit},{times[j]:g}," + ",".join(vals))
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode())


def read_panel_csv(path: str | Path) -> PanelDataset:
    """Parse and validate a balanced long panel; errors carry 1-based row numbers."""
    path = Path(path)
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:3] != ["unit_id", "time", "y"]:
            raise ValidationError(
                f"{path}: header must start with unit_id,time,y (got {','.join(header[:3])})"
            )
        x_cols = header[3:]
        expected_x = [f"x{r + 1}" for r in range(len(x_cols))]
        if x_cols != expected_x:
            raise ValidationError(
                f"{path}: regressor columns must be x1..x{len(x_cols)} in order, got {x_cols}"
            )
        if not x_cols:
            raise ValidationError(f"{path}: at least one regressor column x1 is required")
        k = len(x_cols)

        rows: dict[str, list[tuple[float, list[float]]]] = {}
        order: list[str] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3 + k:
                raise ValidationError(
                    f"{path}: row {line_no}: expected {3 + k} fields, got {len(row)}"
                )
            unit = row[0].strip()
            if not unit:
                raise ValidationError(f"{path}: row {line_no}: empty unit_id")
            try:
                time_val = float(row[1])
                values = [float(v) for v in row[2:]]
            except ValueError:
                raise ValidationError(
                    f"{path}: row {line_no}: non-numeric value"
                ) from None
            if not all(np.isfinite(v) for v in [time_val] + values):
                raise ValidationError(f"{path}: row {line_no}: non-finite value")
            if unit not in rows:
                rows[unit] = []
                order.append(unit)
            rows[unit].append((time_val, values))

    if not order:
        raise ValidationError(f"{path}: no data rows")
    base_times = [t for t, _ in rows[order[0]]]
    if sorted(base_times) != base_times:
        raise ValidationError(
            f"{path}: rows for unit {order[0]!r} are not sorted by time"
        )
    if len(set(base_times)) != len(base_times):
        raise ValidationError(f"{path}: duplicate period for unit {order[0]!r}")
    for unit in order:
        unit_times = [t for t, _ in rows[unit]]
        if unit_times != base_times:
            raise ValidationError(
                f"{path}: unbalanced panel: unit {unit!r} has periods "
                f"{unit_times} but unit {order[0]!r} has {base_times}"
            )
    n, t = len(order), len(base_times)
    y = np.empty((n, t))
    x = np.empty((n, t, k))
    for i, unit in enumerate(order):
        for j, (_, values) in enumerate(rows[unit]):
            y[i, j] = values[0]
            x[i, j, :] = values[1:]
    return PanelDataset(y=y, x=x, unit_ids=order)


# ---------------------------------------------------------------------------
# dense weights CSV: header row and first column carry unit ids
# ---------------------------------------------------------------------------


def write_weights_csv(weights: WeightsMatrix, path: str | Path) -> None:
    lines = ["unit_id," + ",".join(weights.unit_ids)]
    for i, unit in enumerate(weights.unit_ids):
        lines.append(unit + "," + ",".join(_fmt(v) for v in weights.w[i]))
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode())


def read_weights_csv(path: str | Path) -> WeightsMatrix:
    path = Path(path)
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if not header or header[0].strip() != "unit_id":
            raise ValidationError(f"{path}: first header field must be unit_id")
        ids = [h.strip() for h in header[1:]]
        if not ids:
            raise ValidationError(f"{path}: no unit columns")
        rows = []
        row_ids = []
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(ids) + 1:
                raise ValidationError(
                    f"{path}: row {line_no}: expected {len(ids) + 1} fields, got {len(row)}"
                )
            row_ids.append(row[0].strip())
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise ValidationError(f"{path}: row {line_no}: non-numeric value") from None
    if row_ids != ids:
        raise ValidationError(f"{path}: row ids do not match column ids")
    return WeightsMatrix(np.asarray(rows, dtype=float), ids)


# ---------------------------------------------------------------------------
# coefficient tables
# ---------------------------------------------------------------------------


def write_theta_csv(theta: np.ndarray, unit_ids: list[str], path: str | Path) -> None:
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    k = theta.shape[1]
    lines = ["unit_id," + ",".join(f"theta{r + 1}" for r in range(k))]
    for unit, row in zip(unit_ids, theta):
        lines.append(unit + "," + ",".join(_fmt(v) for v in row))
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode())


def read_theta_csv(path: str | Path) -> tuple[np.ndarray, list[str]]:
    path = Path(path)
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if not header or header[0].strip() != "unit_id":
            raise ValidationError(f"{path}: first header field must be unit_id")
        k = len(header) - 1
        if k < 1:
            raise ValidationError(f"{path}: no coefficient columns")
        ids = []
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != k + 1:
                raise ValidationError(
                    f"{path}: row {line_no}: expected {k + 1} fields, got {len(row)}"
                )
            ids.append(row[0].strip())
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise ValidationError(f"{path}: row {line_no}: non-numeric value") from None
    if not ids:
        raise ValidationError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float), ids


def write_sigma2_csv(sigma2: np.ndarray, unit_ids: list[str], path: str | Path) -> None:
    lines = ["unit_id,sigma2"]
    for unit, value in zip(unit_ids, np.asarray(sigma2, dtype=float)):
        lines.append(f"{unit},{_fmt(value)}")
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode())


# ---------------------------------------------------------------------------
# JSON and P5 graymap
# ---------------------------------------------------------------------------


def write_json(payload: dict, path: str | Path) -> None:
    _atomic_write(Path(path), (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode())


def emit_heatmap(matrix: np.ndarray, path: str | Path, scale: float | None = None) -> float:
    """Write a binary P5 graymap, one pixel per cell.

    Values map linearly from [-scale, +scale] to [0, 255] with zero at
    mid-gray 128; values outside the range clamp. When ``scale`` is None
    it defaults to max |entry| (or 1 for an all-zero matrix). Returns the
    scale used; a sidecar ``<path>.json`` records it.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValidationError("heatmap expects a matrix")
    if not np.all(np.isfinite(matrix)):
        raise ValidationError("heatmap matrix contains non-finite values")
    if scale is None:
        peak = float(np.abs(matrix).max())
        scale = peak if peak > 0 else 1.0
    if scale <= 0:
        raise ValidationError("heatmap scale must be positive")
    levels = np.rint((matrix + scale) * (255.0 / (2.0 * scale)))
    pixels = np.clip(levels, 0, 255).astype(np.uint8)
    rows, cols = matrix.shape
    header = f"P5\n{cols} {rows}\n255\n".encode()
    path = Path(path)
    _atomic_write(path, header + pixels.tobytes())
    write_json({"scale": scale, "rows": rows, "cols": cols}, path.with_suffix(path.suffix + ".json"))
    return float(scale)


def coefficient_set_to_csv(coefficients: CoefficientSet, unit_ids: list[str], theta_path: str | Path, sigma2_path: str | Path) -> None:
    write_theta_csv(coefficients.theta, unit_ids, theta_path)
    write_sigma2_csv(coefficients.sigma2, unit_ids, sigma2_path)
