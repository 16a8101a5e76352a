"""Delimited report emission with fixed, versioned schemas.

Every value is written with repr-level precision so a rerun under the same
seed reproduces each file byte for byte. Wall-clock facts never enter these
files; they belong to the run manifest.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .maml import CurvePoint, EvalResult

SCHEMA_VERSIONS = {
    "curve": 1,
    "report": 1,
    "ablate": 1,
    "compare": 1,
    "gradcheck": 1,
}

REPORT_COLUMNS = ("dataset", "N", "K", "method", "J_repeats", "episodes", "acc_mean", "acc_std")
ABLATE_COLUMNS = ("O", "N", "K", "episodes", "acc_mean", "acc_std")
COMPARE_COLUMNS = (
    "N",
    "K",
    "acc_a_mean",
    "acc_a_std",
    "acc_b_mean",
    "acc_b_std",
    "delta_mean",
    "delta_std",
    "seeds",
)
GRADCHECK_COLUMNS = ("block", "max_rel_err", "tolerance", "status")


def fmt(value) -> str:
    """Deterministic cell text: floats keep full round-trip precision."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def curve_columns(pool) -> tuple[str, ...]:
    return ("step", "train_loss", *(f"val_acc_n{n}" for n in sorted(pool)), "val_acc_sum")


def _write_rows(path, columns, rows) -> Path:
    path = Path(path)
    with open(path, "w", encoding="ascii", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def write_curve_csv(path, curve: list[CurvePoint], pool) -> Path:
    cols = curve_columns(pool)
    rows = [
        (p.step, p.train_loss, *(p.val_acc[n] for n in sorted(pool)), p.val_acc_sum)
        for p in curve
    ]
    return _write_rows(path, cols, rows)


def report_row(dataset: str, res: EvalResult) -> tuple:
    return (dataset, res.n, res.shots, res.method, res.j_repeats, res.episodes, res.acc_mean, res.acc_std)


def write_report_csv(path, rows) -> Path:
    return _write_rows(path, REPORT_COLUMNS, rows)


def write_ablate_csv(path, rows) -> Path:
    return _write_rows(path, ABLATE_COLUMNS, rows)


def write_compare_csv(path, rows) -> Path:
    return _write_rows(path, COMPARE_COLUMNS, rows)


def write_gradcheck_csv(path, rows) -> Path:
    return _write_rows(path, GRADCHECK_COLUMNS, rows)


def write_manifest(path, payload: dict) -> Path:
    """JSON manifest: config echo, seed, timings, warnings, schema versions."""
    path = Path(path)
    body = dict(payload)
    body.setdefault("schema_versions", SCHEMA_VERSIONS)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(body, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path
