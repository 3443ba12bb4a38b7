"""CSV ingestion, standardisation and report files.

All floating-point output is written with 17 significant digits so a value
read back from any report is bit-identical to the one that was written.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    values: np.ndarray  # (n, p)
    columns: list
    labels: Optional[np.ndarray] = None
    label_names: list = field(default_factory=list)
    standardized: bool = False
    center: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def unstandardize(self, means) -> np.ndarray:
        """Map fitted means back to the original units."""
        means = np.asarray(means, dtype=float)
        if not self.standardized:
            return means
        return means * self.scale + self.center


def fmt(x) -> str:
    if x is None:
        return "NA"
    x = float(x)
    if not np.isfinite(x):
        return "NA" if np.isnan(x) else ("Inf" if x > 0 else "-Inf")
    return f"{x:.17g}"


def load_csv(path, label_column: Optional[str] = None, drop: Iterable[str] = ()) -> Dataset:
    """Read a numeric CSV with a header row.

    ``label_column`` may name several columns separated by commas; their
    values are joined to form one class label (e.g. species and sex).
    Columns listed in ``drop`` are ignored. Errors cite 1-based data row and
    column numbers.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise DataError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    drop = set(drop)
    label_cols = [c.strip() for c in label_column.split(",")] if label_column else []
    for name in label_cols + sorted(drop):
        if name not in header:
            raise DataError(f"{path}: no column named {name!r}")
    label_idx = [header.index(c) for c in label_cols]
    keep = [j for j, h in enumerate(header) if h not in drop and j not in label_idx]
    values, raw_labels = [], []
    for r, row in enumerate(rows[1:], start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} fields, header has {len(header)}")
        rec = []
        for j in keep:
            try:
                rec.append(float(row[j]))
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {row[j]!r} at row {r}, column {j + 1}"
                ) from None
        values.append(rec)
        if label_idx:
            raw_labels.append("/".join(row[j].strip() for j in label_idx))
    if not values:
        raise DataError(f"{path}: no data rows")
    labels, names = None, []
    if label_idx:
        names = list(dict.fromkeys(raw_labels))
        lookup = {name: k for k, name in enumerate(names)}
        labels = np.array([lookup[v] for v in raw_labels])
    return Dataset(np.array(values, dtype=float), [header[j] for j in keep], labels, names)


def standardize(d: Dataset) -> Dataset:
    """Centre each column and divide by its sample (n-1) standard deviation."""
    x = d.values
    center = x.mean(axis=0)
    scale = x.std(axis=0, ddof=1)
    const = [c for c, s in zip(d.columns, scale) if not s > 0]
    if const:
        raise DataError(f"cannot standardize constant column(s): {', '.join(const)}")
    z = (x - center) / scale
    if d.standardized:
        center = d.center + center * d.scale
        scale = d.scale * scale
    return Dataset(z, list(d.columns), d.labels, list(d.label_names), True, center, scale)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) or v is None else v for v in row])


def write_dataset(path, d: Dataset) -> None:
    header = list(d.columns) + (["label"] if d.labels is not None else [])
    rows = []
    for i in range(d.n):
        row = [float(v) for v in d.values[i]]
        if d.labels is not None:
            row.append(d.label_names[d.labels[i]] if d.label_names else int(d.labels[i]))
        rows.append(row)
    write_csv(path, header, rows)


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # keep the exact bits; JSON has no inf/nan
        return fmt(obj) if not np.isfinite(obj) else float(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


# --------------------------------------------------------------------------
# report files


def write_bic_table(path, sweep_result, structures, G_values) -> None:
    table = sweep_result.bic_table(structures, G_values) if sweep_result is not None else []
    rows = [[G] + [None if v is None else float(v) for v in row] for G, row in zip(G_values, table)]
    write_csv(path, ["G"] + [str(s) for s in structures], rows)


def write_classification_table(path, table: np.ndarray, row_names: Sequence[str]) -> None:
    header = ["true\\pred"] + [str(k + 1) for k in range(table.shape[1])]
    write_csv(path, header, [[name] + [int(v) for v in row] for name, row in zip(row_names, table)])


def write_trace(path, report) -> None:
    rows = [
        [it + 1, float(ll), float(lo), float(hi)]
        for it, (ll, lo, hi) in enumerate(
            zip(report.loglik_trace, report.min_eig_trace, report.max_eig_trace)
        )
    ]
    write_csv(path, ["iteration", "loglik", "min_eigenvalue", "max_eigenvalue"], rows)


def write_convergence_table(path, conv) -> None:
    regimes = [str(r) for r in conv.regimes]
    header = ["model", "G"] + [f"best_{r}" for r in regimes] + [f"degenerate_{r}" for r in regimes]
    rows = []
    for s, G in conv.cells:
        best = conv.best_fraction[(s, G)]
        deg = conv.degenerate_fraction[(s, G)]
        rows.append([str(s), G] + [float(best[r]) for r in conv.regimes]
                    + [float(deg[r]) for r in conv.regimes])
    write_csv(path, header, rows)


def trace_name(structure, G: int) -> str:
    return f"trace_{structure}_G{G}.csv"


def emit_reports(
    out_dir,
    meta: dict,
    sweep_result=None,
    structures=(),
    G_values=(),
    classification=None,
    convergence=None,
) -> list:
    """Write every applicable report into ``out_dir``; returns the file names.

    ``classification`` is ``(table, row_names)``.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if sweep_result is not None or convergence is None:
        write_bic_table(os.path.join(out_dir, "bic_table.csv"), sweep_result, structures, G_values)
        written.append("bic_table.csv")
    if sweep_result is not None:
        for (s, G), rep in sorted(sweep_result.reports.items(), key=lambda kv: (kv[0][1], str(kv[0][0]))):
            name = trace_name(s, G)
            write_trace(os.path.join(out_dir, name), rep)
            written.append(name)
    if classification is not None:
        table, names = classification
        write_classification_table(os.path.join(out_dir, "classification_table.csv"), table, names)
        written.append("classification_table.csv")
    if convergence is not None:
        write_convergence_table(os.path.join(out_dir, "convergence_table.csv"), convergence)
        written.append("convergence_table.csv")
    write_json(os.path.join(out_dir, "run_meta.json"), meta)
    written.append("run_meta.json")
    return written
