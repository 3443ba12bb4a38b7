"""BIC, model sweeps, adjusted Rand index and classification tables."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .em import EmConfig, FitReport, bic_value, failed_report, fit
from .family import Structure
from .initialize import InitKind, make_init

log = logging.getLogger(__name__)


def bic(loglik: float, m: int, n: int) -> float:
    """``-2 loglik + m log n``; smaller is better."""
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 and m >= 1")
    return bic_value(loglik, m, n)


def _comb2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def contingency(truth, pred) -> np.ndarray:
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape:
        raise ValueError(f"partition lengths differ: {truth.shape[0]} vs {pred.shape[0]}")
    _, ti = np.unique(truth, return_inverse=True)
    _, pi = np.unique(pred, return_inverse=True)
    table = np.zeros((ti.max(initial=-1) + 1, pi.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    return table


def ari(p1, p2) -> float:
    """Hubert-Arabie adjusted Rand index; 1 when both partitions are trivial."""
    table = contingency(p1, p2)
    n = int(table.sum())
    index = int(_comb2(table).sum())
    rows = int(_comb2(table.sum(axis=1)).sum())
    cols = int(_comb2(table.sum(axis=0)).sum())
    pairs = n * (n - 1) // 2
    expected = rows * cols / pairs if pairs else 0.0
    top = 0.5 * (rows + cols)
    if top == expected:
        return 1.0
    return (index - expected) / (top - expected)


def classification_table(truth, pred, n_true: Optional[int] = None, n_pred: Optional[int] = None) -> np.ndarray:
    """Counts with rows indexed by true label and columns by predicted label.

    Labels are taken as the integers ``0..K-1`` (not re-coded), so an empty
    predicted component still gets its own column.
    """
    truth = np.asarray(truth, dtype=int)
    pred = np.asarray(pred, dtype=int)
    if truth.shape != pred.shape:
        raise ValueError(f"partition lengths differ: {truth.shape[0]} vs {pred.shape[0]}")
    rows = n_true if n_true is not None else (truth.max(initial=-1) + 1)
    cols = n_pred if n_pred is not None else (pred.max(initial=-1) + 1)
    table = np.zeros((rows, cols), dtype=np.int64)
    np.add.at(table, (truth, pred), 1)
    return table


@dataclass
class SweepResult:
    reports: dict = field(default_factory=dict)  # (Structure, G) -> FitReport
    best: Optional[tuple] = None

    def bic_table(self, structures, G_values) -> list[list[Optional[float]]]:
        """Rows by ``G``, columns by structure; ``None`` marks an unusable fit."""
        out = []
        for G in G_values:
            row = []
            for s in structures:
                rep = self.reports.get((Structure(s), G))
                row.append(rep.bic if rep is not None and rep.usable else None)
            out.append(row)
        return out

    @property
    def best_report(self) -> Optional[FitReport]:
        return None if self.best is None else self.reports[self.best]


def select_best(reports: dict) -> Optional[tuple]:
    """Key of the smallest BIC among usable fits (ties: first in sorted key order)."""
    best, best_bic = None, np.inf
    for key in sorted(reports, key=lambda k: (k[1], str(k[0]))):
        rep = reports[key]
        if rep.usable and rep.bic < best_bic:
            best, best_bic = key, rep.bic
    return best


def _fit_cell(args):
    x, structure, G, kind, seed, restarts, config = args
    try:
        init = make_init(x, G, kind, seed, restarts)
        return fit(x, structure, G, init, config)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        log.warning("%s G=%d failed: %s", structure, G, exc)
        return failed_report(structure, G, x.shape[0], x.shape[1], str(exc))


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("RGPCM_THREADS", "1")))
    except ValueError:
        return 1


def sweep(
    x,
    structures,
    G_values,
    init=InitKind.KMEANS,
    config: Optional[EmConfig] = None,
    seed: int = 0,
    restarts: int = 10,
    workers: Optional[int] = None,
) -> SweepResult:
    """Fit every (structure, G) cell and pick the minimum-BIC usable fit.

    Every cell draws its start from the same ``seed`` so cells are independent
    and the result does not depend on execution order.
    """
    x = np.asarray(x, dtype=float)
    config = config or EmConfig()
    keys = [(Structure(s), int(G)) for G in G_values for s in structures]
    if not keys:
        raise ValueError("empty model grid")
    jobs = [(x, s, G, InitKind(init), seed, restarts, config) for s, G in keys]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_cell, jobs))
    else:
        results = [_fit_cell(job) for job in jobs]
    reports = dict(zip(keys, results))
    best = select_best(reports)
    if best is None:
        log.warning("no model selected: every cell degenerated or failed to converge")
    return SweepResult(reports, best)
