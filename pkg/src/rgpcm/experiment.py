"""Random-start comparison of the four constraint regimes.

For every (structure, G, start) all regimes run from the same starting
responsibilities. A regime scores for that start when its converged
log-likelihood is within ``tie_tol`` of the best one among non-degenerate
runs, so several regimes can score on the same start.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .constraints import ConstraintSpec, Regime
from .em import EmConfig, fit
from .family import Structure
from .initialize import InitKind, random_init
from .selection import worker_count

log = logging.getLogger(__name__)

TIE_TOL = 1e-6


@dataclass
class RunOutcome:
    loglik: float
    degenerate: bool
    converged: bool
    iterations: int
    failed: str = ""


@dataclass
class ConvergenceReport:
    regimes: list
    cells: list  # [(Structure, G)]
    starts: int
    outcomes: dict = field(default_factory=dict)  # (s, G, start, regime) -> RunOutcome
    best_fraction: dict = field(default_factory=dict)  # (s, G) -> {regime: float}
    degenerate_fraction: dict = field(default_factory=dict)
    unscored_starts: dict = field(default_factory=dict)  # (s, G) -> count with no usable run


def _run_start(args):
    x, structure, G, start_seed, kind, regimes, base, schedule_len, beta = args
    n = x.shape[0]
    out = {}
    try:
        z0 = random_init(n, G, start_seed, kind)
    except ValueError as exc:
        return {r: RunOutcome(float("nan"), True, False, 0, str(exc)) for r in regimes}
    for r in regimes:
        spec = ConstraintSpec(a=base.constraint.a, b=base.constraint.b, regime=r,
                              schedule_len=schedule_len, beta=beta)
        try:
            rep = fit(x, structure, G, z0, replace(base, constraint=spec))
            out[r] = RunOutcome(rep.loglik, rep.degenerate, rep.converged, rep.iterations)
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            log.warning("%s G=%d regime=%s failed: %s", structure, G, r, exc)
            out[r] = RunOutcome(float("nan"), True, False, 0, str(exc))
    return out


def score_start(outcomes: dict, tie_tol: float = TIE_TOL) -> set:
    """Regimes whose non-degenerate log-likelihood ties the best for one start."""
    usable = {r: o.loglik for r, o in outcomes.items() if not o.degenerate and np.isfinite(o.loglik)}
    if not usable:
        return set()
    top = max(usable.values())
    return {r for r, ll in usable.items() if ll >= top - tie_tol}


def run_convergence_experiment(
    x,
    structures,
    G_values,
    regimes=tuple(Regime),
    starts: int = 50,
    seed: int = 0,
    kind=InitKind.RANDOM_PARTITION,
    config: Optional[EmConfig] = None,
    schedule_len: int = 25,
    beta: float = 1.0,
    tie_tol: float = TIE_TOL,
    workers: Optional[int] = None,
) -> ConvergenceReport:
    """Start ``s`` uses seed ``seed + s``, shared by every structure and regime.

    Static bounds in ``config.constraint`` stay in force for every regime;
    its regime and schedule fields are replaced per run.
    """
    if starts < 1:
        raise ValueError("starts must be at least 1")
    x = np.asarray(x, dtype=float)
    config = config or EmConfig()
    regimes = [Regime(r) for r in regimes]
    cells = [(Structure(s), int(G)) for s in structures for G in G_values]
    jobs, keys = [], []
    for s, G in cells:
        for k in range(starts):
            jobs.append((x, s, G, seed + k, InitKind(kind), regimes, config, schedule_len, beta))
            keys.append((s, G, k))
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_start, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_run_start(job) for job in jobs]

    report = ConvergenceReport(regimes, cells, starts)
    for (s, G, k), per_regime in zip(keys, results):
        for r, o in per_regime.items():
            report.outcomes[(s, G, k, r)] = o
    for s, G in cells:
        wins = {r: 0 for r in regimes}
        degen = {r: 0 for r in regimes}
        unscored = 0
        for k in range(starts):
            per = {r: report.outcomes[(s, G, k, r)] for r in regimes}
            winners = score_start(per, tie_tol)
            unscored += not winners
            for r in regimes:
                wins[r] += r in winners
                degen[r] += per[r].degenerate
        report.best_fraction[(s, G)] = {r: wins[r] / starts for r in regimes}
        report.degenerate_fraction[(s, G)] = {r: degen[r] / starts for r in regimes}
        report.unscored_starts[(s, G)] = unscored
    return report
