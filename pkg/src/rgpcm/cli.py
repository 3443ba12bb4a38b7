"""Command line entry point: ``rgpcm {fit,sim,converge}``."""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .constraints import ConstraintSpec, Regime, static_bounds_from_data
from .em import EmConfig
from .experiment import TIE_TOL, run_convergence_experiment
from .family import parse_structures
from .initialize import InitKind
from .io import Dataset, DataError, emit_reports, load_csv, standardize, write_dataset
from .selection import ari, classification_table, sweep
from .simulate import generate, load_spec

def parse_g_range(text: str) -> list[int]:
    """``"1:6"`` (inclusive), ``"3"`` or ``"2,4,6"``."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi = (int(t) for t in text.split(":"))
            values = list(range(lo, hi + 1))
        else:
            values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad G range {text!r}") from None
    if any(g < 1 for g in values):
        raise argparse.ArgumentTypeError("G must be positive")
    return values


def parse_bounds(text: str, x: np.ndarray) -> tuple[float, float, str]:
    text = text.strip().lower()
    if text == "data":
        a, b = static_bounds_from_data(x)
        return a, b, "data"
    if text == "none":
        return 0.0, math.inf, "none"
    try:
        a, b = (float(t) for t in text.split(","))
    except ValueError:
        raise DataError(f"--bounds expects 'data', 'none' or 'a,b', got {text!r}") from None
    return a, b, "explicit"


def _load_data(args) -> tuple[Dataset, dict]:
    if args.data:
        d = load_csv(args.data, args.label_column, args.drop.split(",") if args.drop else ())
        source = {"data": args.data, "label_column": args.label_column, "drop": args.drop}
    else:
        spec = load_spec(args.sim)
        x, y = generate(spec, args.sim_seed)
        names = [str(g + 1) for g in range(len(spec.sizes))] + (["noise"] if spec.noise > 0 else [])
        d = Dataset(x, [f"x{j + 1}" for j in range(x.shape[1])], y, names)
        source = {"sim": args.sim, "sim_seed": args.sim_seed}
    if not args.no_standardize:
        d = standardize(d)
    source["standardized"] = d.standardized
    return d, source


def _em_config(args, constraint: ConstraintSpec) -> EmConfig:
    return EmConfig(
        max_iter=args.max_iter, tol=args.tol, inner_m=args.inner_m,
        constraint=constraint, seed=args.seed,
        small_groups_repairable=args.allow_small_groups,
    )


def _config_meta(cfg: EmConfig, p: int) -> dict:
    c = cfg.constraint
    return {
        "max_iter": cfg.max_iter,
        "tol": cfg.tol,
        "convergence_rule": "|l_t - l_(t-1)| < tol * |l_t| after the schedule",
        "inner_m": cfg.inner_m,
        "bounds": [c.a, c.b],
        "regime": c.regime,
        "schedule_len": c.schedule_len,
        "beta": c.beta,
        "degeneracy": {
            "min_group_size": cfg.group_floor(p),
            "min_group_size_waived_when_lower_bound_active": cfg.small_groups_repairable,
            "min_candidate_eigenvalue": cfg.min_eigenvalue,
            "eigenvalue_rule_applies_when_lower_bound_below_threshold": True,
            "max_loglik_jump": cfg.max_loglik_jump,
        },
        "orientation_alignment": "eigenvectors ordered to match the current eigenvalue ranking "
                                 "(descending on the first M-step)",
        "common_orientation": "pairwise plane rotations (Flury-Gautschi style), "
                              f"tol {cfg.flury_tol}, max sweeps {cfg.flury_max_sweeps}",
    }


def cmd_fit(args) -> int:
    d, source = _load_data(args)
    structures = parse_structures(args.models)
    a, b, bounds_kind = parse_bounds(args.bounds, d.values)
    cfg = _em_config(args, ConstraintSpec(a=a, b=b, regime=args.regime,
                                          schedule_len=args.schedule_len, beta=args.beta))
    res = sweep(d.values, structures, args.g, args.init, cfg, seed=args.seed, restarts=args.restarts)
    meta = {
        "command": "fit",
        "source": source,
        "n": d.n,
        "p": d.p,
        "structures": structures,
        "G": args.g,
        "bounds_kind": bounds_kind,
        "init": args.init,
        "kmeans_restarts": args.restarts,
        "seed": args.seed,
        "em": _config_meta(cfg, d.p),
        "selection": "minimum BIC (-2 loglik + m log n) over converged, non-degenerate fits",
        "cells": {
            f"{s}_G{G}": {
                "bic": rep.bic, "loglik": rep.loglik, "n_params": rep.n_params,
                "iterations": rep.iterations, "converged": rep.converged,
                "degenerate": rep.degenerate, "reason": rep.reason,
            }
            for (s, G), rep in sorted(res.reports.items(), key=lambda kv: (kv[0][1], str(kv[0][0])))
        },
    }
    classification = None
    best = res.best_report
    if best is None:
        meta["best"] = None
        print("no model selected: every cell degenerated or failed to converge")
    else:
        meta["best"] = {"structure": best.structure, "G": best.G, "bic": best.bic, "loglik": best.loglik}
        meta["best"]["means"] = d.unstandardize(best.model.means)
        meta["best"]["weights"] = best.model.weights
        line = f"best model: {best.structure} G={best.G} BIC={best.bic:.4f}"
        if d.labels is not None:
            score = ari(d.labels, best.labels)
            meta["best"]["ari"] = score
            table = classification_table(d.labels, best.labels, len(d.label_names), best.G)
            classification = (table, d.label_names)
            line += f" ARI={score:.4f}"
        print(line)
    files = emit_reports(args.out, meta, res, structures, args.g, classification)
    print(f"wrote {len(files)} files to {args.out}")
    return 0


def cmd_sim(args) -> int:
    spec = load_spec(args.name)
    x, y = generate(spec, args.seed)
    names = [str(g + 1) for g in range(len(spec.sizes))] + (["noise"] if spec.noise > 0 else [])
    d = Dataset(x, [f"x{j + 1}" for j in range(x.shape[1])], y, names)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{args.name}.csv")
    write_dataset(path, d)
    print(f"wrote {d.n} rows to {path}")
    return 0


def cmd_converge(args) -> int:
    d, source = _load_data(args)
    structures = parse_structures(args.models)
    regimes = [Regime(r.strip()) for r in args.regimes.split(",") if r.strip()]
    a, b, bounds_kind = parse_bounds(args.bounds, d.values)
    base = _em_config(args, ConstraintSpec(a=a, b=b))
    conv = run_convergence_experiment(
        d.values, structures, args.g, regimes, starts=args.starts, seed=args.seed,
        kind=args.init, config=base, schedule_len=args.schedule_len, beta=args.beta,
    )
    meta = {
        "command": "converge",
        "source": source,
        "n": d.n,
        "p": d.p,
        "structures": structures,
        "G": args.g,
        "regimes": regimes,
        "bounds_kind": bounds_kind,
        "regime_semantics": {
            "none": "(0, inf), no schedule",
            "lower": "(beta (1 - v), inf)",
            "upper": "(0, beta (1 - log(1 - v)))",
            "range": "beta (1 - v, 1 - log(1 - v))",
        },
        "schedule": {"kind": "equidistant", "length": args.schedule_len, "beta": args.beta},
        "starts": args.starts,
        "start_seeds": [args.seed, args.seed + args.starts - 1],
        "init": args.init,
        "tie_tolerance": TIE_TOL,
        "degenerate_runs_excluded_from_maximum": True,
        "em": _config_meta(base, d.p),
        "unscored_starts": {f"{s}_G{G}": k for (s, G), k in conv.unscored_starts.items()},
    }
    files = emit_reports(args.out, meta, convergence=conv)
    print(f"wrote {len(files)} files to {args.out}")
    return 0


def _add_data_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV file with a header row")
    src.add_argument("--sim", choices=["sim1", "sim2", "sim2-noise"], help="built-in simulated data")
    p.add_argument("--sim-seed", type=int, default=0)
    p.add_argument("--label-column", help="column(s) holding true classes, comma separated")
    p.add_argument("--drop", help="columns to ignore, comma separated")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--inner-m", type=int, default=1)
    p.add_argument("--allow-small-groups", action="store_true",
                   help="keep components smaller than p+1 when a positive lower bound is active")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rgpcm", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a (structure x G) grid and select by BIC")
    _add_data_args(p)
    p.add_argument("--models", default="all")
    p.add_argument("--g", type=parse_g_range, default=parse_g_range("1:6"))
    p.add_argument("--bounds", "--static-bounds", default="data", help="'data', 'none' or 'a,b'")
    p.add_argument("--regime", type=Regime, choices=list(Regime), default=Regime.NONE,
                   help="relaxation schedule applied inside the static bounds")
    p.add_argument("--schedule-len", type=int, default=25)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--init", type=InitKind, choices=list(InitKind), default=InitKind.KMEANS)
    p.add_argument("--restarts", type=int, default=10)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sim", help="write a built-in simulated data set")
    p.add_argument("--name", choices=["sim1", "sim2", "sim2-noise"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("converge", help="compare constraint regimes from random starts")
    _add_data_args(p)
    p.add_argument("--models", default="all")
    p.add_argument("--g", type=parse_g_range, default=parse_g_range("2:6"))
    p.add_argument("--regimes", default="none,lower,upper,range")
    p.add_argument("--bounds", "--static-bounds", default="none", help="'data', 'none' or 'a,b'")
    p.add_argument("--starts", type=int, default=50)
    p.add_argument("--schedule-len", type=int, default=25)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--init", type=InitKind, choices=list(InitKind), default=InitKind.RANDOM_PARTITION)
    p.set_defaults(func=cmd_converge)
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
