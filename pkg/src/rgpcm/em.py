"""Constrained EM for the eight eigenvalue-parameterised Gaussian mixtures.

The M-step is an alternating conditional maximisation: orientations are
updated given the current eigenvalues, then eigenvalues given the new
orientations, each step clamped into the active interval ``[a, b]``. Because
every conditional step is an exact maximiser over a set that contains the
previous parameters, the observed log-likelihood never decreases as long as
successive intervals are nested.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .constraints import ConstraintSpec
from .family import (
    CovarianceFactors,
    Orientation,
    Structure,
    assemble_sigma,
    count_free_params,
)
from .linalg import cholesky, eig_sym, quad_diag

log = logging.getLogger(__name__)

EIG_FLOOR = 1e-300
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class EmConfig:
    max_iter: int = 1000
    tol: float = 1e-8
    inner_m: int = 1
    constraint: ConstraintSpec = field(default_factory=ConstraintSpec)
    # degeneracy thresholds; min_group_size=None means p + 1
    min_group_size: Optional[float] = None
    # when True a small component only counts as degenerate if the active
    # lower bound cannot repair its rank-deficient scatter
    small_groups_repairable: bool = False
    min_eigenvalue: float = 1e-10
    max_loglik_jump: float = 1e6
    flury_tol: float = 1e-10
    flury_max_sweeps: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.inner_m < 1:
            raise ValueError("inner_m must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    def group_floor(self, p: int) -> float:
        return p + 1 if self.min_group_size is None else self.min_group_size


@dataclass
class MixtureModel:
    weights: np.ndarray  # (G,)
    means: np.ndarray  # (G, p)
    factors: CovarianceFactors

    @property
    def G(self) -> int:
        return self.factors.G

    @property
    def p(self) -> int:
        return self.factors.p

    @property
    def structure(self) -> Structure:
        return self.factors.structure

    def sigmas(self) -> np.ndarray:
        return np.stack([assemble_sigma(self.factors, g) for g in range(self.G)])


@dataclass
class FitReport:
    structure: Structure
    G: int
    model: Optional[MixtureModel]
    loglik_trace: np.ndarray
    min_eig_trace: np.ndarray
    max_eig_trace: np.ndarray
    loglik: float
    bic: float
    n_params: int
    labels: np.ndarray
    responsibilities: Optional[np.ndarray]
    converged: bool
    degenerate: bool
    iterations: int
    reason: str = ""
    flury_unconverged: int = 0

    @property
    def usable(self) -> bool:
        """Eligible for model selection."""
        return self.converged and not self.degenerate and np.isfinite(self.bic)


# --------------------------------------------------------------------------
# densities and E-step


def _log_density_chol(x: np.ndarray, mean: np.ndarray, low: np.ndarray) -> np.ndarray:
    p = mean.shape[0]
    resid = solve_triangular(low, (x - mean).T, lower=True, check_finite=False)
    maha = np.einsum("ij,ij->j", resid, resid)
    logdet = 2.0 * np.sum(np.log(np.diag(low)))
    return -0.5 * (p * LOG_2PI + logdet + maha)


def log_density_gauss(x, mean, sigma) -> float | np.ndarray:
    """Multivariate normal log-density; ``x`` may be one point or an ``(n, p)`` block."""
    x = np.asarray(x, dtype=float)
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    low = cholesky(np.atleast_2d(sigma))
    if x.ndim <= 1:
        return float(_log_density_chol(np.atleast_1d(x)[None, :], mean, low)[0])
    return _log_density_chol(x, mean, low)


def component_log_densities(x: np.ndarray, model: MixtureModel) -> np.ndarray:
    """``(n, G)`` matrix of ``log pi_g + log phi(x_i | mu_g, Sigma_g)``.

    Evaluated straight from the eigen-factors: the rotated residuals
    ``D_g' (x - mu_g)`` are scaled by ``B_g``, so no factorisation is needed.
    """
    f = model.factors
    out = np.empty((x.shape[0], model.G))
    for g in range(model.G):
        resid = x - model.means[g]
        if f.orients is not None:
            resid = resid @ f.orient_for(g)
        ev = f.eigvals_for(g)
        maha = (resid * resid / ev).sum(axis=1)
        out[:, g] = np.log(model.weights[g]) - 0.5 * (
            model.p * LOG_2PI + np.sum(np.log(ev)) + maha
        )
    return out


def e_step(x, model: MixtureModel) -> tuple[np.ndarray, float]:
    """Responsibilities and the observed-data log-likelihood."""
    x = np.asarray(x, dtype=float)
    logp = component_log_densities(x, model)
    top = logp.max(axis=1, keepdims=True)
    lse = top + np.log(np.exp(logp - top).sum(axis=1, keepdims=True))
    z = np.exp(logp - lse)
    z /= z.sum(axis=1, keepdims=True)
    return z, float(lse.sum())


def map_labels(z: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum, so ties go to the lowest index
    return np.argmax(z, axis=1)


# --------------------------------------------------------------------------
# M-step pieces


class GroupMoments(NamedTuple):
    weights: np.ndarray  # (G,)
    means: np.ndarray  # (G, p)
    scatters: np.ndarray  # (G, p, p)
    counts: np.ndarray  # (G,)


def m_step_weights_means(x, z) -> GroupMoments:
    """Mixing weights, means and within-group scatter matrices.

    Empty groups get the grand mean and a zero scatter; callers are expected to
    catch them through :func:`detect_degeneracy`.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    n, p = x.shape
    counts = z.sum(axis=0)
    G = counts.shape[0]
    means = np.empty((G, p))
    scatters = np.zeros((G, p, p))
    grand = x.mean(axis=0)
    for g in range(G):
        if counts[g] <= 0:
            means[g] = grand
            continue
        means[g] = z[:, g] @ x / counts[g]
        r = x - means[g]
        s = (r * z[:, g, None]).T @ r / counts[g]
        scatters[g] = 0.5 * (s + s.T)
    return GroupMoments(counts / n, means, scatters, counts)


def clamp_eigs(v, a: float, b: float) -> np.ndarray:
    """Clamp each entry into ``[a, b]`` (never below a tiny positive floor)."""
    if a > b:
        raise ValueError(f"empty eigenvalue interval: a={a} > b={b}")
    out = np.minimum(b, np.maximum(np.asarray(v, dtype=float), a))
    return np.maximum(out, EIG_FLOOR)


def _as_stack(mats, G: int) -> np.ndarray:
    mats = np.asarray(mats, dtype=float)
    if mats.ndim == 2:
        mats = np.broadcast_to(mats, (G,) + mats.shape)
    return mats


def update_B_varying(scatters, orients, a: float, b: float) -> np.ndarray:
    scatters = np.asarray(scatters, dtype=float)
    orients = _as_stack(orients, scatters.shape[0])
    v = np.stack([quad_diag(d, s) for d, s in zip(orients, scatters)])
    return clamp_eigs(v, a, b)


def update_B_common(scatters, orients, weights, a: float, b: float) -> np.ndarray:
    scatters = np.asarray(scatters, dtype=float)
    orients = _as_stack(orients, scatters.shape[0])
    v = sum(w * quad_diag(d, s) for w, d, s in zip(weights, orients, scatters))
    return clamp_eigs(v, a, b)


def _rank_match(values: np.ndarray, vectors: np.ndarray, target: Optional[np.ndarray]) -> np.ndarray:
    """Arrange eigenvector columns so the k-th largest eigenvalue sits where
    ``target`` has its k-th largest entry (ties by position)."""
    if target is None:
        return vectors
    slots = np.argsort(-np.asarray(target, dtype=float), kind="stable")
    out = np.empty_like(vectors)
    out[:, slots] = vectors
    return out


def update_D_varying(scatter, eigvals=None, start=None) -> np.ndarray:
    """Eigenvectors of one scatter matrix.

    Columns are in descending eigenvalue order, or, when the current
    eigenvalue vector is given, placed so large eigenvalues meet large
    eigenvalues. That placement is the exact conditional maximiser.
    ``start`` warm-starts the Jacobi rotations.
    """
    pairs = eig_sym(scatter, start=start)
    return _rank_match(pairs.values, pairs.vectors, eigvals)


class FluryResult(NamedTuple):
    orient: np.ndarray
    objective: float
    objective_trace: list
    sweeps: int
    converged: bool


def flury_objective(orient, scatters, counts, eigvals) -> float:
    """``sum_g n_g sum_k d_k' S_g d_k / b_gk``."""
    t = np.stack([quad_diag(orient, s) for s in scatters])
    return float(np.sum(np.asarray(counts)[:, None] * t / np.asarray(eigvals)))


def update_D_common(
    scatters,
    counts,
    eigvals,
    start=None,
    tol: float = 1e-10,
    max_sweeps: int = 100,
) -> FluryResult:
    """Shared orientation given per-group eigenvalues (pairwise-rotation descent).

    Each column pair ``(k, l)`` is rotated in its own plane by the angle that
    exactly minimises the objective restricted to that plane; that angle is
    the smallest eigenvector of a weighted 2x2 difference matrix. Sweeps
    repeat until the relative decrease falls below ``tol``.
    """
    scatters = np.asarray(scatters, dtype=float)
    counts = np.asarray(counts, dtype=float)
    eigvals = np.asarray(eigvals, dtype=float)
    G, p, _ = scatters.shape
    eigvals = np.broadcast_to(eigvals, (G, p))
    if start is None:
        pooled = np.tensordot(counts / counts.sum(), scatters, axes=1)
        start = update_D_varying(pooled, eigvals[int(np.argmax(counts))])
    d = np.array(start, dtype=float, copy=True)
    w = counts[:, None] / eigvals  # (G, p)
    t = np.einsum("ik,gij,jl->gkl", d, scatters, d)

    def objective() -> float:
        return float(np.sum(w * np.diagonal(t, axis1=1, axis2=2)))

    trace = [objective()]
    converged = p < 2
    sweeps = 0
    while not converged and sweeps < max_sweeps:
        sweeps += 1
        for k in range(p - 1):
            for l in range(k + 1, p):
                idx = [k, l]
                blocks = t[:, idx][:, :, idx]  # (G, 2, 2)
                a = np.tensordot(w[:, k] - w[:, l], blocks, axes=1)
                half_diff = 0.5 * (a[0, 0] - a[1, 1])
                off = 0.5 * (a[0, 1] + a[1, 0])
                radius = math.hypot(half_diff, off)
                if radius <= 1e-15 * (abs(a[0, 0]) + abs(a[1, 1])) or radius == 0.0:
                    continue
                angle = 0.5 * math.atan2(-off, -half_diff)
                c, s = math.cos(angle), math.sin(angle)
                if abs(s) < 1e-300:
                    continue
                rot = np.array([[c, -s], [s, c]])
                d[:, idx] = d[:, idx] @ rot
                t[:, :, idx] = t[:, :, idx] @ rot
                t[:, idx, :] = np.einsum("ji,gjk->gik", rot, t[:, idx, :])
        t = 0.5 * (t + np.transpose(t, (0, 2, 1)))
        trace.append(objective())
        if trace[-2] - trace[-1] <= tol * max(abs(trace[-1]), 1e-300):
            converged = True
    if not converged:
        log.warning("common-orientation update hit its sweep budget (%d sweeps)", sweeps)
    return FluryResult(d, trace[-1], trace, sweeps, converged)


class CovarianceStep(NamedTuple):
    factors: CovarianceFactors
    candidates: np.ndarray  # unclamped eigenvalue proposals of the final B update
    flury_unconverged: int


def _initial_orients(structure: Structure, moments: GroupMoments, p: int) -> Optional[np.ndarray]:
    kind = structure.orientation
    if kind is Orientation.SHARED:
        pooled = np.tensordot(moments.weights, moments.scatters, axes=1)
        return update_D_varying(pooled)[None]
    if kind is Orientation.VARYING:
        return np.stack([update_D_varying(s) for s in moments.scatters])
    return None


def _start(orients: Optional[np.ndarray], g: int) -> Optional[np.ndarray]:
    if orients is None:
        return None
    return orients[0 if orients.shape[0] == 1 else g]


def m_step_covariance_detail(
    structure: Structure,
    moments: GroupMoments,
    prev: Optional[CovarianceFactors],
    a: float,
    b: float,
    inner_m: int = 1,
    flury_tol: float = 1e-10,
    flury_max_sweeps: int = 100,
) -> CovarianceStep:
    structure = Structure(structure)
    S, counts, weights = moments.scatters, moments.counts, moments.weights
    G, p, _ = S.shape
    pooled = np.tensordot(weights, S, axes=1)

    if structure is Structure.ONE_I:
        v = np.array([np.trace(pooled) / p])
        return CovarianceStep(CovarianceFactors(structure, G, p, clamp_eigs(v, a, b)), v, 0)
    if structure is Structure.GI:
        v = np.trace(S, axis1=1, axis2=2)[:, None] / p
        return CovarianceStep(CovarianceFactors(structure, G, p, clamp_eigs(v, a, b)), v, 0)
    if structure is Structure.EI:
        v = np.diag(pooled)
        return CovarianceStep(CovarianceFactors(structure, G, p, clamp_eigs(v, a, b)), v, 0)
    if structure is Structure.VI:
        v = np.diagonal(S, axis1=1, axis2=2).copy()
        return CovarianceStep(CovarianceFactors(structure, G, p, clamp_eigs(v, a, b)), v, 0)

    if prev is not None and (prev.structure is not structure or prev.G != G or prev.p != p):
        raise ValueError("previous factors do not match the requested structure")
    if prev is None:
        orients = _initial_orients(structure, moments, p)
        eig_prev = None
        if structure is Structure.VE:
            v = np.stack([quad_diag(orients[0], s) for s in S])
            eig_prev = clamp_eigs(v, a, b)
    else:
        orients = prev.orients
        eig_prev = prev.eigvals

    unconverged = 0
    for _ in range(inner_m):
        if structure is Structure.EE:
            target = None if eig_prev is None else eig_prev[0]
            orients = update_D_varying(pooled, target, _start(orients, 0))[None]
            v = quad_diag(orients[0], pooled)
            eig_prev = clamp_eigs(v, a, b)[None]
        elif structure is Structure.EV:
            target = None if eig_prev is None else eig_prev[0]
            orients = np.stack([
                update_D_varying(S[g], target, _start(orients, g)) for g in range(G)
            ])
            v = sum(w * quad_diag(d, s) for w, d, s in zip(weights, orients, S))
            eig_prev = clamp_eigs(v, a, b)[None]
        elif structure is Structure.VV:
            orients = np.stack([
                update_D_varying(
                    S[g], None if eig_prev is None else eig_prev[g], _start(orients, g)
                )
                for g in range(G)
            ])
            v = np.stack([quad_diag(d, s) for d, s in zip(orients, S)])
            eig_prev = clamp_eigs(v, a, b)
        else:  # VE
            if G == 1:
                orients = update_D_varying(S[0], eig_prev[0])[None]
            else:
                res = update_D_common(
                    S, counts, eig_prev, start=orients[0],
                    tol=flury_tol, max_sweeps=flury_max_sweeps,
                )
                unconverged += int(not res.converged)
                orients = res.orient[None]
            v = np.stack([quad_diag(orients[0], s) for s in S])
            eig_prev = clamp_eigs(v, a, b)
    factors = CovarianceFactors(structure, G, p, eig_prev, orients)
    return CovarianceStep(factors, np.atleast_1d(v), unconverged)


def m_step_covariance(structure, moments: GroupMoments, prev, a: float, b: float, inner_m: int = 1) -> CovarianceFactors:
    return m_step_covariance_detail(structure, moments, prev, a, b, inner_m).factors


# --------------------------------------------------------------------------
# degeneracy and the driver


def degeneracy_reason(
    counts,
    p: int,
    config: EmConfig,
    *,
    min_candidate: Optional[float] = None,
    lower_bound: float = 0.0,
    loglik_delta: Optional[float] = None,
) -> str:
    """Empty string when healthy, otherwise a short description.

    A component holding less than one observation is always degenerate, and
    so by default is one below ``config.group_floor(p)``. A tiny candidate
    eigenvalue only counts when the active lower bound is also below the
    eigenvalue threshold; otherwise the clamp repairs it. With
    ``small_groups_repairable`` the size floor gets the same exemption.
    """
    unrepaired = lower_bound < config.min_eigenvalue
    if counts is not None:
        counts = np.asarray(counts, dtype=float)
        floor = config.group_floor(p)
        if np.any(counts < 1.0):
            return f"component size {counts.min():.3g} below one observation"
        if (unrepaired or not config.small_groups_repairable) and np.any(counts < floor):
            return f"component size {counts.min():.3g} below {floor:g}"
    if (
        min_candidate is not None
        and min_candidate < config.min_eigenvalue
        and unrepaired
    ):
        return f"candidate eigenvalue {min_candidate:.3g} below {config.min_eigenvalue:g}"
    if loglik_delta is not None and loglik_delta > config.max_loglik_jump:
        return f"log-likelihood jumped by {loglik_delta:.3g}"
    return ""


def detect_degeneracy(counts, p: int, config: EmConfig, **kwargs) -> bool:
    return bool(degeneracy_reason(counts, p, config, **kwargs))


def bic_value(loglik: float, m: int, n: int) -> float:
    return -2.0 * loglik + m * math.log(n)


def fit(x, structure, G: int, init, config: Optional[EmConfig] = None, callback=None) -> FitReport:
    """Run constrained EM from starting responsibilities ``init`` (n x G).

    The relaxation schedule, if any, covers the first ``schedule_len``
    iterations; afterwards the final interval stays in force and EM runs until
    the relative log-likelihood change drops below ``config.tol``.
    Degeneracy stops the run and keeps the last healthy parameters.

    ``callback(t, model, a, b)`` is called after every accepted M-step ``t``
    with the interval that step was clamped to.
    """
    config = config or EmConfig()
    structure = Structure(structure)
    x = np.asarray(x, dtype=float)
    z = np.asarray(init, dtype=float)
    n, p = x.shape
    if z.shape != (n, G):
        raise ValueError(f"starting responsibilities have shape {z.shape}, expected {(n, G)}")
    if n <= G:
        raise ValueError(f"need more observations than components (n={n}, G={G})")
    cs = config.constraint
    sched = max(cs.scheduled_steps, 1)
    m = count_free_params(structure, G, p)

    trace: list[float] = []
    eig_lo: list[float] = []
    eig_hi: list[float] = []
    model: Optional[MixtureModel] = None
    converged = False
    reason = ""
    unconverged = 0
    z_last: Optional[np.ndarray] = None

    moments = m_step_weights_means(x, z)
    a, b = cs.bounds_at(1)
    reason = degeneracy_reason(moments.counts, p, config, lower_bound=a)
    if not reason:
        step = m_step_covariance_detail(
            structure, moments, None, a, b, config.inner_m, config.flury_tol, config.flury_max_sweeps
        )
        unconverged += step.flury_unconverged
        reason = degeneracy_reason(
            moments.counts, p, config, min_candidate=float(np.min(step.candidates)), lower_bound=a
        )
        if not reason:
            model = MixtureModel(moments.weights, moments.means, step.factors)
            if callback is not None:
                callback(1, model, a, b)

    it = 0
    while model is not None and not reason and it < config.max_iter:
        it += 1
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            z_new, ll = e_step(x, model)
        if not np.isfinite(ll):
            reason = "non-finite log-likelihood"
            break
        eigs = model.factors.all_eigvals()
        trace.append(ll)
        eig_lo.append(float(eigs.min()))
        eig_hi.append(float(eigs.max()))
        z_last = z_new
        if len(trace) > 1:
            reason = degeneracy_reason(None, p, config, loglik_delta=trace[-1] - trace[-2])
            if reason:
                break
            if it > sched and abs(trace[-1] - trace[-2]) < config.tol * abs(trace[-1]):
                converged = True
                break
        moments = m_step_weights_means(x, z_new)
        a, b = cs.bounds_at(it + 1)
        reason = degeneracy_reason(moments.counts, p, config, lower_bound=a)
        if reason:
            break
        step = m_step_covariance_detail(
            structure, moments, model.factors, a, b,
            config.inner_m, config.flury_tol, config.flury_max_sweeps,
        )
        unconverged += step.flury_unconverged
        reason = degeneracy_reason(
            moments.counts, p, config, min_candidate=float(np.min(step.candidates)), lower_bound=a
        )
        if reason:
            break
        model = MixtureModel(moments.weights, moments.means, step.factors)
        if callback is not None:
            callback(it + 1, model, a, b)

    degenerate = bool(reason)
    loglik = trace[-1] if trace else float("nan")
    labels = map_labels(z_last) if z_last is not None else np.zeros(n, dtype=int)
    if degenerate:
        log.debug("%s G=%d degenerate: %s", structure, G, reason)
    return FitReport(
        structure=structure,
        G=G,
        model=model,
        loglik_trace=np.asarray(trace),
        min_eig_trace=np.asarray(eig_lo),
        max_eig_trace=np.asarray(eig_hi),
        loglik=loglik,
        bic=bic_value(loglik, m, n) if trace else float("nan"),
        n_params=m,
        labels=labels,
        responsibilities=z_last,
        converged=converged,
        degenerate=degenerate,
        iterations=len(trace),
        reason=reason,
        flury_unconverged=unconverged,
    )


def failed_report(structure, G: int, n: int, p: int, reason: str) -> FitReport:
    """Placeholder report for a cell that could not be fitted at all."""
    empty = np.zeros(0)
    return FitReport(
        structure=Structure(structure), G=G, model=None,
        loglik_trace=empty, min_eig_trace=empty, max_eig_trace=empty,
        loglik=float("nan"), bic=float("nan"),
        n_params=count_free_params(Structure(structure), G, p),
        labels=np.zeros(n, dtype=int), responsibilities=None,
        converged=False, degenerate=True, iterations=0, reason=reason,
    )
