"""Small dense symmetric linear algebra kernels.

Matrices are plain ``numpy`` arrays. Symmetric inputs are symmetrised on entry
(``as_symmetric``) so every kernel downstream can rely on exact symmetry.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
ORTH_TOL = 1e-10


class EigenConvergenceError(RuntimeError):
    """Jacobi sweeps ran out before the off-diagonal mass vanished."""

    def __init__(self, residual: float, sweeps: int):
        super().__init__(
            f"Jacobi eigensolver did not converge after {sweeps} sweeps "
            f"(max off-diagonal residual {residual:.3e})"
        )
        self.residual = residual
        self.sweeps = sweeps


class NotPositiveDefiniteError(ValueError):
    """Raised by :func:`cholesky` when a pivot is not strictly positive."""

    def __init__(self, minor: int, pivot: float):
        super().__init__(
            f"matrix is not positive definite: leading minor of order {minor} "
            f"has non-positive pivot {pivot:.3e}"
        )
        self.minor = minor
        self.pivot = pivot


class EigenPairs(NamedTuple):
    values: np.ndarray  # (p,), non-increasing
    vectors: np.ndarray  # (p, p), column k pairs with values[k]


def as_symmetric(m) -> np.ndarray:
    m = np.array(m, dtype=float, copy=True)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {m.shape}")
    return 0.5 * (m + m.T)


def is_orthonormal(q: np.ndarray, tol: float = ORTH_TOL) -> bool:
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        return False
    return float(np.max(np.abs(q.T @ q - np.eye(q.shape[0])))) <= tol


def normalize_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each one is positive."""
    vectors = np.array(vectors, dtype=float, copy=True)
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eig_sym(
    m,
    tol: float = JACOBI_TOL,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
    start=None,
) -> EigenPairs:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the largest off-diagonal magnitude drops below
    ``tol * max|diag|``. Eigenpairs come back sorted by descending eigenvalue
    with the sign convention of :func:`normalize_signs`.

    ``start`` is an optional orthonormal guess for the eigenvectors; the
    rotations then begin from ``start' m start``, which saves sweeps when the
    matrix has changed little since the guess was computed.

    Raises
    ------
    EigenConvergenceError
        If ``max_sweeps`` sweeps do not reach the tolerance.
    """
    a0 = as_symmetric(m)
    p = a0.shape[0]
    if start is not None:
        v0 = np.array(start, dtype=float, copy=True)
        a0 = v0.T @ a0 @ v0
        a0 = 0.5 * (a0 + a0.T)
    else:
        v0 = np.eye(p)
    # plain floats: for the small p used here numpy call overhead dominates
    a = a0.tolist()
    v = v0.tolist()
    sweeps = 0
    while True:
        off = max((abs(a[i][j]) for i in range(p) for j in range(i + 1, p)), default=0.0)
        thresh = tol * max(abs(a[i][i]) for i in range(p))
        if off <= thresh or off == 0.0:
            break
        if sweeps >= max_sweeps:
            raise EigenConvergenceError(off, sweeps)
        sweeps += 1
        for i in range(p - 1):
            ai = a[i]
            for j in range(i + 1, p):
                aij = ai[j]
                if abs(aij) <= thresh:
                    continue
                aj = a[j]
                theta = (aj[j] - ai[i]) / (2.0 * aij)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ai[i] -= t * aij
                aj[j] += t * aij
                ai[j] = aj[i] = 0.0
                for r in range(p):
                    if r == i or r == j:
                        continue
                    ar = a[r]
                    ari, arj = ar[i], ar[j]
                    ar[i] = ai[r] = c * ari - s * arj
                    ar[j] = aj[r] = s * ari + c * arj
                for vr in v:
                    vri, vrj = vr[i], vr[j]
                    vr[i] = c * vri - s * vrj
                    vr[j] = s * vri + c * vrj
    values = np.array([a[i][i] for i in range(p)])
    vectors = np.array(v)
    order = np.argsort(-values, kind="stable")
    return EigenPairs(values[order], normalize_signs(vectors[:, order]))


def reconstruct(vectors: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Return ``V diag(values) V'`` (exactly symmetric)."""
    out = (vectors * values) @ vectors.T
    return 0.5 * (out + out.T)


def cholesky(m) -> np.ndarray:
    """Lower-triangular ``L`` with ``L L' = m`` and a strictly positive diagonal."""
    a = as_symmetric(m)
    p = a.shape[0]
    low = np.zeros_like(a)
    for j in range(p):
        row = low[j, :j]
        pivot = a[j, j] - row @ row
        if not pivot > 0.0:
            raise NotPositiveDefiniteError(j + 1, float(pivot))
        d = np.sqrt(pivot)
        low[j, j] = d
        if j + 1 < p:
            low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ row) / d
    return low


def quad_diag(q, s) -> np.ndarray:
    """Diagonal of ``Q' S Q``."""
    q = np.asarray(q, dtype=float)
    s = np.asarray(s, dtype=float)
    if q.ndim != 2 or s.ndim != 2 or q.shape[0] != s.shape[0] or s.shape[0] != s.shape[1]:
        raise ValueError(f"dimension mismatch: Q {q.shape} vs S {s.shape}")
    return np.einsum("ik,ij,jk->k", q, s, q)
