"""Synthetic mixtures with eigenvalue-parameterised covariances.

Built-in study definitions live in ``rgpcm/data/*.json``. A component's scale
matrix is ``D_g diag(B) D_g'``; orientations are either the identity, an
explicit matrix, or ``{"random_seed": k}`` for a fixed random rotation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .linalg import cholesky, normalize_signs, reconstruct

BUILTIN = {"sim1": "sim1.json", "sim2": "sim2.json", "sim2-noise": "sim2_noise.json"}


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_mvn(mean, sigma, n: int, seed=0) -> np.ndarray:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    low = cholesky(np.atleast_2d(sigma))
    z = _rng(seed).standard_normal((n, mean.shape[0]))
    return mean + z @ low.T


def sample_mvt(mean, scale, df: float, n: int, seed=0) -> np.ndarray:
    """Multivariate t: a normal draw divided by ``sqrt(chi2_df / df)``."""
    if not df > 0:
        raise ValueError("degrees of freedom must be positive")
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    low = cholesky(np.atleast_2d(scale))
    rng = _rng(seed)
    z = rng.standard_normal((n, mean.shape[0]))
    w = rng.chisquare(df, size=n)
    return mean + (z @ low.T) / np.sqrt(w / df)[:, None]


def random_orthogonal(p: int, seed=0) -> np.ndarray:
    q, r = np.linalg.qr(_rng(seed).standard_normal((p, p)))
    q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    return normalize_signs(q)


def add_uniform_noise(x, fraction: float, seed=0) -> tuple[np.ndarray, np.ndarray]:
    """Append ``round(fraction * n)`` uniform points from the bounding box of ``x``.

    Returns the augmented data and a boolean mask marking the noise rows.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("noise fraction must lie in [0, 1)")
    x = np.asarray(x, dtype=float)
    k = int(round(fraction * x.shape[0]))
    lo, hi = x.min(axis=0), x.max(axis=0)
    noise = _rng(seed).uniform(lo, hi, size=(k, x.shape[1]))
    mask = np.concatenate([np.zeros(x.shape[0], bool), np.ones(k, bool)])
    return np.vstack([x, noise]), mask


@dataclass
class SimSpec:
    name: str
    sizes: list
    means: np.ndarray
    eigvals: np.ndarray  # (G, p)
    orients: np.ndarray  # (G, p, p)
    family: str = "gaussian"
    df: Optional[float] = None
    noise: float = 0.0
    structure: str = ""

    @property
    def p(self) -> int:
        return self.means.shape[1]

    def scale(self, g: int) -> np.ndarray:
        return reconstruct(self.orients[g], self.eigvals[g])

    @classmethod
    def from_dict(cls, d: dict) -> "SimSpec":
        means = np.asarray(d["means"], dtype=float)
        G, p = means.shape
        ev = np.asarray(d["eigvals"], dtype=float)
        ev = np.broadcast_to(ev, (G, p)).copy()
        orients = d.get("orients", "identity")
        if isinstance(orients, (str, dict)) or _is_matrix(orients):
            orients = [orients]
        if len(orients) == 1:
            orients = list(orients) * G
        mats = np.stack([_orientation(o, p) for o in orients])
        family = d.get("family", "gaussian").lower()
        df = d.get("df")
        if family == "t" and (df is None or not df > 2):
            raise ValueError("t components need df > 2 for a finite covariance")
        noise = float(d.get("noise", 0.0))
        if not 0.0 <= noise < 1.0:
            raise ValueError("noise fraction must lie in [0, 1)")
        return cls(d.get("name", ""), list(d["sizes"]), means, ev, mats, family, df, noise,
                   d.get("structure", ""))


def _is_matrix(o) -> bool:
    return isinstance(o, list) and bool(o) and isinstance(o[0], list) \
        and bool(o[0]) and isinstance(o[0][0], (int, float))


def _orientation(o, p: int) -> np.ndarray:
    if o == "identity":
        return np.eye(p)
    if isinstance(o, dict) and "random_seed" in o:
        return random_orthogonal(p, int(o["random_seed"]))
    m = np.asarray(o, dtype=float)
    if m.shape != (p, p) or np.max(np.abs(m.T @ m - np.eye(p))) > 1e-10:
        raise ValueError("explicit orientation must be a p x p orthonormal matrix")
    return m


def load_spec(name_or_path: str) -> SimSpec:
    if name_or_path in BUILTIN:
        text = resources.files("rgpcm.data").joinpath(BUILTIN[name_or_path]).read_text()
    else:
        with open(name_or_path) as fh:
            text = fh.read()
    return SimSpec.from_dict(json.loads(text))


def generate(spec: SimSpec, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Draw a data set; labels are component indices, with noise rows labelled ``G``."""
    root = np.random.SeedSequence(seed)
    comp_seq, noise_seq = root.spawn(2)
    blocks, labels = [], []
    for g, (n_g, child) in enumerate(zip(spec.sizes, comp_seq.spawn(len(spec.sizes)))):
        rng = np.random.default_rng(child)
        if spec.family == "t":
            block = sample_mvt(spec.means[g], spec.scale(g), spec.df, n_g, rng)
        else:
            block = sample_mvn(spec.means[g], spec.scale(g), n_g, rng)
        blocks.append(block)
        labels.append(np.full(n_g, g))
    x = np.vstack(blocks)
    y = np.concatenate(labels)
    if spec.noise > 0:
        x, mask = add_uniform_noise(x, spec.noise, np.random.default_rng(noise_seq))
        y = np.concatenate([y, np.full(int(mask.sum()), len(spec.sizes))])
    return x, y
