"""Starting responsibilities for EM: k-means partitions and random starts."""
from __future__ import annotations

import enum

import numpy as np


class InitKind(str, enum.Enum):
    KMEANS = "kmeans"
    RANDOM_PARTITION = "random-partition"
    RANDOM_RESP = "random-resp"

    def __str__(self) -> str:
        return self.value


def one_hot(labels, G: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    z = np.zeros((labels.shape[0], G))
    z[np.arange(labels.shape[0]), labels] = 1.0
    return z


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int) -> tuple[np.ndarray, float]:
    G = centers.shape[0]
    labels = None
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        # re-seed empty clusters with the point farthest from its center
        for g in range(G):
            if not np.any(new == g):
                sizes = np.bincount(new, minlength=G)
                dist = d2[np.arange(len(x)), new]
                dist = np.where(sizes[new] > 1, dist, -1.0)
                new[int(np.argmax(dist))] = g
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.stack([x[labels == g].mean(axis=0) for g in range(G)])
    wcss = float(((x - centers[labels]) ** 2).sum())
    return labels, wcss


def kmeans_labels(x, G: int, seed: int = 0, restarts: int = 10, max_iter: int = 300) -> np.ndarray:
    """Best-of-``restarts`` Lloyd partition by within-cluster sum of squares."""
    x = np.asarray(x, dtype=float)
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    distinct = np.unique(x, axis=0)
    if distinct.shape[0] < G:
        raise ValueError(f"only {distinct.shape[0]} distinct points for G={G} clusters")
    rng = np.random.default_rng(seed)
    best, best_wcss = None, np.inf
    for _ in range(restarts):
        centers = distinct[rng.choice(distinct.shape[0], size=G, replace=False)]
        labels, wcss = _lloyd(x, centers, max_iter)
        if wcss < best_wcss:
            best, best_wcss = labels, wcss
    return best


def kmeans_init(x, G: int, seed: int = 0, restarts: int = 10) -> np.ndarray:
    return one_hot(kmeans_labels(x, G, seed, restarts), G)


def random_init(n: int, G: int, seed: int = 0, kind=InitKind.RANDOM_PARTITION) -> np.ndarray:
    """Random hard partition (no empty group) or flat-Dirichlet soft rows."""
    if n < G:
        raise ValueError(f"need at least as many points as groups (n={n}, G={G})")
    rng = np.random.default_rng(seed)
    kind = InitKind(kind)
    if kind is InitKind.RANDOM_RESP:
        return rng.dirichlet(np.ones(G), size=n)
    if kind is InitKind.RANDOM_PARTITION:
        while True:
            labels = rng.integers(0, G, size=n)
            if np.unique(labels).shape[0] == G:
                return one_hot(labels, G)
    raise ValueError(f"{kind} is not a random initialisation")


def make_init(x, G: int, kind, seed: int = 0, restarts: int = 10) -> np.ndarray:
    kind = InitKind(kind)
    if kind is InitKind.KMEANS:
        return kmeans_init(x, G, seed, restarts)
    return random_init(np.asarray(x).shape[0], G, seed, kind)
