"""Interactive similarity queries on a diffusion embedding.

Neighborhoods gather particles within a diffusion-distance radius of a
source and, when over the cap, subsample them by farthest point sampling in
embedding space so the kept trajectories stay well spread. Multi-source
fields assign each particle to its nearest source. Clustering runs seeded
k-means on the scaled embedding, the spectral-clustering view of large
scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2

from .diffusion import DiffusionEmbedding, embedding_vectors


@dataclass(frozen=True)
class NeighborhoodResult:
    """Particles within a diffusion-distance radius of a source particle.

    members are ordered with the source first (distance 0); when the
    candidate set was subsampled, the order is the farthest-point selection
    order.
    """

    source: int
    scale: float
    members: np.ndarray
    distances: np.ndarray
    radius: float
    max_count: int

    def __post_init__(self):
        members = np.ascontiguousarray(np.asarray(self.members, dtype=np.int64))
        distances = np.ascontiguousarray(np.asarray(self.distances, dtype=np.float64))
        if members.shape != distances.shape or members.ndim != 1:
            raise ValueError("members/distances must be matching 1-d arrays")
        if members.shape[0] == 0 or members[0] != self.source or distances[0] != 0.0:
            raise ValueError("the source must be the first member with distance 0")
        if np.unique(members).shape[0] != members.shape[0]:
            raise ValueError("members must be distinct")
        members.setflags(write=False)
        distances.setflags(write=False)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "distances", distances)


def _fps_order(points: np.ndarray, start: int, count: int) -> np.ndarray:
    """Greedy max-min selection order of ``count`` rows, starting from ``start``."""
    n = points.shape[0]
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = start
    diff = points - points[start]
    min_d = np.einsum("ij,ij->i", diff, diff)
    for k in range(1, count):
        nxt = int(np.argmax(min_d))
        chosen[k] = nxt
        diff = points - points[nxt]
        np.minimum(min_d, np.einsum("ij,ij->i", diff, diff), out=min_d)
    return chosen


def similarity_neighborhood(
    E: DiffusionEmbedding,
    source: int,
    s: float,
    radius: float,
    max_count: int,
    rng_seed: int = 0,
) -> NeighborhoodResult:
    """Particles within ``radius`` diffusion distance of ``source`` at scale s.

    When more than ``max_count`` candidates qualify they are subsampled by
    farthest point sampling under the diffusion distance, starting from the
    source so it is always represented. ``rng_seed`` is reserved; the result
    is deterministic for given inputs.
    """
    if not (0 <= source < E.n):
        raise IndexError(f"source {source} out of range (n={E.n})")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if max_count < 1:
        raise ValueError("max_count must be at least 1")
    phi = embedding_vectors(E, s)
    diff = phi - phi[source]
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    candidates = np.flatnonzero(dist <= radius)
    if candidates.shape[0] <= max_count:
        order = np.argsort(dist[candidates], kind="stable")
        members = candidates[order]
        # the source sorts first (distance exactly 0), keep it explicit anyway
        src_pos = int(np.flatnonzero(members == source)[0])
        if src_pos != 0:
            members = np.concatenate(([source], np.delete(members, src_pos)))
    else:
        local_src = int(np.flatnonzero(candidates == source)[0])
        picked = _fps_order(phi[candidates], local_src, max_count)
        members = candidates[picked]
    return NeighborhoodResult(
        source=int(source),
        scale=float(s),
        members=members,
        distances=dist[members],
        radius=float(radius),
        max_count=int(max_count),
    )


@dataclass(frozen=True)
class MultiSourceField:
    """Per-particle nearest source and the distance to it."""

    sources: tuple[int, ...]
    scale: float
    nearest: np.ndarray
    distances: np.ndarray


def multi_source_field(E: DiffusionEmbedding, sources, s: float) -> MultiSourceField:
    """Assign every particle to its nearest source under the diffusion distance.

    Ties break toward the lowest source particle index.
    """
    src = np.asarray(sorted(int(v) for v in np.atleast_1d(sources)), dtype=np.int64)
    if np.unique(src).shape[0] != src.shape[0]:
        raise ValueError("sources must be distinct")
    if src.min() < 0 or src.max() >= E.n:
        raise IndexError("source index out of range")
    phi = embedding_vectors(E, s)
    dmat = np.empty((E.n, src.shape[0]))
    for c, sindex in enumerate(src):
        diff = phi - phi[sindex]
        dmat[:, c] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    best = dmat.argmin(axis=1)  # argmin takes the first minimum: lowest source id
    return MultiSourceField(
        sources=tuple(int(v) for v in src),
        scale=float(s),
        nearest=src[best],
        distances=dmat[np.arange(E.n), best],
    )


def cluster_embedding(
    E: DiffusionEmbedding, s: float, k: int, rng_seed: int = 0, n_init: int = 10
) -> np.ndarray:
    """Seeded k-means labels on the scaled embedding.

    Runs ``n_init`` k-means++ restarts and keeps the lowest-inertia labeling;
    the restart seeds derive from ``rng_seed``, so results are reproducible.
    """
    if not (1 <= k <= E.n):
        raise ValueError(f"k must be in [1, {E.n}]")
    if k == 1:
        return np.zeros(E.n, dtype=np.int64)
    phi = embedding_vectors(E, s)
    root = np.random.default_rng(rng_seed)
    best_inertia, best_labels = np.inf, None
    for _ in range(max(1, n_init)):
        cent, labels = kmeans2(phi, k, minit="++", seed=np.random.default_rng(root.integers(2**63)))
        inertia = float(((phi - cent[labels]) ** 2).sum())
        if inertia < best_inertia:
            best_inertia, best_labels = inertia, labels
    return best_labels.astype(np.int64)
