"""Landmark selection (random / farthest-point / temporally-subsampled FPS).

FPS is the greedy max-min rule under the trajectory dynamic distance, with a
running min-distance array so total work is O(n * n_l) distance evaluations.
The temporally subsampled variant restricts the distance to every stride-th
time step, which cuts the per-evaluation cost by the stride factor.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .trajectory import TrajectoryDataset, dynamic_distances_from, trapezoid_weights

STRATEGIES = ("random", "fps", "tfps")


@dataclass(frozen=True)
class LandmarkSet:
    """Subset of particle indices used for low-rank kernel approximation."""

    indices: np.ndarray
    strategy: str
    rng_seed: int
    stride: int = 1

    def __post_init__(self):
        idx = np.ascontiguousarray(np.asarray(self.indices, dtype=np.int64))
        if idx.ndim != 1 or idx.shape[0] == 0:
            raise ValueError("landmark indices must be a nonempty 1-d array")
        if np.unique(idx).shape[0] != idx.shape[0]:
            raise ValueError("landmark indices must be distinct")
        if idx.min() < 0:
            raise ValueError("landmark indices must be nonnegative")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def n_l(self) -> int:
        return self.indices.shape[0]


def subsampled_steps(T: int, stride: int) -> np.ndarray:
    """Time-step indices used by the temporally subsampled distance."""
    return np.arange(0, T, stride)


class _DistanceEngine:
    """Buffered dynamic-distance evaluation for the greedy selection loop.

    Works in float32: selection only compares distances, and the loop is
    memory-bandwidth bound, so halving the traffic roughly halves the cost.
    """

    def __init__(self, positions: np.ndarray, times: np.ndarray):
        # centering each step keeps gaps identical while minimizing the
        # magnitudes the norm identity has to cancel
        centered = positions - positions.mean(axis=0, keepdims=True)
        self.pos = np.ascontiguousarray(centered, dtype=np.float32)
        n, T, d = self.pos.shape
        w = trapezoid_weights(times) if T > 1 else np.ones(1)
        self.weights = w.astype(np.float32)
        self._sq_norms = np.einsum("ntd,ntd->nt", self.pos, self.pos)
        self._dots = np.empty((n, T), dtype=np.float32)
        self._sq = np.empty((n, T), dtype=np.float32)

    def from_particle(self, i: int) -> np.ndarray:
        # ||a-b||^2 = ||a||^2 - 2 a.b + ||b||^2; one streaming pass over pos
        np.einsum("ntd,td->nt", self.pos, self.pos[i], out=self._dots, optimize=True)
        np.multiply(self._dots, -2.0, out=self._sq)
        self._sq += self._sq_norms
        self._sq += self._sq_norms[i]
        np.maximum(self._sq, 0.0, out=self._sq)
        np.sqrt(self._sq, out=self._sq)
        return self._sq @ self.weights


def select_landmarks(
    ds: TrajectoryDataset,
    n_l: int,
    strategy: str = "tfps",
    rng_seed: int = 0,
    stride: int = 5,
) -> LandmarkSet:
    """Select ``n_l`` landmarks from the dataset.

    random: uniform sample without replacement.
    fps:    greedy max-min under the dynamic distance over all time steps.
    tfps:   as fps, but the distance is restricted to every stride-th step.

    The first fps/tfps landmark is drawn uniformly at random from the seeded
    generator; max-min ties break toward the lowest particle index.
    """
    n = ds.n
    if not (1 <= n_l <= n):
        raise ValueError(f"n_l must be in [1, {n}], got {n_l}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    rng = np.random.default_rng(rng_seed)
    if strategy == "random":
        idx = rng.choice(n, size=n_l, replace=False)
        return LandmarkSet(indices=idx, strategy=strategy, rng_seed=rng_seed, stride=stride)

    used = stride if strategy == "tfps" else 1
    steps = subsampled_steps(ds.T, used)
    engine = _DistanceEngine(ds.positions[:, steps, :], ds.times[steps])

    chosen = np.empty(n_l, dtype=np.int64)
    chosen[0] = int(rng.integers(n))
    min_dist = engine.from_particle(chosen[0]).astype(np.float64)
    min_dist[chosen[0]] = -np.inf  # chosen points leave the candidate pool
    for k in range(1, n_l):
        nxt = int(np.argmax(min_dist))
        chosen[k] = nxt
        np.minimum(min_dist, engine.from_particle(nxt), out=min_dist)
        min_dist[nxt] = -np.inf
    return LandmarkSet(indices=chosen, strategy=strategy, rng_seed=rng_seed, stride=used)


def subspace_error(U_l: np.ndarray, U: np.ndarray) -> float:
    """Residual of the landmark subspace outside the reference subspace.

    Both inputs must have orthonormal columns over the same particles; the
    result is the Frobenius norm of the projection of U_l onto the orthogonal
    complement of span(U), normalized by the Frobenius norm of U.
    """
    U_l = np.asarray(U_l, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    if U_l.shape[0] != U.shape[0]:
        raise ValueError("eigenvector matrices must have the same number of rows")
    resid = U_l - U @ (U.T @ U_l)
    return float(np.linalg.norm(resid) / np.linalg.norm(U))


def orthonormal_basis(vectors: np.ndarray) -> np.ndarray:
    """Orthonormalize eigenvector columns (QR); prefixes keep their spans."""
    q, _ = np.linalg.qr(vectors)
    return q


def eval_landmarks(
    ds: TrajectoryDataset,
    strategies=("random", "fps", "tfps"),
    n_l_grid=(250, 500, 1000),
    subspace_sizes=(50, 150, 250),
    trials: int = 10,
    stride: int = 5,
    alpha: float = 1.0,
    threshold: float = 1e-6,
    reference_modes: int | None = None,
    base_seed: int = 0,
) -> list[dict]:
    """Landmark-quality evaluation harness.

    Builds a reference diffusion operator from all particles, then for each
    (strategy, n_l, trial) selects landmarks (timed), builds the landmark
    operator, and reports the subspace error of its leading eigenvector spans
    against the reference for each requested subspace size.

    Returns a list of rows with keys:
    strategy, n_l, subspace, trial, error, select_seconds.
    """
    from .diffusion import SpatialIndex, build_diffusion_operator, build_landmark_kernel, compute_bandwidths

    k_max = max(subspace_sizes)
    ref_modes = reference_modes if reference_modes is not None else k_max
    index = SpatialIndex(ds)

    all_lm = LandmarkSet(indices=np.arange(ds.n), strategy="random", rng_seed=0)
    bw = compute_bandwidths(ds, all_lm, alpha=alpha, index=index)
    kern = build_landmark_kernel(ds, all_lm, bw, threshold=threshold, index=index)
    ref = build_diffusion_operator(kern, m=ref_modes)
    ref_basis = orthonormal_basis(ref.eigenvectors[:, :k_max])

    rows: list[dict] = []
    for strategy in strategies:
        for n_l in n_l_grid:
            for trial in range(trials):
                seed = base_seed + 7919 * trial + 101 * STRATEGIES.index(strategy) + n_l
                t0 = time.perf_counter()
                lm = select_landmarks(ds, n_l, strategy=strategy, rng_seed=seed, stride=stride)
                select_seconds = time.perf_counter() - t0
                bw_l = compute_bandwidths(ds, lm, alpha=alpha, index=index)
                kern_l = build_landmark_kernel(ds, lm, bw_l, threshold=threshold, index=index)
                emb = build_diffusion_operator(kern_l, m=k_max)
                basis_l = orthonormal_basis(emb.eigenvectors[:, :k_max])
                for size in subspace_sizes:
                    err = subspace_error(basis_l[:, :size], ref_basis[:, :size])
                    rows.append(
                        {
                            "strategy": strategy,
                            "n_l": n_l,
                            "subspace": size,
                            "trial": trial,
                            "error": err,
                            "select_seconds": select_seconds,
                        }
                    )
    return rows


def write_eval_csv(rows: list[dict], sink) -> None:
    """Emit the evaluation report as CSV: strategy,n_l,subspace,trial,error,select_seconds."""
    lines = ["strategy,n_l,subspace,trial,error,select_seconds"]
    for r in rows:
        lines.append(
            f"{r['strategy']},{r['n_l']},{r['subspace']},{r['trial']},"
            f"{r['error']:.12g},{r['select_seconds']:.6f}"
        )
    text = "\n".join(lines) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w") as fh:
            fh.write(text)
