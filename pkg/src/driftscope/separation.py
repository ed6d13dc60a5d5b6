"""Covariance-based separation fields, the finite-difference FTLE oracle,
kNN log-density, and opacity mapping.

Separation of a particle is the log of the largest eigenvalue of the
covariance of its spatial neighborhood, assembled either over stacked
trajectory positions (particle separation) or over diffusion-embedding
coordinates (diffusion separation), divided by the window duration. The
largest eigenvalue is computed from the k x k Gram matrix of the neighbor
difference vectors, which shares its nonzero spectrum with the covariance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .diffusion import DiffusionEmbedding, embedding_vectors
from .errors import DegenerateNeighborhoodError
from .fields import ScalarField
from .flows import FLOW_MAP_FLOWS, FlowSpec, evaluate_flow_map, rk4_advect
from .trajectory import TrajectoryDataset

_TINY = np.finfo(np.float64).tiny


def default_neighbor_count(d: int) -> int:
    """Spatial neighborhood sizes used for covariance fields: 9 in 2D, 27 in 3D."""
    return 9 if d == 2 else 27


def _anchor_step(ds: TrajectoryDataset, anchor: str) -> int:
    if anchor == "t1":
        return 0
    if anchor == "tT":
        return ds.T - 1
    raise ValueError("anchor must be 't1' or 'tT'")


def spatial_knn(ds: TrajectoryDataset, anchor: str, k: int) -> np.ndarray:
    """Indices of each particle's k nearest particles at the anchor time.

    Self is excluded. Returns an (n, k) integer array ordered by distance.
    """
    if not (0 < k < ds.n):
        raise ValueError(f"k must be in (0, {ds.n})")
    step = _anchor_step(ds, anchor)
    pts = ds.positions[:, step, :]
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k + 1)
    out = np.empty((ds.n, k), dtype=np.int64)
    rows = np.arange(ds.n)
    self_mask = idx == rows[:, None]
    for i in range(ds.n):
        row = idx[i][~self_mask[i]]
        out[i] = row[:k]  # drop the farthest hit when self was not returned
    return out


def _gram_top_eigenvalue(diffs: np.ndarray) -> np.ndarray:
    """Largest covariance eigenvalue per particle from stacked difference vectors.

    diffs has shape (n, k, D); the covariance sum_j w_j w_j^T has the same
    nonzero eigenvalues as the k x k Gram matrix of the w_j.
    """
    gram = np.einsum("nkd,nld->nkl", diffs, diffs)
    eig = np.linalg.eigvalsh(gram)
    return eig[:, -1]


def _separation_values(diffs: np.ndarray, tau: float) -> np.ndarray:
    lam = np.maximum(_gram_top_eigenvalue(diffs), _TINY)
    return np.log(lam) / tau


def _stacked_positions(ds: TrajectoryDataset, exclude_step: int) -> np.ndarray:
    keep = [k for k in range(ds.T) if k != exclude_step]
    return ds.positions[:, keep, :].reshape(ds.n, -1)


def particle_separation(
    ds: TrajectoryDataset, direction: str = "forward", k: int | None = None
) -> ScalarField:
    """Covariance separation over stacked trajectory positions.

    Forward separation anchors neighborhoods at the first time step and
    stacks all later positions (repulsion); backward anchors at the last
    step and stacks all earlier positions (attraction).
    """
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    if k is None:
        k = default_neighbor_count(ds.d)
    if k < ds.d:
        raise DegenerateNeighborhoodError(
            f"need at least {ds.d} neighbors for a {ds.d}-dimensional covariance"
        )
    anchor = "t1" if direction == "forward" else "tT"
    step = _anchor_step(ds, anchor)
    nbrs = spatial_knn(ds, anchor, k)
    stacked = _stacked_positions(ds, step)
    values = np.empty(ds.n)
    chunk = max(1, 2_000_000 // (k * stacked.shape[1] + 1))
    for lo in range(0, ds.n, chunk):
        hi = min(lo + chunk, ds.n)
        diffs = stacked[nbrs[lo:hi]] - stacked[lo:hi, None, :]
        values[lo:hi] = _separation_values(diffs, ds.tau)
    return ScalarField(
        values=values, kind="particle-separation", direction=direction, meta={"k": k}
    )


def diffusion_separation(
    ds: TrajectoryDataset,
    E: DiffusionEmbedding,
    s: float,
    direction: str = "forward",
    k: int | None = None,
) -> ScalarField:
    """Covariance separation over diffusion-embedding coordinates at scale s.

    Uses the same spatial neighborhoods as particle separation; only the
    stacked coordinates change.
    """
    if E.n != ds.n:
        raise ValueError("embedding and dataset sizes differ")
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    if k is None:
        k = default_neighbor_count(ds.d)
    if k < ds.d:
        raise DegenerateNeighborhoodError(
            f"need at least {ds.d} neighbors for a {ds.d}-dimensional covariance"
        )
    anchor = "t1" if direction == "forward" else "tT"
    nbrs = spatial_knn(ds, anchor, k)
    phi = embedding_vectors(E, s)
    values = np.empty(ds.n)
    chunk = max(1, 2_000_000 // (k * phi.shape[1] + 1))
    for lo in range(0, ds.n, chunk):
        hi = min(lo + chunk, ds.n)
        diffs = phi[nbrs[lo:hi]] - phi[lo:hi, None, :]
        values[lo:hi] = _separation_values(diffs, ds.tau)
    return ScalarField(
        values=values,
        kind="diffusion-separation",
        direction=direction,
        scale=float(s),
        meta={"k": k},
    )


@dataclass(frozen=True)
class FtleGrid:
    """FTLE values on a regular seed grid, with the grid axes attached."""

    values: np.ndarray
    axes: tuple[np.ndarray, ...]
    t1: float
    tau: float


def grid_ftle(
    flow,
    resolution: tuple[int, ...],
    t1: float | None = None,
    tau: float | None = None,
    domain: tuple[tuple[float, float], ...] | None = None,
    time_averaged: bool = False,
    steps: int = 2,
    substeps: int = 4,
) -> FtleGrid:
    """Traditional finite-difference FTLE of a flow map on a regular grid.

    ``flow`` is either a FlowSpec or a callable ``fn(x, elapsed) -> x'``
    evaluating a flow map directly. With ``time_averaged`` the flow-map range
    stacks positions at every saved step after the first (time-major), the
    time-averaged analogue of the plain FTLE.

    The result is (1/tau) * log of the largest singular value of the flow-map
    Jacobian, approximated by central differences on the grid (one-sided at
    the boundary).
    """
    if isinstance(flow, FlowSpec):
        if t1 is None:
            t1 = flow.t1
        if tau is None:
            tau = flow.tau
        if domain is None:
            domain = flow.domain
        if time_averaged and steps == 2:
            steps = flow.T
    else:
        if tau is None or domain is None:
            raise ValueError("callable flows need explicit tau and domain")
        if t1 is None:
            t1 = 0.0

    axes = tuple(np.linspace(lo, hi, r) for (lo, hi), r in zip(domain, resolution))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    d = pts.shape[1]

    save_times = t1 + np.linspace(0.0, tau, steps)
    if isinstance(flow, FlowSpec):
        if flow.flow_id in FLOW_MAP_FLOWS:
            frames = [evaluate_flow_map(flow, pts, t - t1) for t in save_times[1:]]
        else:
            dt_max = (tau / (steps - 1)) / substeps
            frames = []
            x = pts
            for a, b in zip(save_times[:-1], save_times[1:]):
                x = rk4_advect(flow, x, a, b, dt_max)
                frames.append(x)
    else:
        frames = [flow(pts, t - t1) for t in save_times[1:]]

    if not time_averaged:
        frames = frames[-1:]
    mapped = np.concatenate(frames, axis=1)  # (n, steps_used * d), time-major
    out_dim = mapped.shape[1]
    grids = mapped.reshape(*resolution, out_dim)

    spacing = [ax[1] - ax[0] for ax in axes]
    jac = np.empty(resolution + (out_dim, d))
    for axis in range(d):
        jac[..., axis] = np.gradient(grids, spacing[axis], axis=axis)
    cg = np.einsum("...od,...oe->...de", jac, jac)
    lam = np.maximum(np.linalg.eigvalsh(cg)[..., -1], _TINY)
    values = np.log(np.sqrt(lam)) / tau
    return FtleGrid(values=values, axes=axes, t1=float(t1), tau=float(tau))


def knn_log_density(ds: TrajectoryDataset, time_index: int, k: int = 27) -> ScalarField:
    """Log of the summed inverse distances to the k nearest particles at one time.

    Coincident particles are floored at distance 1e-12.
    """
    if not (0 < k < ds.n):
        raise ValueError(f"k must be in (0, {ds.n})")
    pts = ds.positions[:, time_index, :]
    tree = cKDTree(pts)
    dists, idx = tree.query(pts, k=k + 1)
    rows = np.arange(ds.n)[:, None]
    mask = idx != rows  # drop self wherever it was returned
    inv = np.zeros(ds.n)
    for i in range(ds.n):
        dd = dists[i][mask[i]][:k]
        inv[i] = (1.0 / np.maximum(dd, 1e-12)).sum()
    return ScalarField(
        values=np.log(inv), kind="density", meta={"k": k, "time_index": int(time_index)}
    )


def opacity_map(field: ScalarField, a: float = 1.0, invert: bool = False) -> ScalarField:
    """Min-max rescale to [0, 1] and raise to the exponent a; optionally invert.

    A constant input field maps to all zeros with a warning.
    """
    if a <= 0:
        raise ValueError("opacity exponent must be positive")
    v = field.values
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        warnings.warn("constant field: opacity map is all zeros")
        out = np.zeros_like(v)
    else:
        out = ((v - lo) / (hi - lo)) ** a
        if invert:
            out = 1.0 - out
    return ScalarField(
        values=out,
        kind="opacity",
        direction=field.direction,
        scale=field.scale,
        sources=field.sources,
        meta={"exponent": a, "invert": bool(invert), "from": field.kind},
    )
