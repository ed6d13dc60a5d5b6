"""Session fixtures shared by the acceptance suite.

The heavyweight datasets and embeddings are built once per session; the
acceptance tests that assert runtime bounds receive the measured build
times alongside the artifacts.
"""

import time

import numpy as np
import pytest

from driftscope import (
    FlowSpec,
    LandmarkSet,
    TrajectoryDataset,
    build_diffusion_operator,
    build_landmark_kernel,
    compute_bandwidths,
    grid_ftle,
    integrate_flow,
    select_landmarks,
)

DG_GRID = (120, 60)
DG_TAU = 2 * np.pi


def dense_two_step_operator(K: np.ndarray, renormalize: bool = True):
    """Independent dense reconstruction of the implied diffusion operator.

    Used as the matrix-power oracle: density renormalization, column
    normalization, then row normalization of the symmetric product.
    Returns (W, stationary).
    """
    K = np.asarray(K, dtype=np.float64)
    if renormalize:
        K = K / K.sum(axis=1, keepdims=True) / K.sum(axis=0, keepdims=True)
    B = K / K.sum(axis=0, keepdims=True)
    d_r = B.sum(axis=1)
    W = (B @ B.T) / d_r[:, None]
    return W, d_r / d_r.sum()


def rigid_transform(ds: TrajectoryDataset, seed: int = 42) -> TrajectoryDataset:
    """Apply a smooth, time-varying rotation + translation to every frame."""
    moved = np.empty_like(ds.positions)
    for k, t in enumerate(ds.times):
        th = 0.8 * np.sin(1.7 * t + 0.3) + 0.25 * t
        Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        b = np.array([1.5 * np.sin(0.9 * t), 0.4 * t - 2.0])
        moved[:, k, :] = ds.positions[:, k, :] @ Q.T + b
    return TrajectoryDataset(times=ds.times, positions=moved)


@pytest.fixture(scope="session")
def dg100():
    """Double Gyre, 120x60 seeds, T=100 over one period (7200 particles)."""
    spec = FlowSpec("double-gyre", grid=DG_GRID, tau=DG_TAU, T=100, jitter=0.001)
    return integrate_flow(spec)


def build_dg_embedding(ds):
    """The Table configuration: 1000 temporally subsampled FPS landmarks."""
    lm = select_landmarks(ds, 1000, strategy="tfps", rng_seed=0, stride=5)
    bw = compute_bandwidths(ds, lm, alpha=1.0)
    kern = build_landmark_kernel(ds, lm, bw)
    emb = build_diffusion_operator(kern, m=300)
    return lm, kern, emb


@pytest.fixture(scope="session")
def dg100_embedding(dg100):
    """(landmarks, kernel, embedding, build_seconds) for the T=100 Double Gyre."""
    t0 = time.perf_counter()
    lm, kern, emb = build_dg_embedding(dg100)
    return lm, kern, emb, time.perf_counter() - t0


@pytest.fixture(scope="session")
def dg2_uniform():
    """Double Gyre endpoint convention (T=2) with its FTLE oracle grid."""
    spec = FlowSpec("double-gyre", grid=DG_GRID, tau=DG_TAU, T=2, jitter=0.001)
    ds = integrate_flow(spec)
    ftle = grid_ftle(FlowSpec("double-gyre", tau=DG_TAU, T=2), resolution=DG_GRID)
    return ds, ftle


@pytest.fixture(scope="session")
def dg2_nonuniform():
    """Seeds advected one period before the analysis window, plus that window's FTLE."""
    spec = FlowSpec(
        "double-gyre",
        grid=DG_GRID,
        t1=DG_TAU,
        tau=DG_TAU,
        T=2,
        seed_time=0.0,
        jitter=0.001,
    )
    ds = integrate_flow(spec)
    ftle = grid_ftle(
        FlowSpec("double-gyre", t1=DG_TAU, tau=DG_TAU, T=2), resolution=DG_GRID
    )
    return ds, ftle


@pytest.fixture(scope="session")
def four_centers_embedding():
    spec = FlowSpec("four-centers", grid=(56, 56), tau=10.0, T=500, jitter=0.001)
    ds = integrate_flow(spec)
    lm = select_landmarks(ds, 300, strategy="tfps", rng_seed=0, stride=5)
    bw = compute_bandwidths(ds, lm, alpha=1.0)
    emb = build_diffusion_operator(build_landmark_kernel(ds, lm, bw), m=300)
    return ds, emb


@pytest.fixture(scope="session")
def sine_ridge_embedding():
    spec = FlowSpec("sine-ridge", grid=(60, 120), tau=1.0, T=100, jitter=0.001)
    ds = integrate_flow(spec)
    lm = select_landmarks(ds, 800, strategy="tfps", rng_seed=0, stride=5)
    bw = compute_bandwidths(ds, lm, alpha=0.75)
    emb = build_diffusion_operator(build_landmark_kernel(ds, lm, bw), m=300)
    return ds, emb


@pytest.fixture(scope="session")
def dense_small():
    """Full-landmark, threshold-free instance small enough for dense oracles."""
    spec = FlowSpec("double-gyre", grid=(15, 10), tau=DG_TAU, T=8)
    ds = integrate_flow(spec)
    lm = LandmarkSet(indices=np.arange(ds.n), strategy="random", rng_seed=0)
    bw = compute_bandwidths(ds, lm)
    kern = build_landmark_kernel(ds, lm, bw, threshold=0.0)
    emb = build_diffusion_operator(kern, m=ds.n)
    return ds, kern, emb
