import numpy as np
import pytest

from driftscope import (
    FlowSpec,
    LandmarkSet,
    TrajectoryDataset,
    build_diffusion_operator,
    build_landmark_kernel,
    cluster_embedding,
    compute_bandwidths,
    diffusion_distance,
    distance_field,
    integrate_flow,
    multi_source_field,
    similarity_neighborhood,
)
from driftscope.diffusion import embedding_vectors


def _embedding_for(ds, every=1, m=40):
    step = max(1, every)
    lm = LandmarkSet(indices=np.arange(0, ds.n, step), strategy="random", rng_seed=0)
    bw = compute_bandwidths(ds, lm)
    kern = build_landmark_kernel(ds, lm, bw)
    return build_diffusion_operator(kern, m=m)


@pytest.fixture(scope="module")
def gyre():
    ds = integrate_flow(
        FlowSpec("double-gyre", grid=(16, 10), tau=2 * np.pi, T=8, jitter=0.01)
    )
    return ds, _embedding_for(ds)


def test_neighborhood_radius_below_min_is_source_only(gyre):
    _, emb = gyre
    dist = np.array([diffusion_distance(emb, 5, j, 8.0) for j in range(emb.n)])
    tiny = 0.5 * dist[dist > 0].min()
    nb = similarity_neighborhood(emb, 5, 8.0, radius=tiny, max_count=50)
    assert nb.members.tolist() == [5]
    assert nb.distances.tolist() == [0.0]


def test_neighborhood_without_subsampling_keeps_all_candidates(gyre):
    _, emb = gyre
    nb = similarity_neighborhood(emb, 5, 8.0, radius=1e9, max_count=emb.n)
    assert nb.members.shape[0] == emb.n
    assert nb.members[0] == 5
    assert np.all(np.diff(nb.distances) >= 0)


def test_neighborhood_invariants(gyre):
    _, emb = gyre
    nb = similarity_neighborhood(emb, 3, 15.0, radius=0.8, max_count=40)
    assert nb.members[0] == 3 and nb.distances[0] == 0.0
    assert np.unique(nb.members).shape[0] == nb.members.shape[0]
    assert nb.distances.max() <= nb.radius


def test_neighborhood_monotone_in_radius(gyre):
    _, emb = gyre
    small = similarity_neighborhood(emb, 9, 12.0, radius=0.3, max_count=10**9)
    large = similarity_neighborhood(emb, 9, 12.0, radius=0.9, max_count=10**9)
    assert set(small.members.tolist()) <= set(large.members.tolist())


def test_neighborhood_monotone_in_scale(gyre):
    _, emb = gyre
    lo = similarity_neighborhood(emb, 9, 5.0, radius=0.5, max_count=10**9)
    hi = similarity_neighborhood(emb, 9, 25.0, radius=0.5, max_count=10**9)
    assert set(lo.members.tolist()) <= set(hi.members.tolist())


def test_fps_subsample_beats_random_subsets(gyre):
    _, emb = gyre
    s, cap = 10.0, 18
    phi = embedding_vectors(emb, s)
    dist = np.linalg.norm(phi - phi[2], axis=1)
    radius = float(np.quantile(dist, 0.5))  # about half the particles qualify
    nb = similarity_neighborhood(emb, 2, s, radius=radius, max_count=cap)
    assert nb.members.shape[0] == cap
    candidates = np.flatnonzero(dist <= radius)
    assert candidates.shape[0] > cap

    def min_pairwise(idx):
        pts = phi[idx]
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        return d[np.triu_indices(len(idx), k=1)].min()

    fps_quality = min_pairwise(nb.members)
    rng = np.random.default_rng(0)
    draws = [
        min_pairwise(rng.choice(candidates, size=cap, replace=False))
        for _ in range(20)
    ]
    assert fps_quality >= np.median(draws)


def test_multi_source_single_source_matches_distance_field(gyre):
    _, emb = gyre
    msf = multi_source_field(emb, [11], 9.0)
    f = distance_field(emb, [11], 9.0)
    assert np.allclose(msf.distances, f.values, atol=1e-12)
    assert np.all(msf.nearest == 11)


def test_multi_source_source_assigned_to_itself(gyre):
    _, emb = gyre
    msf = multi_source_field(emb, [4, 50], 9.0)
    assert msf.nearest[4] == 4 and msf.distances[4] == 0.0
    assert msf.nearest[50] == 50 and msf.distances[50] == 0.0


def test_multi_source_rigid_invariance():
    spec = FlowSpec("double-gyre", grid=(12, 8), tau=2 * np.pi, T=6, jitter=0.02)
    ds = integrate_flow(spec)
    moved = np.empty_like(ds.positions)
    for k, t in enumerate(ds.times):
        th = 0.5 * np.sin(2 * t) + 0.1 * t
        Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        moved[:, k, :] = ds.positions[:, k, :] @ Q.T + [t, -t]
    ds2 = TrajectoryDataset(times=ds.times, positions=moved)
    emb1, emb2 = _embedding_for(ds), _embedding_for(ds2)
    a = multi_source_field(emb1, [3, 40, 77], 20.0)
    b = multi_source_field(emb2, [3, 40, 77], 20.0)
    assert np.array_equal(a.nearest, b.nearest)
    assert np.allclose(a.distances, b.distances, rtol=1e-6, atol=1e-12)


def test_cluster_single_cluster_and_determinism(gyre):
    _, emb = gyre
    assert np.all(cluster_embedding(emb, 5.0, 1) == 0)
    l1 = cluster_embedding(emb, 30.0, 3, rng_seed=42)
    l2 = cluster_embedding(emb, 30.0, 3, rng_seed=42)
    assert np.array_equal(l1, l2)
    assert set(np.unique(l1)) <= {0, 1, 2}


def test_cluster_k_bounds(gyre):
    _, emb = gyre
    with pytest.raises(ValueError):
        cluster_embedding(emb, 5.0, emb.n + 1)
    with pytest.raises(ValueError):
        cluster_embedding(emb, 5.0, 0)


def test_cluster_recovers_duplicated_trajectory_groups():
    # three bundles of duplicated trajectories under bounded jitter, spaced
    # so the kernel graph stays one component while the groups remain crisp
    rng = np.random.default_rng(7)
    T, per = 5, 12
    times = np.linspace(0, 1, T)
    ang = np.pi / 2 + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
    anchors = (0.12 / np.sqrt(3)) * np.c_[np.cos(ang), np.sin(ang)]
    bundles = []
    for g in range(3):
        r = 0.04 * np.sqrt(rng.uniform(0, 1, per))
        th = rng.uniform(0, 2 * np.pi, per)
        off = np.c_[r * np.cos(th), r * np.sin(th)]
        bundles.append(anchors[g] + off[:, None, :] * np.ones((1, T, 1)))
    ds = TrajectoryDataset(times=times, positions=np.concatenate(bundles))
    emb = _embedding_for(ds, every=1, m=10)
    labels = cluster_embedding(emb, 30.0, 3, rng_seed=0)
    truth = np.repeat(np.arange(3), per)
    # exact recovery up to label permutation
    for g in range(3):
        assert np.unique(labels[truth == g]).shape[0] == 1
    assert np.unique(labels).shape[0] == 3
