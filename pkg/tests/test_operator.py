import io

import numpy as np
import pytest

from driftscope import (
    ConnectivityError,
    FlowSpec,
    FormatError,
    LandmarkSet,
    TrajectoryDataset,
    build_diffusion_operator,
    build_landmark_kernel,
    compute_bandwidths,
    diffusion_distance,
    distance_field,
    embedding,
    embedding_vectors,
    implied_row_sums,
    integrate_flow,
    load_embedding,
    normalized_diffusion_distance,
    write_embedding,
)


def dense_two_step_operator(K: np.ndarray, renormalize: bool = True):
    """Independent dense reconstruction of the implied operator from a kernel.

    Returns (W, stationary). Mirrors the documented normalization: optional
    density renormalization, column normalization, then row normalization of
    the symmetric product.
    """
    K = np.asarray(K, dtype=np.float64)
    if renormalize:
        K = K / K.sum(axis=1, keepdims=True) / K.sum(axis=0, keepdims=True)
    B = K / K.sum(axis=0, keepdims=True)
    d_r = B.sum(axis=1)
    W = (B @ B.T) / d_r[:, None]
    return W, d_r / d_r.sum()


@pytest.fixture(scope="module")
def small_instance():
    ds = integrate_flow(FlowSpec("double-gyre", grid=(15, 10), tau=2 * np.pi, T=8))
    lm = LandmarkSet(indices=np.arange(ds.n), strategy="random", rng_seed=0)
    bw = compute_bandwidths(ds, lm)
    kern = build_landmark_kernel(ds, lm, bw, threshold=0.0)
    emb = build_diffusion_operator(kern, m=ds.n)
    return ds, kern, emb


def test_implied_row_sums_are_one(small_instance):
    _, kern, _ = small_instance
    assert np.abs(implied_row_sums(kern) - 1.0).max() <= 1e-12


def test_leading_eigenpair_is_stochastic(small_instance):
    _, _, emb = small_instance
    assert emb.eigenvalues[0] == pytest.approx(1.0, abs=1e-10)
    lead = emb.eigenvectors[:, 0]
    assert np.all(lead > 0) or np.all(lead < 0)
    assert np.allclose(lead, lead[0], rtol=1e-8)


def test_spectrum_within_unit_interval(small_instance):
    _, _, emb = small_instance
    lam = emb.eigenvalues
    assert np.all(np.diff(lam) <= 1e-12)
    assert lam.min() >= -1e-10 and lam.max() <= 1 + 1e-10


def test_eigenvalues_match_dense_eigensolver(small_instance):
    _, kern, emb = small_instance
    W, _ = dense_two_step_operator(kern.matrix.toarray())
    dense_mu = np.sort(np.linalg.eigvals(W).real)[::-1]
    lib_mu = emb.eigenvalues**2
    assert np.abs(dense_mu[: emb.m] - lib_mu).max() <= 1e-8


def test_distances_match_dense_matrix_power_oracle(small_instance):
    # the stored eigen-expansion at even scale s must equal the
    # stationary-weighted distance between rows of the dense operator
    # taken to the power s/2 (one application = two conceptual steps)
    _, kern, emb = small_instance
    W, pi = dense_two_step_operator(kern.matrix.toarray())
    rng = np.random.default_rng(0)
    n = W.shape[0]
    for s in (2, 10, 50):
        Ws = np.linalg.matrix_power(W, s // 2)
        for _ in range(100):
            i, j = (int(v) for v in rng.integers(n, size=2))
            oracle = np.sqrt((((Ws[i] - Ws[j]) ** 2) / pi).sum())
            lib = diffusion_distance(emb, i, j, float(s))
            assert abs(oracle - lib) <= 1e-8 * max(oracle, 1e-30)


def test_stationary_matches_dense(small_instance):
    _, kern, emb = small_instance
    _, pi = dense_two_step_operator(kern.matrix.toarray())
    assert np.abs(emb.stationary - pi).max() <= 1e-12


def test_disconnected_kernel_raises_multi_component_error():
    # two clusters of landmarks with no cross similarity
    pts = np.vstack([np.c_[np.arange(8) * 0.1, np.zeros(8)],
                     np.c_[np.arange(8) * 0.1 + 500.0, np.zeros(8)]])
    pos = np.repeat(pts[:, None, :], 2, axis=1)
    ds = TrajectoryDataset(times=[0.0, 1.0], positions=pos)
    lm = LandmarkSet(indices=np.arange(16), strategy="random", rng_seed=0)
    bw = compute_bandwidths(ds, lm)
    kern = build_landmark_kernel(ds, lm, bw)
    with pytest.raises(ConnectivityError):
        build_diffusion_operator(kern)


def test_embedding_scale_zero_is_raw_eigenvectors(small_instance):
    _, _, emb = small_instance
    v = embedding(emb, 4, 0.0)
    assert np.allclose(v, emb.eigenvectors[4, 1:], atol=0)


def test_embedding_extreme_scale_underflows_gracefully(small_instance):
    _, _, emb = small_instance
    # scale at which even the largest nontrivial eigenvalue has underflowed
    lam1 = emb.eigenvalues[1]
    s = 750.0 / -np.log(lam1)
    v = embedding(emb, 4, s)
    assert np.isfinite(v).all()
    assert np.abs(v).max() == 0.0


def test_distance_equals_embedding_norm(small_instance):
    _, _, emb = small_instance
    rng = np.random.default_rng(1)
    for s in (0.0, 3.5, 40.0):
        i, j = (int(v) for v in rng.integers(emb.n, size=2))
        direct = np.linalg.norm(embedding(emb, i, s) - embedding(emb, j, s))
        assert diffusion_distance(emb, i, j, s) == pytest.approx(direct, abs=1e-12)


def test_distance_monotone_in_scale(small_instance):
    _, _, emb = small_instance
    rng = np.random.default_rng(2)
    scales = np.linspace(0, 200, 21)
    for _ in range(50):
        i, j = (int(v) for v in rng.integers(emb.n, size=2))
        vals = [diffusion_distance(emb, i, j, s) for s in scales]
        assert np.all(np.diff(vals) <= 1e-12)


def test_distance_triangle_inequality(small_instance):
    _, _, emb = small_instance
    rng = np.random.default_rng(3)
    for _ in range(100):
        i, j, k = (int(v) for v in rng.integers(emb.n, size=3))
        dij = diffusion_distance(emb, i, j, 5.0)
        assert dij <= (
            diffusion_distance(emb, i, k, 5.0) + diffusion_distance(emb, k, j, 5.0) + 1e-12
        )


def test_normalized_distance_range_and_zero(small_instance):
    _, _, emb = small_instance
    rng = np.random.default_rng(4)
    assert normalized_diffusion_distance(emb, 3, 3, 7.0) == 0.0
    for _ in range(50):
        i, j = (int(v) for v in rng.integers(emb.n, size=2))
        v = normalized_diffusion_distance(emb, i, j, 11.0)
        assert 0.0 <= v <= 2.0
    dead_scale = 750.0 / -np.log(emb.eigenvalues[1])
    with pytest.warns(UserWarning):
        assert normalized_diffusion_distance(emb, 1, 2, dead_scale) == 0.0


def test_distance_field_basics(small_instance):
    _, _, emb = small_instance
    f = distance_field(emb, [7], 5.0)
    assert f.values[7] == 0.0
    ref = np.array([diffusion_distance(emb, 7, j, 5.0) for j in range(emb.n)])
    assert np.allclose(f.values, ref, atol=1e-12)
    multi = distance_field(emb, [7, 31], 5.0)
    assert np.allclose(multi.values, np.minimum(ref, [diffusion_distance(emb, 31, j, 5.0) for j in range(emb.n)]), atol=1e-12)
    assert multi.sources == (7, 31)


def test_landmark_subset_consistency():
    # landmark path vs all-particle path agree on the coarse spectrum;
    # exact agreement holds when the landmark set is every particle
    ds = integrate_flow(FlowSpec("double-gyre", grid=(12, 8), tau=2 * np.pi, T=6))
    lm_all = LandmarkSet(indices=np.arange(ds.n), strategy="random", rng_seed=0)
    bw = compute_bandwidths(ds, lm_all)
    kern = build_landmark_kernel(ds, lm_all, bw, threshold=0.0)
    emb_a = build_diffusion_operator(kern, m=40)
    emb_b = build_diffusion_operator(kern, m=96)
    # retained prefix is independent of m
    assert np.allclose(emb_a.eigenvalues, emb_b.eigenvalues[:40], atol=1e-12)
    rng = np.random.default_rng(0)
    for _ in range(20):
        i, j = (int(v) for v in rng.integers(ds.n, size=2))
        a = diffusion_distance(emb_a, i, j, 30.0)
        b = diffusion_distance(emb_b, i, j, 30.0)
        assert a == pytest.approx(b, rel=1e-6, abs=1e-12)


def test_objectivity_of_kernel_and_distances():
    rng = np.random.default_rng(5)
    spec = FlowSpec(
        "double-gyre", grid=(12, 8), tau=2 * np.pi, T=6, jitter=0.01, jitter_seed=3
    )
    ds = integrate_flow(spec)
    moved = np.empty_like(ds.positions)
    for k, t in enumerate(ds.times):
        theta = 0.9 * np.sin(1.3 * t) + 0.4 * t
        Q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        b = np.array([2.0 * np.sin(t), 0.5 * t - 1.0])
        moved[:, k, :] = ds.positions[:, k, :] @ Q.T + b
    ds2 = TrajectoryDataset(times=ds.times, positions=moved)

    lm = LandmarkSet(indices=np.arange(ds.n), strategy="random", rng_seed=0)
    emb1 = build_diffusion_operator(
        build_landmark_kernel(ds, lm, compute_bandwidths(ds, lm))
    )
    emb2 = build_diffusion_operator(
        build_landmark_kernel(ds2, lm, compute_bandwidths(ds2, lm))
    )
    assert np.abs(emb1.eigenvalues - emb2.eigenvalues).max() <= 1e-6
    for _ in range(40):
        i, j = (int(v) for v in rng.integers(ds.n, size=2))
        for s in (2.0, 20.0):
            a = diffusion_distance(emb1, i, j, s)
            b = diffusion_distance(emb2, i, j, s)
            assert abs(a - b) <= 1e-6 * max(a, 1e-12)


def test_embedding_cache_round_trip(tmp_path, small_instance):
    _, _, emb = small_instance
    path = tmp_path / "emb.dgem"
    write_embedding(emb, path)
    loaded = load_embedding(path)
    assert loaded.n == emb.n and loaded.m == emb.m
    assert np.array_equal(loaded.eigenvalues, emb.eigenvalues)
    assert np.array_equal(loaded.stationary, emb.stationary)
    # eigenvectors are cached as float32
    assert np.allclose(loaded.eigenvectors, emb.eigenvectors, atol=1e-5)


def test_embedding_cache_bad_magic(tmp_path):
    path = tmp_path / "bad.dgem"
    path.write_bytes(b"XXXX" + b"\x00" * 32)
    with pytest.raises(FormatError):
        load_embedding(path)


def test_renormalization_off_still_stochastic(small_instance):
    _, kern, _ = small_instance
    emb = build_diffusion_operator(kern, m=20, renormalize=False)
    assert emb.eigenvalues[0] == pytest.approx(1.0, abs=1e-10)
    assert np.abs(implied_row_sums(kern, renormalize=False) - 1.0).max() <= 1e-12


def test_renormalization_order_after_still_stochastic(small_instance):
    _, kern, _ = small_instance
    emb = build_diffusion_operator(kern, m=20, renorm_order="after")
    assert emb.eigenvalues[0] == pytest.approx(1.0, abs=1e-10)
    sums = implied_row_sums(kern, renorm_order="after")
    assert np.abs(sums - 1.0).max() <= 1e-12
