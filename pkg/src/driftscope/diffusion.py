"""Diffusion geometry core: bandwidths, landmark kernel, operator, and distances.

The trajectory kernel compares a landmark trajectory i against a particle
trajectory j through a Gaussian of the time-averaged per-step squared
distances, each step scaled by the landmark's spatiotemporal bandwidth:

    K[j, i] = exp(-(1/tau) * sum_k dt_k * ||p^i_k - p^j_k||^2 / (alpha * sigma_{k,i})^2)

with trapezoidal quadrature weights dt_k summing to tau, so the exponent is
the time average of the normalized squared gap and is independent of how
finely the window is sampled.

The n x n_l kernel is turned into a row-stochastic two-step operator by
column-normalizing (B = K D_c^-1) and row-normalizing its symmetric product
(W = D_r^-1 B B^T, D_r the row sums of B). The eigenproblem reduces to the
n_l x n_l symmetric matrix (D_r^-1/2 B)^T (D_r^-1/2 B); eigenvectors are
lifted back to all particles and normalized against the stationary
distribution, so spectral diffusion distances equal stationary-weighted
distances between rows of powers of W.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.spatial import cKDTree

from .errors import ConnectivityError, CorruptionError, FormatError, ValidationError
from .fields import ScalarField
from .landmarks import LandmarkSet
from .trajectory import TrajectoryDataset, trapezoid_weights

ALPHA_SOFT_RANGE = (0.75, 1.75)
DEFAULT_THRESHOLD = 1e-6
DEFAULT_RADIUS_SCALE = 2.0
DENSE_EIG_CUTOFF = 2048


class SpatialIndex:
    """Lazy cache of per-time-step KD-trees over particle positions.

    Sharing one index across bandwidth and kernel builds avoids rebuilding
    trees when many landmark sets are evaluated on the same dataset.
    """

    def __init__(self, ds: TrajectoryDataset):
        self.ds = ds
        self._trees: dict[int, cKDTree] = {}

    def tree(self, k: int) -> cKDTree:
        tree = self._trees.get(k)
        if tree is None:
            tree = cKDTree(self.ds.positions[:, k, :])
            self._trees[k] = tree
        return tree


@dataclass(frozen=True)
class BandwidthTable:
    """Per-landmark, per-time-step kernel bandwidths.

    sigma[i, k] is the mean distance from landmark i to its n_neighbors
    nearest other landmarks at time step k; alpha is the global scale
    multiplier. Tying the bandwidth to the landmark distribution keeps the
    kernel reach at the scale the landmarks can resolve, so alpha stays in
    the same useful range regardless of how many particles each landmark
    represents.
    """

    sigma: np.ndarray
    n_neighbors: int
    alpha: float

    def __post_init__(self):
        sigma = np.ascontiguousarray(np.asarray(self.sigma, dtype=np.float64))
        if sigma.ndim != 2:
            raise ValidationError("sigma must have shape (n_l, T)")
        if not (sigma > 0).all():
            raise ValidationError("all bandwidths must be positive")
        if not (ALPHA_SOFT_RANGE[0] <= self.alpha <= ALPHA_SOFT_RANGE[1]):
            warnings.warn(
                f"bandwidth scale alpha={self.alpha} is outside the recommended "
                f"range {ALPHA_SOFT_RANGE}",
                stacklevel=3,
            )
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)


def compute_bandwidths(
    ds: TrajectoryDataset,
    lm: LandmarkSet,
    n_neighbors: int = 6,
    alpha: float = 1.0,
    index: SpatialIndex | None = None,
) -> BandwidthTable:
    """Mean distance from each landmark to its nearest other landmarks, per time step.

    Self-distances are excluded. Zero bandwidths (all neighbors coincident)
    are floored at 1e-12 times the domain diagonal, with a warning. The
    ``index`` cache is accepted for call-site symmetry with the kernel build
    but the trees here are over the (small) landmark subset.
    """
    if lm.n_l <= n_neighbors:
        raise ValueError("need more landmarks than bandwidth neighbors")
    lidx = lm.indices
    sigma = np.empty((lidx.shape[0], ds.T))
    for k in range(ds.T):
        pts = ds.positions[lidx, k, :]
        dists, _ = cKDTree(pts).query(pts, k=n_neighbors + 1)
        # first column is the landmark itself (distance 0)
        sigma[:, k] = dists[:, 1:].mean(axis=1)
    if (sigma == 0).any():
        floor = 1e-12 * max(ds.domain_diagonal(), 1.0)
        warnings.warn("duplicate positions produced zero bandwidths; flooring")
        sigma = np.maximum(sigma, floor)
    return BandwidthTable(sigma=sigma, n_neighbors=n_neighbors, alpha=alpha)


@dataclass(frozen=True)
class SparseKernel:
    """Sparse n x n_l trajectory-similarity kernel with entries in (0, 1]."""

    matrix: scipy.sparse.csr_matrix
    threshold: float
    landmark_indices: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_l(self) -> int:
        return self.matrix.shape[1]


def build_landmark_kernel(
    ds: TrajectoryDataset,
    lm: LandmarkSet,
    bw: BandwidthTable,
    threshold: float = DEFAULT_THRESHOLD,
    index: SpatialIndex | None = None,
    radius_scale: float = DEFAULT_RADIUS_SCALE,
) -> SparseKernel:
    """Assemble the sparse landmark kernel.

    Candidate neighbors of each landmark are found from positions at the
    first time step only, within ``radius_scale`` times the radius at which
    a constant-gap trajectory pair falls below the sparsification threshold;
    the exponent is then accumulated over all time steps for those
    candidates. Pairs far apart at the first step but converging later can
    be missed, the first-step approximation the whole search is built on;
    ``radius_scale`` trades completeness against candidate-set size.
    Entries below the threshold are dropped.

    A particle the search leaves with no entry is re-checked exhaustively
    against every landmark; if even its best value falls below the
    threshold, that single best entry is kept anyway (with a warning) so the
    random walk stays defined for marginal particles such as strongly
    stretched boundary trajectories. A ConnectivityError is raised only for
    genuine isolation, where the best value underflows to zero.
    """
    if bw.sigma.shape[0] != lm.n_l or bw.sigma.shape[1] != ds.T:
        raise ValueError("bandwidth table does not match landmark set / dataset")
    if index is None:
        index = SpatialIndex(ds)
    n = ds.n
    alpha = bw.alpha
    pos = ds.positions
    tree1 = index.tree(0)

    if threshold > 0:
        radii = radius_scale * alpha * bw.sigma[:, 0] * np.sqrt(np.log(1.0 / threshold))
        candidate_lists = tree1.query_ball_point(pos[lm.indices, 0, :], radii)
    else:
        candidate_lists = None

    weights = trapezoid_weights(ds.times)  # sums to 1: exponent is a time average
    w_inv_sq = weights[None, :] / (alpha * bw.sigma) ** 2  # (n_l, T)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for c, p_idx in enumerate(lm.indices):
        cand = (
            np.asarray(candidate_lists[c], dtype=np.int64)
            if candidate_lists is not None
            else np.arange(n)
        )
        sq = ((pos[cand] - pos[p_idx]) ** 2).sum(axis=2)  # (n_cand, T)
        expo = sq @ w_inv_sq[c]
        val = np.exp(-expo)
        keep = val >= threshold if threshold > 0 else slice(None)
        rows.append(cand[keep])
        vals.append(val[keep])
        cols.append(np.full(rows[-1].shape[0], c, dtype=np.int64))

    covered = np.zeros(n, dtype=bool)
    for r in rows:
        covered[r] = True
    bridged = 0
    for p in np.flatnonzero(~covered):
        sq = ((pos[lm.indices] - pos[p]) ** 2).sum(axis=2)  # (n_l, T)
        val = np.exp(-(sq * w_inv_sq).sum(axis=1))
        keep = np.flatnonzero(val >= threshold) if threshold > 0 else np.arange(lm.n_l)
        if keep.shape[0] == 0 and val.max() > 0.0:
            keep = np.asarray([val.argmax()])
            bridged += 1
        rows.append(np.full(keep.shape[0], p, dtype=np.int64))
        cols.append(keep.astype(np.int64))
        vals.append(val[keep])
    if bridged:
        warnings.warn(
            f"{bridged} particle(s) fell below the kernel threshold against every "
            "landmark; kept their single best entry to keep the walk defined"
        )

    matrix = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, lm.n_l),
    ).tocsr()
    counts = np.diff(matrix.indptr)
    if (counts == 0).any():
        orphans = np.flatnonzero(counts == 0)
        raise ConnectivityError(
            f"{orphans.shape[0]} particle(s) are similar to no landmark "
            f"(first orphans: {orphans[:10].tolist()}); the kernel graph is disconnected",
            orphans=orphans,
        )
    return SparseKernel(matrix=matrix, threshold=threshold, landmark_indices=lm.indices)


@dataclass(frozen=True)
class DiffusionEmbedding:
    """Eigenpairs of the diffusion operator; the scale is applied lazily.

    eigenvalues are stored in descending order in [0, 1]; they are the square
    roots of the two-step operator's eigenvalues, so raising them to 2s
    reproduces s applications of that operator. eigenvectors are (n, m) with
    the leading constant mode in column 0, normalized against the stationary
    distribution. ``stationary`` holds the stationary weights used by the
    matrix-power identity for diffusion distances.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    stationary: np.ndarray

    def __post_init__(self):
        lam = np.ascontiguousarray(np.asarray(self.eigenvalues, dtype=np.float64))
        vec = np.ascontiguousarray(np.asarray(self.eigenvectors, dtype=np.float64))
        pi = np.ascontiguousarray(np.asarray(self.stationary, dtype=np.float64))
        if vec.ndim != 2 or lam.ndim != 1 or lam.shape[0] != vec.shape[1]:
            raise ValidationError("eigenvalue/eigenvector shapes are inconsistent")
        if pi.shape != (vec.shape[0],):
            raise ValidationError("stationary distribution length must be n")
        if lam.shape[0] and not abs(lam[0] - 1.0) <= 1e-10:
            raise ValidationError(f"leading eigenvalue must be 1, got {lam[0]}")
        if np.any(np.diff(lam) > 1e-12):
            raise ValidationError("eigenvalues must be non-increasing")
        if lam.shape[0] and (lam.min() < -1e-10 or lam.max() > 1.0 + 1e-10):
            raise ValidationError("eigenvalues must lie in [0, 1] up to round-off")
        for a in (lam, vec, pi):
            a.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenvectors", vec)
        object.__setattr__(self, "stationary", pi)

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def m(self) -> int:
        return self.eigenvalues.shape[0]


def _normalized_factor(kernel: SparseKernel, renormalize: bool, renorm_order: str):
    """Column-normalized kernel B and the row sums D_r of B.

    renormalize applies the density correction (divide each entry by the
    product of its row and column sums) either before the column
    normalization ("before", default) or after it ("after").
    """
    if renorm_order not in ("before", "after"):
        raise ValueError("renorm_order must be 'before' or 'after'")

    def _colnorm(mat):
        col = np.asarray(mat.sum(axis=0)).ravel()
        if (col == 0).any():
            raise ConnectivityError("kernel has empty landmark columns")
        return mat @ scipy.sparse.diags(1.0 / col)

    A = kernel.matrix.astype(np.float64)
    if renormalize and renorm_order == "before":
        row = np.asarray(A.sum(axis=1)).ravel()
        col = np.asarray(A.sum(axis=0)).ravel()
        A = scipy.sparse.diags(1.0 / row) @ A @ scipy.sparse.diags(1.0 / col)
    B = _colnorm(A)
    if renormalize and renorm_order == "after":
        row = np.asarray(B.sum(axis=1)).ravel()
        B = scipy.sparse.diags(1.0 / row) @ B
        B = _colnorm(B)  # restore unit column sums so the operator stays stochastic
    d_r = np.asarray(B.sum(axis=1)).ravel()
    if (d_r == 0).any():
        raise ConnectivityError("kernel has empty particle rows")
    return B.tocsr(), d_r


def implied_row_sums(
    kernel: SparseKernel, renormalize: bool = True, renorm_order: str = "before"
) -> np.ndarray:
    """Row sums of the implied n x n operator, computed without materializing it."""
    B, d_r = _normalized_factor(kernel, renormalize, renorm_order)
    # W 1 = D_r^-1 B (B^T 1)
    col = np.asarray(B.T @ np.ones(kernel.n)).ravel()
    return (B @ col) / d_r


def build_diffusion_operator(
    K_l: SparseKernel,
    m: int | None = None,
    renormalize: bool = True,
    renorm_order: str = "before",
) -> DiffusionEmbedding:
    """Eigendecompose the implied diffusion operator and lift to all particles.

    The reduced symmetric matrix (D_r^-1/2 B)^T (D_r^-1/2 B) shares its
    nonzero spectrum with the implied operator; its eigenvectors v lift to
    particle-space eigenvectors D_r^-1 B v. Stored eigenvalues are square
    roots of the reduced eigenvalues (clamped at zero). Raises
    ConnectivityError when the spectrum indicates multiple components.
    """
    n, n_l = K_l.n, K_l.n_l
    if m is None:
        m = min(n_l, 300)
    m = min(m, n_l)
    B, d_r = _normalized_factor(K_l, renormalize, renorm_order)
    inv_sqrt = 1.0 / np.sqrt(d_r)
    C = scipy.sparse.diags(inv_sqrt) @ B  # (n, n_l)

    if n_l <= DENSE_EIG_CUTOFF:
        M = (C.T @ C).toarray()
        M = 0.5 * (M + M.T)
        if m < n_l:
            mu, V = scipy.linalg.eigh(M, subset_by_index=[n_l - m, n_l - 1])
        else:
            mu, V = scipy.linalg.eigh(M)
        mu, V = mu[::-1], V[:, ::-1]
    else:
        if m >= n_l:
            raise ValueError("retained modes must be below n_l for the iterative solver")
        op = scipy.sparse.linalg.LinearOperator(
            (n_l, n_l), matvec=lambda x: C.T @ (C @ x), dtype=np.float64
        )
        v0 = np.random.default_rng(0).standard_normal(n_l)
        mu, V = scipy.sparse.linalg.eigsh(op, k=m, which="LA", v0=v0)
        order = np.argsort(mu)[::-1]
        mu, V = mu[order], V[:, order]

    mu = np.clip(mu, 0.0, None)
    if mu.shape[0] >= 2 and abs(mu[1] - 1.0) <= 1e-8:
        raise ConnectivityError(
            "second eigenvalue equals one: the kernel graph has multiple "
            "connected components, which diffusion distances cannot compare"
        )

    # Lift: u = D_r^-1 B v = D_r^-1/2 (C v); the C v columns have norm sqrt(mu),
    # so scaling by sqrt(sum(d_r)/mu) makes u orthonormal under the stationary
    # weights pi = d_r / sum(d_r).
    total = d_r.sum()
    CV = np.asarray(C @ V)
    U = CV * inv_sqrt[:, None]
    good = mu > 1e-14 * max(mu[0], 1.0)
    scale = np.where(good, np.sqrt(total / np.where(good, mu, 1.0)), 0.0)
    U *= scale[None, :]
    lam = np.sqrt(mu)
    lam[~good] = 0.0

    # canonical signs: largest-magnitude entry of each eigenvector is positive
    pick = np.abs(U).argmax(axis=0)
    signs = np.sign(U[pick, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U *= signs[None, :]
    return DiffusionEmbedding(eigenvalues=lam, eigenvectors=U, stationary=d_r / total)


def scale_weights(E: DiffusionEmbedding, s: float) -> np.ndarray:
    """Eigenvalue powers lambda^s for the nontrivial modes, clamped into [0, 1]."""
    if s < 0:
        raise ValueError("scale must be nonnegative")
    lam = np.clip(E.eigenvalues[1:], 0.0, 1.0)
    return lam**s


def embedding_vectors(E: DiffusionEmbedding, s: float, idx=None) -> np.ndarray:
    """Embedding coordinates lambda^s * u for the selected particles.

    The trivial constant mode is excluded; it contributes nothing to
    distances and would mask the norm used by the normalized variant.
    """
    w = scale_weights(E, s)
    vecs = E.eigenvectors[:, 1:] if idx is None else E.eigenvectors[idx, 1:]
    return vecs * w


def embedding(E: DiffusionEmbedding, i: int, s: float) -> np.ndarray:
    """Embedding vector of particle i at scale s."""
    return embedding_vectors(E, s, np.asarray([i]))[0]


def diffusion_distance(E: DiffusionEmbedding, i: int, j: int, s: float) -> float:
    """Euclidean distance between the two particles' embedding vectors."""
    w = scale_weights(E, s)
    diff = (E.eigenvectors[i, 1:] - E.eigenvectors[j, 1:]) * w
    return float(np.linalg.norm(diff))


def normalized_diffusion_distance(E: DiffusionEmbedding, i: int, j: int, s: float) -> float:
    """Squared diffusion distance divided by the summed squared embedding norms.

    Lies in [0, 2]; returns 0 (with a warning) when both embeddings have
    underflowed to zero at extreme scales.
    """
    w = scale_weights(E, s)
    a = E.eigenvectors[i, 1:] * w
    b = E.eigenvectors[j, 1:] * w
    denom = float(a @ a + b @ b)
    if denom == 0.0:
        warnings.warn("both embeddings are numerically zero; normalized distance set to 0")
        return 0.0
    diff = a - b
    return float(diff @ diff) / denom


def distances_from(E: DiffusionEmbedding, source: int, s: float) -> np.ndarray:
    """Diffusion distances from one source particle to every particle."""
    phi = embedding_vectors(E, s)
    diff = phi - phi[source]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def distance_field(E: DiffusionEmbedding, sources, s: float) -> ScalarField:
    """Per-particle minimum diffusion distance to a set of source particles."""
    sources = [int(v) for v in np.atleast_1d(sources)]
    if not sources:
        raise ValueError("sources must be nonempty")
    phi = embedding_vectors(E, s)
    best = np.full(E.n, np.inf)
    for src in sources:
        diff = phi - phi[src]
        np.minimum(best, np.sqrt(np.einsum("ij,ij->i", diff, diff)), out=best)
    return ScalarField(values=best, kind="distance", scale=float(s), sources=tuple(sources))


DGEM_MAGIC = b"DGEM"
DGEM_VERSION = 1
_DGEM_HEADER = struct.Struct("<4sIQI")


def write_embedding(E: DiffusionEmbedding, sink) -> None:
    """Write an embedding cache: eigenvalues/stationary as f64, eigenvectors as f32."""
    header = _DGEM_HEADER.pack(DGEM_MAGIC, DGEM_VERSION, E.n, E.m)
    chunks = [
        header,
        E.eigenvalues.astype("<f8").tobytes(),
        E.stationary.astype("<f8").tobytes(),
        E.eigenvectors.astype("<f4").tobytes(),
    ]
    if hasattr(sink, "write"):
        for c in chunks:
            sink.write(c)
    else:
        with open(sink, "wb") as fh:
            for c in chunks:
                fh.write(c)


def load_embedding(source) -> DiffusionEmbedding:
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if len(data) < _DGEM_HEADER.size:
        raise FormatError("file too short for a DGEM header")
    magic, version, n, m = _DGEM_HEADER.unpack_from(data, 0)
    if magic != DGEM_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DGEM_MAGIC!r}")
    if version != DGEM_VERSION:
        raise FormatError(f"unsupported DGEM version {version}")
    off = _DGEM_HEADER.size
    need = off + 8 * m + 8 * n + 4 * n * m
    if len(data) != need:
        raise CorruptionError("DGEM payload does not match header counts")
    lam = np.frombuffer(data, dtype="<f8", count=m, offset=off)
    off += 8 * m
    pi = np.frombuffer(data, dtype="<f8", count=n, offset=off)
    off += 8 * n
    vec = np.frombuffer(data, dtype="<f4", count=n * m, offset=off)
    lam = lam.astype(np.float64)
    # cached f32 eigenvectors can nudge the leading eigenvalue check; keep exact lam
    return DiffusionEmbedding(
        eigenvalues=lam,
        eigenvectors=vec.astype(np.float64).reshape(n, m),
        stationary=pi.astype(np.float64),
    )
