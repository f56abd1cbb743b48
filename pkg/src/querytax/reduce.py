"""Manifold projection of embedding matrices (UMAP-style).

Three stages: an exact k-nearest-neighbour graph, a fuzzy neighbourhood
graph calibrated per point (rho = nearest distance, sigma solved so the
membership mass hits log2(k)) and symmetrised by probabilistic union, and
a stochastic gradient layout with negative sampling seeded from a spectral
embedding of the graph Laplacian. Deterministic for a fixed seed at any
thread count: parallel kernels write disjoint cells and the SGD is
single-threaded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph
import scipy.sparse.linalg
from scipy.optimize import curve_fit

from . import _kernels
from .errors import ConfigError, EmptyGraph, KTooLarge, SigmaSolveFailure

log = logging.getLogger(__name__)

SIGMA_TOL = 1e-5
SIGMA_MAX_ITER = 64

# least-squares fit of 1/(1 + a x^(2b)) for the default min_dist=0.1, spread=1
_AB_CACHE = {(0.1, 1.0): (1.5769434603113077, 0.8950608779109733)}


@dataclass(frozen=True)
class ReducerConfig:
    out_dims: int
    n_neighbors: int
    min_dist: float = 0.1
    n_epochs: int | None = None      # resolved by size: 500 if n <= 10_000 else 200
    seed: int = 42
    a: float | None = None           # fitted from min_dist when None
    b: float | None = None
    negative_sample_rate: int = 5
    initial_lr: float = 1.0

    def __post_init__(self):
        if self.out_dims < 1:
            raise ConfigError("out_dims must be positive")
        if self.n_neighbors < 2:
            raise ConfigError("n_neighbors must be at least 2")
        if self.min_dist < 0:
            raise ConfigError("min_dist must be non-negative")


@dataclass
class KnnGraph:
    indices: np.ndarray    # (n, k) int64
    distances: np.ndarray  # (n, k) float64, ascending per row

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def __len__(self):
        return self.indices.shape[0]


@dataclass
class ReducedMatrix:
    matrix: np.ndarray     # (n, out_dims) float32
    config: ReducerConfig


def fit_curve_params(min_dist: float, spread: float = 1.0) -> tuple[float, float]:
    """Fit a, b so 1/(1 + a x^(2b)) matches the target membership curve:
    1 for x <= min_dist, exp(-(x - min_dist)/spread) beyond."""
    key = (round(min_dist, 12), round(spread, 12))
    if key in _AB_CACHE:
        return _AB_CACHE[key]

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    xv = np.linspace(0, spread * 3, 300)
    yv = np.where(xv < min_dist, 1.0, np.exp(-(xv - min_dist) / spread))
    (a, b), _ = curve_fit(curve, xv, yv)
    _AB_CACHE[key] = (float(a), float(b))
    return float(a), float(b)


def knn_graph(embeddings, k: int, metric: str = "euclidean") -> KnnGraph:
    """Exact k nearest neighbours per point, excluding the point itself.

    Full O(n^2 d) scan; distances sorted ascending, ties toward lower index.
    """
    if metric != "euclidean":
        raise ConfigError(f"unsupported metric {metric!r}")
    X = np.ascontiguousarray(getattr(embeddings, "matrix", embeddings), dtype=np.float64)
    n = X.shape[0]
    if k >= n:
        raise KTooLarge(f"k={k} must be below n={n}")
    idx, dst = _kernels.knn_brute(X, k)
    return KnnGraph(idx, dst)


def solve_bandwidths(knn: KnnGraph) -> tuple[np.ndarray, np.ndarray]:
    """Per-point (rho, sigma): rho is the nearest-neighbour distance and
    sigma is bisected so sum_j exp(-max(0, d_ij - rho)/sigma) = log2(k)
    to within SIGMA_TOL in at most SIGMA_MAX_ITER iterations."""
    d = knn.distances
    n, k = d.shape
    target = np.log2(k)
    rho = d[:, 0].copy()
    sigma = np.empty(n)
    for i in range(n):
        adj = np.maximum(d[i] - rho[i], 0.0)
        if not np.isfinite(adj).all():
            raise SigmaSolveFailure(i)
        lo, hi = 0.0, 1.0
        for _ in range(SIGMA_MAX_ITER):
            if _mass(adj, hi) >= target:
                break
            hi *= 2.0
        mid = hi
        for _ in range(SIGMA_MAX_ITER):
            mid = (lo + hi) / 2.0
            m = _mass(adj, mid)
            if abs(m - target) < SIGMA_TOL:
                break
            if m > target:
                hi = mid
            else:
                lo = mid
        sigma[i] = max(mid, 1e-12)
    return rho, sigma


def _mass(adjusted_dists, sigma):
    if sigma <= 0.0:
        return float(np.sum(adjusted_dists <= 0.0))
    return float(np.exp(-adjusted_dists / sigma).sum())


def directed_weights(knn: KnnGraph) -> np.ndarray:
    """(n, k) membership strengths exp(-max(0, d_ij - rho_i)/sigma_i).

    Rows whose mass target log2(k) is unattainable (e.g. every neighbour
    equidistant makes the mass constant in sigma) are rescaled onto the
    constraint, so identical terms end up at log2(k)/k each.
    """
    rho, sigma = solve_bandwidths(knn)
    adj = np.maximum(knn.distances - rho[:, None], 0.0)
    weights = np.exp(-adj / sigma[:, None])
    target = np.log2(knn.k)
    row_mass = weights.sum(axis=1)
    off = np.abs(row_mass - target) >= SIGMA_TOL
    if off.any():
        weights[off] *= (target / row_mass[off])[:, None]
    return weights


def fuzzy_simplicial_set(knn: KnnGraph, k: int | None = None) -> scipy.sparse.csr_matrix:
    """Symmetric fuzzy neighbourhood graph.

    Probabilistic-union symmetrisation of the directed membership matrix:
    W = A + A^T - A*A^T (elementwise product).
    """
    if k is None:
        k = knn.k
    if k != knn.k:
        raise ConfigError(f"graph built with k={knn.k}, requested {k}")
    n = len(knn)
    weights = directed_weights(knn)
    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = knn.indices.ravel()
    A = scipy.sparse.coo_matrix(
        (weights.ravel(), (rows, cols)), shape=(n, n)
    ).tocsr()
    At = A.T.tocsr()
    W = A + At - A.multiply(At)
    W = W.tocsr()
    W.eliminate_zeros()
    return W


def _spectral_init(graph, dim: int, rng) -> np.ndarray:
    """Low eigenvectors of the normalised Laplacian, scaled to max-abs 10.

    Solved as the top of 2I - L (fast ARPACK mode). Multi-component graphs
    make L singular with clustered extremes, so they raise and the caller
    falls back to random init; ARPACK's v0 is pinned for determinism.
    """
    n = graph.shape[0]
    n_comp = scipy.sparse.csgraph.connected_components(
        graph, directed=False, return_labels=False
    )
    if n_comp > 1:
        raise ValueError(f"{n_comp} components")
    degree = np.asarray(graph.sum(axis=1)).ravel()
    if (degree <= 0).any():
        raise ValueError("isolated vertex")
    inv_sqrt = scipy.sparse.diags(1.0 / np.sqrt(degree))
    lap = scipy.sparse.identity(n) - inv_sqrt @ graph @ inv_sqrt
    flipped = 2.0 * scipy.sparse.identity(n) - lap
    k = dim + 1
    ncv = min(n - 1, max(2 * k + 1, int(np.sqrt(n))))
    vals, vecs = scipy.sparse.linalg.eigsh(
        flipped, k, which="LM", ncv=ncv, tol=1e-4,
        v0=np.ones(n), maxiter=2000,
    )
    order = np.argsort(2.0 - vals)[1:k]  # ascending Laplacian order, drop trivial
    coords = vecs[:, order]
    span = np.abs(coords).max()
    if span == 0 or not np.isfinite(span):
        raise ValueError("degenerate spectral embedding")
    coords = coords * (10.0 / span)
    coords = coords + rng.normal(scale=1e-4, size=coords.shape)
    return coords.astype(np.float32)


def layout(graph, config: ReducerConfig) -> ReducedMatrix:
    """Optimise point positions from the fuzzy graph.

    Spectral initialisation (uniform random in [-10, 10] per axis when the
    eigensolver fails), then edgewise SGD: attraction along graph edges,
    negative-sampled repulsion, linear learning-rate decay, gradients
    clipped to [-4, 4]. Bitwise deterministic under config.seed.
    """
    graph = scipy.sparse.csr_matrix(graph)
    n = graph.shape[0]
    if n == 0:
        raise EmptyGraph("layout needs at least one vertex")
    n_epochs = config.n_epochs or (500 if n <= 10_000 else 200)
    a, b = config.a, config.b
    if a is None or b is None:
        a, b = fit_curve_params(config.min_dist)
    rng = np.random.default_rng(config.seed)
    try:
        embedding = _spectral_init(graph, config.out_dims, rng)
    except Exception:  # ARPACK non-convergence, isolated vertices, tiny graphs
        log.debug("spectral init failed; falling back to uniform random")
        embedding = rng.uniform(-10.0, 10.0, (n, config.out_dims)).astype(np.float32)
    coo = graph.tocoo()
    weights = coo.data.copy()
    if weights.size:
        weights[weights < weights.max() / float(n_epochs)] = 0.0
        keep = weights > 0.0
        head = coo.row[keep].astype(np.int64)
        tail = coo.col[keep].astype(np.int64)
        kept = weights[keep]
        epochs_per_sample = kept.max() / kept
        sgd_seed = int(rng.integers(1, 2**62))
        embedding = np.ascontiguousarray(embedding, dtype=np.float32)
        _kernels.optimize_layout(
            embedding,
            head,
            tail,
            n_epochs,
            epochs_per_sample.astype(np.float64),
            float(a),
            float(b),
            sgd_seed,
            1.0,
            config.negative_sample_rate,
            float(config.initial_lr),
        )
    if not np.isfinite(embedding).all():
        raise ConfigError("layout produced non-finite coordinates")
    return ReducedMatrix(embedding, config)


def reduce(embeddings, config: ReducerConfig) -> ReducedMatrix:
    """knn_graph -> fuzzy_simplicial_set -> layout, with shape checks."""
    X = np.ascontiguousarray(getattr(embeddings, "matrix", embeddings), dtype=np.float64)
    if config.out_dims >= X.shape[1]:
        raise ConfigError(
            f"out_dims {config.out_dims} must be below input dim {X.shape[1]}"
        )
    knn = knn_graph(X, config.n_neighbors)
    graph = fuzzy_simplicial_set(knn)
    return layout(graph, config)
