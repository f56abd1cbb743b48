"""Numba kernels for the distance-heavy inner loops.

Every kernel is deterministic for a fixed input regardless of thread count:
parallel loops assign each output cell to exactly one iteration, and no
cross-iteration reductions occur. The SGD layout kernel is single-threaded
by design (edge updates are order-dependent).
"""

import numba
import numpy as np


@numba.njit(parallel=True, cache=True)
def knn_brute(X, k):
    """Exact k nearest neighbours (excluding self) by full scan per row.

    Returns (indices, distances); distances ascending, ties by lower index.
    """
    n, d = X.shape
    idx = np.empty((n, k), dtype=np.int64)
    dst = np.empty((n, k), dtype=np.float64)
    for i in numba.prange(n):
        row = np.empty(n, dtype=np.float64)
        for j in range(n):
            s = 0.0
            for t in range(d):
                diff = X[i, t] - X[j, t]
                s += diff * diff
            row[j] = s
        row[i] = np.inf
        order = np.argsort(row, kind="mergesort")
        for m in range(k):
            idx[i, m] = order[m]
            dst[i, m] = np.sqrt(row[order[m]])
    return idx, dst


@numba.njit(parallel=True, cache=True)
def kth_neighbor_distance(X, k):
    """Distance to the k-th nearest neighbour counting the point itself as
    its own first neighbour (so k=1 yields zeros)."""
    n, d = X.shape
    out = np.empty(n, dtype=np.float64)
    for i in numba.prange(n):
        row = np.empty(n, dtype=np.float64)
        for j in range(n):
            s = 0.0
            for t in range(d):
                diff = X[i, t] - X[j, t]
                s += diff * diff
            row[j] = s
        srt = np.sort(row)
        out[i] = np.sqrt(srt[k - 1])
    return out


@numba.njit(cache=True)
def mst_mutual_reachability(X, core):
    """Prim's algorithm over the implied dense mutual-reachability graph.

    Edge weight is max(core_i, core_j, euclidean(i, j)); nothing is
    materialised, each frontier scan recomputes distances. Returns an
    (n-1, 3) array of [u, v, weight] in discovery order.
    """
    n, d = X.shape
    in_tree = np.zeros(n, dtype=np.bool_)
    best_dist = np.full(n, np.inf)
    best_from = np.zeros(n, dtype=np.int64)
    edges = np.empty((n - 1, 3), dtype=np.float64)
    current = 0
    in_tree[0] = True
    for it in range(n - 1):
        # relax frontier against the newly added vertex
        for j in range(n):
            if in_tree[j]:
                continue
            s = 0.0
            for t in range(d):
                diff = X[current, t] - X[j, t]
                s += diff * diff
            w = np.sqrt(s)
            if core[current] > w:
                w = core[current]
            if core[j] > w:
                w = core[j]
            if w < best_dist[j]:
                best_dist[j] = w
                best_from[j] = current
        nxt = -1
        nxt_dist = np.inf
        for j in range(n):
            if not in_tree[j] and best_dist[j] < nxt_dist:
                nxt_dist = best_dist[j]
                nxt = j
        edges[it, 0] = best_from[nxt]
        edges[it, 1] = nxt
        edges[it, 2] = nxt_dist
        in_tree[nxt] = True
        current = nxt
    return edges


@numba.njit(cache=True)
def mst_from_dense(D):
    """Prim's algorithm on an explicit dense weight matrix."""
    n = D.shape[0]
    in_tree = np.zeros(n, dtype=np.bool_)
    best_dist = np.full(n, np.inf)
    best_from = np.zeros(n, dtype=np.int64)
    edges = np.empty((n - 1, 3), dtype=np.float64)
    current = 0
    in_tree[0] = True
    for it in range(n - 1):
        for j in range(n):
            if in_tree[j]:
                continue
            w = D[current, j]
            if w < best_dist[j]:
                best_dist[j] = w
                best_from[j] = current
        nxt = -1
        nxt_dist = np.inf
        for j in range(n):
            if not in_tree[j] and best_dist[j] < nxt_dist:
                nxt_dist = best_dist[j]
                nxt = j
        edges[it, 0] = best_from[nxt]
        edges[it, 1] = nxt
        edges[it, 2] = nxt_dist
        in_tree[nxt] = True
        current = nxt
    return edges


@numba.njit(cache=True)
def pairwise_dists(A, B):
    n, d = A.shape
    m = B.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(d):
                diff = A[i, t] - B[j, t]
                s += diff * diff
            out[i, j] = np.sqrt(s)
    return out


@numba.njit(cache=True)
def min_cross_mutual_reachability(A, B, apts_a, apts_b, mask_a, mask_b):
    """Minimum of max(apts_a[i], apts_b[j], dist) over masked cross pairs."""
    best = np.inf
    d = A.shape[1]
    for i in range(A.shape[0]):
        if not mask_a[i]:
            continue
        for j in range(B.shape[0]):
            if not mask_b[j]:
                continue
            s = 0.0
            for t in range(d):
                diff = A[i, t] - B[j, t]
                s += diff * diff
            w = np.sqrt(s)
            if apts_a[i] > w:
                w = apts_a[i]
            if apts_b[j] > w:
                w = apts_b[j]
            if w < best:
                best = w
    return best


# --- layout SGD --------------------------------------------------------------

@numba.njit(inline="always")
def _clip4(x):
    if x > 4.0:
        return 4.0
    if x < -4.0:
        return -4.0
    return x


@numba.njit(inline="always")
def _xorshift(state):
    # xorshift64*; state is a length-1 int64 array
    x = np.uint64(state[0])
    x ^= x << np.uint64(13)
    x ^= x >> np.uint64(7)
    x ^= x << np.uint64(17)
    state[0] = np.int64(x)
    return np.uint64(x) * np.uint64(2685821657736338717)


@numba.njit(cache=True)
def optimize_layout(
    embedding,
    head,
    tail,
    n_epochs,
    epochs_per_sample,
    a,
    b,
    rng_seed,
    gamma,
    negative_sample_rate,
    initial_lr,
):
    """Stochastic gradient layout over graph edges.

    Attraction follows the fitted curve 1/(1 + a x^(2b)); each edge visit adds
    negative_sample_rate uniformly sampled repulsions. Per-component gradients
    are clipped to [-4, 4]; the learning rate decays linearly to zero.
    Single-threaded: results depend only on (inputs, rng_seed).
    """
    n = embedding.shape[0]
    dim = embedding.shape[1]
    n_edges = epochs_per_sample.shape[0]
    epochs_per_negative_sample = epochs_per_sample / negative_sample_rate
    epoch_of_next_sample = epochs_per_sample.copy()
    epoch_of_next_negative_sample = epochs_per_negative_sample.copy()
    state = np.empty(1, dtype=np.int64)
    state[0] = rng_seed if rng_seed != 0 else 42
    for epoch in range(n_epochs):
        alpha = initial_lr * (1.0 - epoch / n_epochs)
        for e in range(n_edges):
            if epoch_of_next_sample[e] > epoch:
                continue
            i = head[e]
            j = tail[e]
            dist_sq = 0.0
            for t in range(dim):
                diff = embedding[i, t] - embedding[j, t]
                dist_sq += diff * diff
            if dist_sq > 0.0:
                coeff = -2.0 * a * b * dist_sq ** (b - 1.0)
                coeff /= a * dist_sq**b + 1.0
            else:
                coeff = 0.0
            for t in range(dim):
                g = _clip4(coeff * (embedding[i, t] - embedding[j, t]))
                embedding[i, t] += g * alpha
                embedding[j, t] -= g * alpha
            epoch_of_next_sample[e] += epochs_per_sample[e]
            n_neg = int(
                (epoch - epoch_of_next_negative_sample[e])
                / epochs_per_negative_sample[e]
            )
            for _ in range(n_neg):
                k = int(_xorshift(state) % np.uint64(n))
                if k == i:
                    continue
                dist_sq = 0.0
                for t in range(dim):
                    diff = embedding[i, t] - embedding[k, t]
                    dist_sq += diff * diff
                if dist_sq > 0.0:
                    coeff = 2.0 * gamma * b
                    coeff /= (0.001 + dist_sq) * (a * dist_sq**b + 1.0)
                    for t in range(dim):
                        g = _clip4(coeff * (embedding[i, t] - embedding[k, t]))
                        embedding[i, t] += g * alpha
                else:
                    for t in range(dim):
                        embedding[i, t] += 4.0 * alpha
            epoch_of_next_negative_sample[e] += (
                n_neg * epochs_per_negative_sample[e]
            )
    return embedding
