"""Density-based hierarchical clustering with noise (HDBSCAN).

Pipeline: core distances -> mutual-reachability minimum spanning tree ->
single-linkage dendrogram -> condensed tree (pruned by minimum cluster
size, annotated with lambda = 1/distance) -> Excess-of-Mass selection of
the antichain of clusters maximising summed stability. Unselected points
are labelled -1 (noise).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyInput, ParamTooLarge, TooFewPoints

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterParams:
    min_cluster_size: int
    min_samples: int
    selection: str = "eom"

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be at least 2")
        if self.min_samples < 1:
            raise ValueError("min_samples must be at least 1")
        if self.selection != "eom":
            raise ValueError("only 'eom' selection is supported")
        if self.min_samples > self.min_cluster_size:
            log.warning(
                "min_samples %d exceeds min_cluster_size %d",
                self.min_samples,
                self.min_cluster_size,
            )


@dataclass
class CondensedTree:
    """Pruned cluster hierarchy.

    Cluster 0 is the root (born at lambda 0). ``point_cluster[p]`` is the
    cluster a point fell out of and ``point_lambda[p]`` the lambda at which
    it fell. ``size[c]`` counts subtree points at birth; stability of c is
    sum over its subtree points of min(lambda_p, lambda_death) - lambda_birth.
    """

    n_points: int
    min_cluster_size: int
    parent: list[int]           # parent[0] == -1
    lambda_birth: list[float]
    lambda_death: list[float]
    size: list[int]
    point_cluster: np.ndarray   # (n,) int64
    point_lambda: np.ndarray    # (n,) float64
    stability: list[float] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.parent)

    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_clusters)]
        for c, p in enumerate(self.parent):
            if p >= 0:
                out[p].append(c)
        return out

    def subtree_points(self, cluster: int) -> np.ndarray:
        """Indices of all points that fell out of ``cluster`` or a descendant."""
        kids = self.children()
        wanted = np.zeros(self.n_clusters, dtype=bool)
        stack = [cluster]
        while stack:
            c = stack.pop()
            wanted[c] = True
            stack.extend(kids[c])
        return np.flatnonzero(wanted[self.point_cluster])

    def to_json(self) -> str:
        nodes = [
            {
                "id": c,
                "parent": self.parent[c] if self.parent[c] >= 0 else None,
                "lambda_birth": self.lambda_birth[c],
                "lambda_death": self.lambda_death[c],
                "stability": self.stability[c],
                "size": self.size[c],
            }
            for c in range(self.n_clusters)
        ]
        return json.dumps({"nodes": nodes}, indent=2)


@dataclass
class ClusterLabels:
    """Final labelling: -1 is noise, clusters are 0..n_clusters-1 ordered by
    decreasing size then ascending birth lambda."""

    labels: np.ndarray          # (n,) int64
    n_clusters: int
    sizes: list[int]
    stabilities: list[float]


def core_distances(points, min_samples: int) -> np.ndarray:
    """Distance to the min_samples-th nearest neighbour, the point itself
    counting as its own first neighbour (min_samples=1 gives zeros)."""
    X = np.ascontiguousarray(points, dtype=np.float64)
    n = X.shape[0]
    if min_samples > n:
        raise ParamTooLarge(f"min_samples={min_samples} exceeds n={n}")
    if min_samples == 1:
        return np.zeros(n)
    return _kernels.kth_neighbor_distance(X, min_samples)


def mutual_reachability(i: int, j: int, dists, core) -> float:
    """max(core_i, core_j, d(i, j)) -- the metric the MST is built over."""
    return float(max(core[i], core[j], dists[i, j]))


def build_mst(points, params: ClusterParams) -> np.ndarray:
    """Minimum spanning tree over mutual-reachability distances.

    Dense Prim scan, O(n^2), oracle-exact. Returns (n-1, 3) rows [u, v, w].
    """
    X = np.ascontiguousarray(points, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise TooFewPoints(f"need at least 2 points, got {n}")
    core = core_distances(X, params.min_samples)
    return _kernels.mst_mutual_reachability(X, core)


def single_linkage(mst_edges: np.ndarray, n: int) -> np.ndarray:
    """Dendrogram from MST edges, scipy linkage layout [left, right, dist, size].

    Edges are processed in ascending (weight, u, v) order; merged components
    get ids n, n+1, ... in merge order.
    """
    edges = np.asarray(mst_edges, dtype=np.float64)
    order = np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))
    edges = edges[order]
    parent = np.arange(2 * n - 1, dtype=np.int64)
    size = np.ones(2 * n - 1, dtype=np.int64)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    out = np.empty((n - 1, 4), dtype=np.float64)
    nxt = n
    for i in range(n - 1):
        u = find(int(edges[i, 0]))
        v = find(int(edges[i, 1]))
        out[i] = (u, v, edges[i, 2], size[u] + size[v])
        parent[u] = nxt
        parent[v] = nxt
        size[nxt] = size[u] + size[v]
        nxt += 1
    return out


def _dendro_leaves(dendrogram: np.ndarray, node: int, n: int) -> list[int]:
    leaves = []
    stack = [node]
    while stack:
        x = stack.pop()
        if x < n:
            leaves.append(x)
        else:
            row = dendrogram[x - n]
            stack.append(int(row[0]))
            stack.append(int(row[1]))
    return leaves


def condense(mst_edges: np.ndarray, min_cluster_size: int) -> CondensedTree:
    """Condense the single-linkage dendrogram: descending from the root, a
    split where both sides reach min_cluster_size births two child clusters;
    a smaller side falls out of the current cluster at the split's lambda."""
    if min_cluster_size < 2:
        raise ValueError("min_cluster_size must be at least 2")
    n = len(mst_edges) + 1
    dendrogram = single_linkage(mst_edges, n)
    point_cluster = np.zeros(n, dtype=np.int64)
    point_lambda = np.zeros(n, dtype=np.float64)
    parent = [-1]
    lambda_birth = [0.0]
    lambda_death = [np.inf]
    size = [n]

    def node_size(x):
        return 1 if x < n else int(dendrogram[x - n, 3])

    stack = [(2 * n - 2, 0)]  # (dendrogram node, cluster id)
    while stack:
        node, cid = stack.pop()
        while True:
            row = dendrogram[node - n]
            left, right = int(row[0]), int(row[1])
            dist = row[2]
            lam = 1.0 / dist if dist > 0.0 else np.inf
            ls, rs = node_size(left), node_size(right)
            if ls >= min_cluster_size and rs >= min_cluster_size:
                lambda_death[cid] = lam
                for child in (left, right):
                    parent.append(cid)
                    lambda_birth.append(lam)
                    lambda_death.append(np.inf)
                    size.append(node_size(child))
                    stack.append((child, len(parent) - 1))
                break
            if ls >= min_cluster_size or rs >= min_cluster_size:
                keep, drop = (left, right) if ls >= min_cluster_size else (right, left)
                for p in _dendro_leaves(dendrogram, drop, n):
                    point_cluster[p] = cid
                    point_lambda[p] = lam
                node = keep
                continue
            # both sides below threshold: the cluster sheds everything here
            for p in _dendro_leaves(dendrogram, node, n):
                point_cluster[p] = cid
                point_lambda[p] = lam
            lambda_death[cid] = lam
            break

    tree = CondensedTree(
        n_points=n,
        min_cluster_size=min_cluster_size,
        parent=parent,
        lambda_birth=lambda_birth,
        lambda_death=lambda_death,
        size=size,
        point_cluster=point_cluster,
        point_lambda=point_lambda,
    )
    tree.stability = _stabilities(tree)
    return tree


def _stabilities(tree: CondensedTree) -> list[float]:
    stab = [0.0] * tree.n_clusters
    for p in range(tree.n_points):
        c = tree.point_cluster[p]
        lam = min(tree.point_lambda[p], tree.lambda_death[c])
        stab[c] += lam - tree.lambda_birth[c]
    for c in range(1, tree.n_clusters):
        par = tree.parent[c]
        stab[par] += tree.size[c] * (tree.lambda_birth[c] - tree.lambda_birth[par])
    return stab


def select_eom(tree: CondensedTree) -> ClusterLabels:
    """Pick the antichain of condensed-tree clusters with maximum summed
    stability (bottom-up dynamic programme; a parent wins ties against its
    children). Points outside every selected cluster's subtree are noise."""
    kids = tree.children()
    m = tree.n_clusters
    dp = list(tree.stability)
    take_self = [True] * m
    for c in range(m - 1, -1, -1):
        if not kids[c]:
            continue
        child_sum = sum(dp[k] for k in kids[c])
        if child_sum > tree.stability[c]:
            dp[c] = child_sum
            take_self[c] = False
    selected = []
    stack = [0]
    while stack:
        c = stack.pop()
        if take_self[c]:
            selected.append(c)
        else:
            stack.extend(kids[c])
    selected.sort(key=lambda c: (-tree.size[c], tree.lambda_birth[c], c))
    labels = np.full(tree.n_points, -1, dtype=np.int64)
    sizes = []
    stabilities = []
    for out_id, c in enumerate(selected):
        pts = tree.subtree_points(c)
        labels[pts] = out_id
        sizes.append(len(pts))
        stabilities.append(tree.stability[c])
    return ClusterLabels(labels, len(selected), sizes, stabilities)


def hdbscan(points, params: ClusterParams) -> tuple[ClusterLabels, CondensedTree]:
    mst = build_mst(points, params)
    tree = condense(mst, params.min_cluster_size)
    return select_eom(tree), tree


def cluster_metrics(labels) -> dict:
    """noise_fraction, n_clusters and median non-noise cluster size
    (mean-of-two convention; nan when there are no clusters)."""
    arr = np.asarray(getattr(labels, "labels", labels), dtype=np.int64)
    if arr.size == 0:
        raise EmptyInput("no labels")
    noise = float(np.mean(arr == -1))
    ids, counts = np.unique(arr[arr >= 0], return_counts=True)
    median = float(np.median(counts)) if len(ids) else float("nan")
    return {
        "noise_fraction": noise,
        "n_clusters": int(len(ids)),
        "median_cluster_size": median,
    }


# --- persistence ----------------------------------------------------------------

def save_labels_tsv(ids, labels, path) -> None:
    arr = np.asarray(getattr(labels, "labels", labels), dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id\tcluster\n")
        for id_, lab in zip(ids, arr):
            fh.write(f"{int(id_)}\t{int(lab)}\n")


def load_labels_tsv(path) -> tuple[np.ndarray, np.ndarray]:
    from .errors import ParseError

    ids, labs = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n")
        if header != "id\tcluster":
            raise ParseError(1, "expected header 'id\\tcluster'")
        for i, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(i, "expected 2 fields")
            ids.append(int(parts[0]))
            labs.append(int(parts[1]))
    return np.asarray(ids, dtype=np.int64), np.asarray(labs, dtype=np.int64)
