"""Density-Based Clustering Validation (DBCV) over a point labelling.

Per cluster, the all-points core distance is an inverse-power mean of
within-cluster distances; cluster sparseness (DSC) is the largest internal
edge of the cluster's mutual-reachability MST, and pairwise separation
(DSPC) is the smallest mutual-reachability distance between two clusters'
internal MST nodes. Cluster validity is (separation - sparseness) over the
larger of the two, and the overall index weights validities by cluster
share of ALL points, noise included.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import SizeOne, UndefinedDbcv

log = logging.getLogger(__name__)

ZERO_DIST = 1e-12  # coincident points are treated as this far apart


@dataclass
class ClusterValidity:
    cluster_id: int
    size: int
    validity: float
    dsc: float
    min_dspc: float


@dataclass
class DbcvReport:
    overall: float
    per_cluster: list[ClusterValidity]
    n_points: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "overall": self.overall,
                "n_points": self.n_points,
                "per_cluster": [
                    {
                        "id": c.cluster_id,
                        "size": c.size,
                        "validity": c.validity,
                        "dsc": c.dsc,
                        "min_dspc": c.min_dspc,
                    }
                    for c in self.per_cluster
                ],
            },
            indent=2,
        )


def apts_core_distance(cluster_points, d: int | None = None) -> np.ndarray:
    """All-points core distance within one cluster.

    For point x in a cluster of size m:
    ( sum_{y != x} (1/dist(x, y))^d / (m - 1) )^(-1/d), with d the
    dimensionality. Coincident points count as ZERO_DIST apart (warned).
    """
    X = np.ascontiguousarray(cluster_points, dtype=np.float64)
    m = X.shape[0]
    if m < 2:
        raise SizeOne("all-points core distance needs at least 2 points")
    if d is None:
        d = X.shape[1]
    D = _kernels.pairwise_dists(X, X)
    zeros = (D <= 0.0).sum() - m  # off-diagonal coincidences
    if zeros > 0:
        warnings.warn(f"{zeros // 2} coincident point pair(s); clamped to {ZERO_DIST}")
    np.fill_diagonal(D, np.inf)
    D = np.maximum(D, ZERO_DIST)
    inv_pow = (1.0 / D) ** d
    np.fill_diagonal(inv_pow, 0.0)
    mean = inv_pow.sum(axis=1) / (m - 1)
    return mean ** (-1.0 / d)


def _mr_matrix(X, apts) -> np.ndarray:
    D = _kernels.pairwise_dists(X, X)
    np.maximum(D, apts[:, None], out=D)
    np.maximum(D, apts[None, :], out=D)
    np.fill_diagonal(D, 0.0)
    return D


def _mst_profile(X, apts):
    """MST over mutual reachability; returns (edges, internal_node_mask)."""
    mr = _mr_matrix(X, apts)
    edges = _kernels.mst_from_dense(mr)
    degree = np.zeros(X.shape[0], dtype=np.int64)
    for u, v, _ in edges:
        degree[int(u)] += 1
        degree[int(v)] += 1
    return edges, degree >= 2


def density_sparseness(cluster_points, apts) -> float:
    """DSC: the heaviest internal edge (both endpoints of MST degree >= 2)
    of the cluster's mutual-reachability MST; falls back to the heaviest
    edge when no internal edge exists (2-point clusters, star trees)."""
    X = np.ascontiguousarray(cluster_points, dtype=np.float64)
    edges, internal = _mst_profile(X, np.asarray(apts, dtype=np.float64))
    weights = [
        w for u, v, w in edges if internal[int(u)] and internal[int(v)]
    ]
    if not weights:
        weights = [w for _, _, w in edges]
    return float(max(weights))


def density_separation(cluster_i, cluster_j, apts_i, apts_j) -> float:
    """DSPC: minimum mutual-reachability distance between the internal MST
    nodes of the two clusters (all nodes when a cluster has none)."""
    Xi = np.ascontiguousarray(cluster_i, dtype=np.float64)
    Xj = np.ascontiguousarray(cluster_j, dtype=np.float64)
    ai = np.asarray(apts_i, dtype=np.float64)
    aj = np.asarray(apts_j, dtype=np.float64)
    _, mi = _mst_profile(Xi, ai)
    _, mj = _mst_profile(Xj, aj)
    if not mi.any():
        mi = np.ones(len(Xi), dtype=bool)
    if not mj.any():
        mj = np.ones(len(Xj), dtype=bool)
    return float(
        _kernels.min_cross_mutual_reachability(Xi, Xj, ai, aj, mi, mj)
    )


def dbcv(points, labels) -> DbcvReport:
    """Overall and per-cluster validity for a labelling of ``points``.

    Needs at least two clusters of size >= 2, otherwise UndefinedDbcv is
    raised (grid search records this as missing, not zero). Clusters of
    size 1 contribute validity 0.
    """
    X = np.ascontiguousarray(points, dtype=np.float64)
    arr = np.asarray(getattr(labels, "labels", labels), dtype=np.int64)
    if len(arr) != len(X):
        raise UndefinedDbcv(f"{len(arr)} labels for {len(X)} points")
    n_total = len(arr)
    ids = [int(c) for c in np.unique(arr[arr >= 0])]
    members = {c: np.flatnonzero(arr == c) for c in ids}
    valid = [c for c in ids if len(members[c]) >= 2]
    if len(valid) < 2:
        raise UndefinedDbcv(
            f"{len(valid)} cluster(s) of size >= 2; need at least 2"
        )

    profiles = {}
    for c in valid:
        Xc = X[members[c]]
        apts = apts_core_distance(Xc)
        edges, internal = _mst_profile(Xc, apts)
        weights = [w for u, v, w in edges if internal[int(u)] and internal[int(v)]]
        dsc = float(max(weights)) if weights else float(max(w for _, _, w in edges))
        mask = internal if internal.any() else np.ones(len(Xc), dtype=bool)
        profiles[c] = (Xc, apts, mask, dsc)

    min_dspc = {c: np.inf for c in valid}
    for a_i in range(len(valid)):
        for b_i in range(a_i + 1, len(valid)):
            ca, cb = valid[a_i], valid[b_i]
            Xa, aa, ma, _ = profiles[ca]
            Xb, ab, mb, _ = profiles[cb]
            sep = float(
                _kernels.min_cross_mutual_reachability(Xa, Xb, aa, ab, ma, mb)
            )
            min_dspc[ca] = min(min_dspc[ca], sep)
            min_dspc[cb] = min(min_dspc[cb], sep)

    per_cluster = []
    overall = 0.0
    for c in ids:
        size = len(members[c])
        if c in profiles:
            _, _, _, dsc = profiles[c]
            sep = min_dspc[c]
            denom = max(sep, dsc)
            validity = (sep - dsc) / denom if denom > 0 else 0.0
        else:
            validity, dsc, sep = 0.0, float("nan"), float("nan")
        per_cluster.append(ClusterValidity(c, size, validity, dsc, sep))
        overall += (size / n_total) * validity
    return DbcvReport(overall, per_cluster, n_total)
