"""Hyperparameter grid sweep, cross-seed consistency, and config selection.

Each grid cell is a pure function of (embeddings, config, seed): reduce ->
cluster -> cluster metrics + validity index. Failures are captured into the
result row, never aborting a sweep. Reductions and k-NN graphs are memoised
per process keyed by content hash, which cannot change results because every
cached value is itself a pure function of its key.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterParams, cluster_metrics, hdbscan
from .errors import (
    AllSeedsFailed,
    ConfigError,
    KTooLarge,
    NoStableConfig,
    UndefinedDbcv,
)
from .reduce import ReducerConfig, fuzzy_simplicial_set, knn_graph, layout
from .validate import dbcv

log = logging.getLogger(__name__)

GRID_CSV_HEADER = (
    "config_id,umap_dims,umap_neighbors,min_cluster_size,min_samples,"
    "seed,dbcv,noise_fraction,n_clusters,median_cluster_size,wall_time_s"
)

DEFAULT_SEEDS = (0, 1, 2, 3, 4, 42)


@dataclass(frozen=True)
class GridSpec:
    dims_set: tuple = (5, 10, 15)
    neighbors_set: tuple = (10, 25, 50)
    mcs_set: tuple = (25, 50, 100, 200)
    min_samples_fractions: tuple = (0.2, 0.5, 1.0)
    base_seed: int = 42

    def __post_init__(self):
        if not all((self.dims_set, self.neighbors_set, self.mcs_set,
                    self.min_samples_fractions)):
            raise ConfigError("grid sets must be non-empty")


@dataclass(frozen=True)
class GridConfig:
    config_id: int
    umap_dims: int
    umap_neighbors: int
    min_cluster_size: int
    min_samples: int


@dataclass
class ConfigResult:
    config_id: int
    umap_dims: int
    umap_neighbors: int
    min_cluster_size: int
    min_samples: int
    seed: int
    dbcv: float | None = None
    noise_fraction: float | None = None
    n_clusters: int | None = None
    median_cluster_size: float | None = None
    wall_time_s: float = 0.0
    error: str | None = None


@dataclass
class StatSummary:
    min: float
    mean: float
    max: float
    std: float
    n: int


@dataclass
class ConsistencyReport:
    config_id: int
    config: GridConfig
    seeds: tuple
    stats: dict[str, StatSummary]
    per_seed: list[ConfigResult] = field(default_factory=list)


def min_samples_for(fraction: float, mcs: int) -> int:
    """Nearest integer (half rounds up), floored at 1."""
    return max(1, int(math.floor(fraction * mcs + 0.5)))


def enumerate_grid(spec: GridSpec) -> list[GridConfig]:
    """Lexicographic (dims, neighbors, mcs, fraction); config_id = position."""
    out = []
    cid = 0
    for dims in spec.dims_set:
        for neigh in spec.neighbors_set:
            for mcs in spec.mcs_set:
                for frac in spec.min_samples_fractions:
                    out.append(
                        GridConfig(cid, dims, neigh, mcs, min_samples_for(frac, mcs))
                    )
                    cid += 1
    return out


# --- per-process memoisation --------------------------------------------------

_KNN_CACHE: dict = {}
_REDUCE_CACHE: dict = {}


def _token(X: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(X).tobytes()).hexdigest()


def clear_caches() -> None:
    _KNN_CACHE.clear()
    _REDUCE_CACHE.clear()


def _cached_reduction(X, dims, neighbors, seed, min_dist=0.1, n_epochs=None):
    tok = _token(X)
    rkey = (tok, dims, neighbors, seed, min_dist, n_epochs)
    if rkey in _REDUCE_CACHE:
        return _REDUCE_CACHE[rkey]
    gkey = (tok, neighbors)
    if gkey in _KNN_CACHE:
        graph = _KNN_CACHE[gkey]
    else:
        knn = knn_graph(X, neighbors)
        graph = fuzzy_simplicial_set(knn)
        _KNN_CACHE[gkey] = graph
    config = ReducerConfig(
        out_dims=dims, n_neighbors=neighbors, min_dist=min_dist,
        n_epochs=n_epochs, seed=seed,
    )
    reduced = layout(graph, config).matrix
    _REDUCE_CACHE[rkey] = reduced
    return reduced


def run_config(embeddings, config: GridConfig, seed: int, *, min_dist=0.1,
               n_epochs=None) -> ConfigResult:
    """Execute one grid cell; any stage failure lands in the row, not a raise."""
    X = np.ascontiguousarray(getattr(embeddings, "matrix", embeddings))
    result = ConfigResult(
        config.config_id, config.umap_dims, config.umap_neighbors,
        config.min_cluster_size, config.min_samples, seed,
    )
    start = time.perf_counter()
    try:
        if config.umap_dims >= X.shape[1]:
            raise ConfigError("out_dims must be below input dim")
        reduced = _cached_reduction(
            X, config.umap_dims, config.umap_neighbors, seed, min_dist, n_epochs
        )
    except (KTooLarge, ConfigError) as e:
        result.error = f"ConfigSkipped: {e}"
        result.wall_time_s = time.perf_counter() - start
        return result
    try:
        params = ClusterParams(config.min_cluster_size, config.min_samples)
        labels, _ = hdbscan(reduced.astype(np.float64), params)
        metrics = cluster_metrics(labels)
        result.noise_fraction = metrics["noise_fraction"]
        result.n_clusters = metrics["n_clusters"]
        result.median_cluster_size = (
            None if math.isnan(metrics["median_cluster_size"])
            else metrics["median_cluster_size"]
        )
    except Exception as e:  # pathological corners must not kill the sweep
        result.error = f"{type(e).__name__}: {e}"
        result.wall_time_s = time.perf_counter() - start
        return result
    try:
        report = dbcv(reduced.astype(np.float64), labels)
        result.dbcv = report.overall
    except UndefinedDbcv:
        result.dbcv = None
    result.wall_time_s = time.perf_counter() - start
    return result


def _run_group(args):
    X, cells, seed, min_dist, n_epochs = args
    return [run_config(X, c, seed, min_dist=min_dist, n_epochs=n_epochs)
            for c in cells]


def grid_search(embeddings, spec: GridSpec, seed: int | None = None, *,
                threads: int = 1, min_dist=0.1, n_epochs=None) -> list[ConfigResult]:
    """Run every cell of the grid at a fixed seed.

    Cells sharing a (dims, neighbors) reduction are grouped so each worker
    reuses its cache. Output order and values depend only on (data, spec,
    seed), not on the worker count.
    """
    X = np.ascontiguousarray(getattr(embeddings, "matrix", embeddings))
    seed = spec.base_seed if seed is None else seed
    configs = enumerate_grid(spec)
    groups: dict[tuple, list[GridConfig]] = {}
    for c in configs:
        groups.setdefault((c.umap_dims, c.umap_neighbors), []).append(c)
    tasks = [(X, cells, seed, min_dist, n_epochs) for cells in groups.values()]
    if threads <= 1 or len(tasks) == 1:
        chunks = [_run_group(t) for t in tasks]
    else:
        # spawn: forking a process with live numba thread pools can deadlock
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(
            max_workers=min(threads, len(tasks)), mp_context=ctx
        ) as pool:
            chunks = list(pool.map(_run_group, tasks))
    results = [r for chunk in chunks for r in chunk]
    results.sort(key=lambda r: (r.config_id, r.seed))
    return results


def rank_top(results, k: int = 10, min_clusters: int = 10) -> list[ConfigResult]:
    """Best-k rows by validity among rows with at least min_clusters clusters;
    ties prefer lower noise, then lower config_id."""
    eligible = [
        r for r in results
        if r.dbcv is not None and r.n_clusters is not None
        and r.n_clusters >= min_clusters
    ]
    eligible.sort(key=lambda r: (-r.dbcv, r.noise_fraction, r.config_id))
    return eligible[:k]


def consistency(embeddings, config: GridConfig, seeds=DEFAULT_SEEDS, *,
                min_dist=0.1, n_epochs=None, threads: int = 1) -> ConsistencyReport:
    """Re-run one configuration across seeds; population statistics per metric."""
    seeds = tuple(seeds)
    if len(seeds) < 2:
        raise ConfigError("consistency needs at least 2 seeds")
    X = np.ascontiguousarray(getattr(embeddings, "matrix", embeddings))
    tasks = [(X, [config], s, min_dist, n_epochs) for s in seeds]
    if threads <= 1:
        rows = [_run_group(t)[0] for t in tasks]
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(
            max_workers=min(threads, len(tasks)), mp_context=ctx
        ) as pool:
            rows = [chunk[0] for chunk in pool.map(_run_group, tasks)]
    return summarize_consistency(config, seeds, rows)


def summarize_consistency(config: GridConfig, seeds, rows) -> ConsistencyReport:
    metric_of = {
        "dbcv": lambda r: r.dbcv,
        "noise": lambda r: r.noise_fraction,
        "n_clusters": lambda r: r.n_clusters,
    }
    stats = {}
    any_ok = False
    for name, get in metric_of.items():
        vals = [get(r) for r in rows if get(r) is not None]
        if vals:
            any_ok = True
            arr = np.asarray(vals, dtype=np.float64)
            stats[name] = StatSummary(
                float(arr.min()), float(arr.mean()), float(arr.max()),
                float(arr.std()), len(arr),  # population std
            )
        else:
            stats[name] = StatSummary(
                float("nan"), float("nan"), float("nan"), float("nan"), 0
            )
    if not any_ok:
        raise AllSeedsFailed(f"config {config.config_id}: no seed produced metrics")
    return ConsistencyReport(config.config_id, config, tuple(seeds), stats, list(rows))


def select_config(reports, stability_threshold: float = 0.05):
    """Among configs whose validity and noise stds are below the threshold,
    pick the one maximising mean_dbcv - mean_noise (ties: more clusters,
    then lower config_id). Returns (chosen report, rationale record)."""
    reports = list(reports)
    if not reports:
        raise NoStableConfig("no consistency reports supplied")
    entries = []
    for rep in reports:
        d, nz, nc = rep.stats["dbcv"], rep.stats["noise"], rep.stats["n_clusters"]
        stable = (
            d.n > 0 and nz.n > 0
            and d.std < stability_threshold and nz.std < stability_threshold
        )
        entries.append({
            "config_id": rep.config_id,
            "mean_dbcv": d.mean,
            "std_dbcv": d.std,
            "mean_noise": nz.mean,
            "std_noise": nz.std,
            "mean_n_clusters": nc.mean,
            "stable": stable,
            "score": d.mean - nz.mean if stable else None,
        })
    survivors = [e for e in entries if e["stable"]]
    if not survivors:
        raise NoStableConfig(
            f"no config with dbcv and noise std below {stability_threshold}"
        )
    survivors.sort(
        key=lambda e: (-e["score"], -e["mean_n_clusters"], e["config_id"])
    )
    chosen_id = survivors[0]["config_id"]
    chosen = next(r for r in reports if r.config_id == chosen_id)
    rationale = {
        "rule": "max(mean_dbcv - mean_noise) among configs with "
                f"std(dbcv) < {stability_threshold} and std(noise) < {stability_threshold}; "
                "ties: higher mean cluster count, then lower config_id",
        "stability_threshold": stability_threshold,
        "candidates": entries,
        "survivors": [e["config_id"] for e in survivors],
        "chosen": chosen_id,
    }
    return chosen, rationale


def select_seed(per_seed_dbcv: dict[int, float]) -> int:
    """Seed whose validity lies nearest the cross-seed median.

    Ties break away from the maximum-validity seeds whenever a non-maximum
    candidate exists (cherry-picking guard), then toward the lower seed.
    """
    if not per_seed_dbcv:
        raise ConfigError("no per-seed values")
    seeds = sorted(per_seed_dbcv)
    values = np.array([per_seed_dbcv[s] for s in seeds], dtype=np.float64)
    med = float(np.median(values))
    dist = np.abs(values - med)
    dmin = dist.min()
    candidates = [s for s, dd in zip(seeds, dist) if dd <= dmin + 1e-9]
    vmax = values.max()
    non_max = [s for s in candidates if per_seed_dbcv[s] < vmax - 1e-12]
    if non_max:
        candidates = non_max
    return min(candidates)


# --- CSV / JSON I/O ---------------------------------------------------------------

def _fmt(v):
    return "" if v is None else (repr(v) if isinstance(v, float) else str(v))


def write_grid_csv(results, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(GRID_CSV_HEADER + "\n")
        for r in results:
            fh.write(",".join(_fmt(v) for v in (
                r.config_id, r.umap_dims, r.umap_neighbors, r.min_cluster_size,
                r.min_samples, r.seed, r.dbcv, r.noise_fraction, r.n_clusters,
                r.median_cluster_size, round(r.wall_time_s, 6),
            )) + "\n")


def read_grid_csv(path) -> list[ConfigResult]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != GRID_CSV_HEADER.split(","):
            raise ConfigError(f"{path}: unexpected grid CSV header")
        for row in reader:
            out.append(ConfigResult(
                config_id=int(row["config_id"]),
                umap_dims=int(row["umap_dims"]),
                umap_neighbors=int(row["umap_neighbors"]),
                min_cluster_size=int(row["min_cluster_size"]),
                min_samples=int(row["min_samples"]),
                seed=int(row["seed"]),
                dbcv=float(row["dbcv"]) if row["dbcv"] else None,
                noise_fraction=(
                    float(row["noise_fraction"]) if row["noise_fraction"] else None
                ),
                n_clusters=int(row["n_clusters"]) if row["n_clusters"] else None,
                median_cluster_size=(
                    float(row["median_cluster_size"])
                    if row["median_cluster_size"] else None
                ),
                wall_time_s=float(row["wall_time_s"]) if row["wall_time_s"] else 0.0,
            ))
    return out


CONSISTENCY_CSV_HEADER = (
    "config_id,dbcv_min,dbcv_mean,dbcv_max,dbcv_std,"
    "noise_min,noise_mean,noise_max,noise_std,"
    "n_clusters_min,n_clusters_mean,n_clusters_max,n_clusters_std"
)


def write_consistency_csv(reports, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CONSISTENCY_CSV_HEADER + "\n")
        for rep in reports:
            cells = [str(rep.config_id)]
            for name in ("dbcv", "noise", "n_clusters"):
                s = rep.stats[name]
                cells += [repr(s.min), repr(s.mean), repr(s.max), repr(s.std)]
            fh.write(",".join(cells) + "\n")


def read_consistency_csv(path, per_seed_rows=None, n_seeds=len(DEFAULT_SEEDS)):
    """Rebuild ConsistencyReports from the stats CSV; per-seed run rows (grid
    CSV schema) are attached by config_id when supplied."""
    rows_by_config: dict[int, list[ConfigResult]] = {}
    for r in per_seed_rows or []:
        rows_by_config.setdefault(r.config_id, []).append(r)
    reports = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CONSISTENCY_CSV_HEADER.split(","):
            raise ConfigError(f"{path}: unexpected consistency CSV header")
        for row in reader:
            cid = int(row["config_id"])
            per_seed = sorted(rows_by_config.get(cid, []), key=lambda r: r.seed)
            stats = {}
            for name, col in (("dbcv", "dbcv"), ("noise", "noise"),
                              ("n_clusters", "n_clusters")):
                stats[name] = StatSummary(
                    float(row[f"{col}_min"]), float(row[f"{col}_mean"]),
                    float(row[f"{col}_max"]), float(row[f"{col}_std"]),
                    len(per_seed) or n_seeds,
                )
            config = None
            if per_seed:
                r0 = per_seed[0]
                config = GridConfig(cid, r0.umap_dims, r0.umap_neighbors,
                                    r0.min_cluster_size, r0.min_samples)
            reports.append(ConsistencyReport(
                cid, config, tuple(r.seed for r in per_seed), stats, per_seed
            ))
    return reports


def rationale_to_json(rationale: dict) -> str:
    return json.dumps(rationale, indent=2)
