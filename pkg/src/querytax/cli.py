"""Subcommand front-end wiring the pipeline together.

Every command prints a JSON run manifest to stdout (inputs, effective
parameters, output hashes, elapsed time); logs go to stderr. A plain-text
``key = value`` config file supplies defaults that explicit flags override.
Exit codes: 0 all artifacts written, 1 module error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, classifier, cluster, corpus, interpret, sampling, search
from . import reduce as reduce_mod
from .errors import QuerytaxError

log = logging.getLogger("querytax")

STOCHASTIC = {"sample", "split", "train", "eval", "reduce", "grid", "interpret"}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_config_file(path) -> dict:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise QuerytaxError(f"{path}:{n}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags (flags parse into SUPPRESS,
    so only present keys override)."""
    params = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        file_values = _parse_config_file(cfg_path)
        for key, raw in file_values.items():
            if key not in defaults:
                raise QuerytaxError(f"unknown config key {key!r}")
            default = defaults[key]
            if default is _REQUIRED or default is None or isinstance(default, str):
                params[key] = raw
            elif isinstance(default, bool):
                params[key] = raw.lower() in ("1", "true", "yes")
            else:
                params[key] = type(default)(raw)
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        params[key] = value
    missing = [k for k, v in params.items() if v is _REQUIRED]
    if missing:
        raise QuerytaxError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return params


class _Required:
    def __repr__(self):
        return "<required>"


_REQUIRED = _Required()


def _int_list(text: str) -> tuple:
    return tuple(int(x) for x in str(text).split(",") if x != "")


def _float_list(text: str) -> tuple:
    return tuple(float(x) for x in str(text).split(",") if x != "")


def _write_ids(ids, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id\n")
        for i in ids:
            fh.write(f"{int(i)}\n")


def _read_ids(path) -> list[int]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "id":
        raise QuerytaxError(f"{path}: expected one-column id file with header 'id'")
    return [int(x) for x in lines[1:] if x]


def _rows_for_ids(emb: corpus.EmbeddingSet, ids) -> np.ndarray:
    index = {int(v): i for i, v in enumerate(emb.ids)}
    try:
        return np.array([index[int(i)] for i in ids], dtype=np.int64)
    except KeyError as e:
        raise QuerytaxError(f"id {e.args[0]} not present in embeddings") from None


def _gold_vector(labels: dict, ids) -> np.ndarray:
    try:
        return np.array(
            [labels[int(i)].label == corpus.GEOSPATIAL for i in ids], dtype=bool
        )
    except KeyError as e:
        raise QuerytaxError(f"id {e.args[0]} has no label") from None


# --- command implementations -----------------------------------------------------
# each returns (inputs, outputs, extras) as path lists / dict

def _cmd_ingest(p):
    queries = corpus.load_queries(p["queries"])
    emb = corpus.load_embeddings(p["embeddings"])
    labels = corpus.load_labels(p["labels"]) if p["labels"] else None
    aligned = corpus.align(queries, emb, labels)
    corpus.save_queries(aligned.queries, p["out_queries"])
    corpus.save_embeddings(aligned.embeddings, p["out_embeddings"])
    extras = {
        "n_queries_in": len(queries),
        "n_embeddings_in": len(emb),
        "n_aligned": len(aligned),
        "dropped": aligned.dropped,
        "dim": aligned.embeddings.dim,
    }
    inputs = [p["queries"], p["embeddings"]] + ([p["labels"]] if p["labels"] else [])
    return inputs, [p["out_queries"], p["out_embeddings"]], extras


def _cmd_sample(p):
    emb = corpus.load_embeddings(p["embeddings"])
    idx = sampling.kmeanspp_select(emb.matrix, p["k"], p["seed"])
    ids = emb.ids[idx]
    _write_ids(ids, p["out"])
    return [p["embeddings"]], [p["out"]], {"k": p["k"]}


def _cmd_votes(p):
    votes, abstained = sampling.load_votes(p["votes"])
    records = []
    hist: dict[int, int] = {}
    for id_, row in votes.items():
        label, positive = sampling.majority_vote(
            row, p["threshold"] if p["threshold"] > 0 else None
        )
        hist[positive] = hist.get(positive, 0) + 1
        records.append(corpus.LabelRecord(id_, label, "weak", positive))
    corpus.save_labels(records, p["out"])
    extras = {
        "rows": len(records),
        "abstained": len(abstained),
        "vote_histogram": {str(k): v for k, v in sorted(hist.items())},
    }
    return [p["votes"]], [p["out"]], extras


def _cmd_split(p):
    labels = corpus.load_labels(p["labels"])
    ordered_ids = sorted(labels)
    y = [labels[i].label == corpus.GEOSPATIAL for i in ordered_ids]
    spec = classifier.SplitSpec(p["train_n"], p["val_n"], p["test_n"], p["seed"])
    parts = classifier.stratified_split(y, spec)
    outs = []
    for name, part in zip(("train", "val", "test"), parts):
        path = f"{p['out_prefix']}.{name}.ids"
        _write_ids([ordered_ids[i] for i in part], path)
        outs.append(path)
    return [p["labels"]], outs, {
        name: len(part) for name, part in zip(("train", "val", "test"), parts)
    }


def _cmd_train(p):
    emb = corpus.load_embeddings(p["embeddings"])
    labels = corpus.load_labels(p["labels"])
    ids = _read_ids(p["ids"])
    rows = _rows_for_ids(emb, ids)
    y = _gold_vector(labels, ids)
    model = classifier.fit_logistic(
        emb.matrix[rows], y,
        epochs=p["epochs"], lr=p["lr"], batch=p["batch"], seed=p["seed"],
    )
    classifier.save_model(model, p["out"])
    loss, _, _ = classifier.logistic_loss_and_grad(
        model.weights, model.bias, emb.matrix[rows], y
    )
    return [p["embeddings"], p["labels"], p["ids"]], [p["out"]], {
        "train_n": len(ids), "final_loss": loss,
    }


def _cmd_eval(p):
    emb = corpus.load_embeddings(p["embeddings"])
    labels = corpus.load_labels(p["labels"])
    model = classifier.load_model(p["model"])
    ids = _read_ids(p["ids"])
    rows = _rows_for_ids(emb, ids)
    gold = _gold_vector(labels, ids)
    probs = model.predict_proba(emb.matrix[rows])
    pred = probs >= 0.5
    metrics = classifier.evaluate(pred, gold)
    cis = classifier.bootstrap_ci(
        pred, gold, resamples=p["resamples"], level=p["level"], seed=p["seed"]
    )
    doc = metrics.to_dict()
    doc["ci"] = {
        name: {"ci_lower": ci.lower, "ci_upper": ci.upper,
               "resamples": ci.resamples, "level": ci.level, "skipped": ci.skipped}
        for name, ci in cis.items()
    }
    Path(p["out"]).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return [p["embeddings"], p["labels"], p["model"], p["ids"]], [p["out"]], {
        "accuracy": metrics.accuracy, "f1": metrics.f1,
    }


def _cmd_predict(p):
    emb = corpus.load_embeddings(p["embeddings"])
    model = classifier.load_model(p["model"])
    probs = model.predict_proba(emb.matrix)
    pred = probs >= 0.5
    records = [
        corpus.LabelRecord(
            int(i), corpus.GEOSPATIAL if y else corpus.NON_GEOSPATIAL, "predicted"
        )
        for i, y in zip(emb.ids, pred)
    ]
    corpus.save_labels(records, p["out"])
    share = float(pred.mean()) if len(pred) else 0.0
    return [p["embeddings"], p["model"]], [p["out"]], {
        "n": len(records),
        "positives": int(pred.sum()),
        "positive_share": share,
    }


def _cmd_firstwords(p):
    queries = corpus.load_queries(p["queries"])
    emb = corpus.EmbeddingSet(
        np.array([q.id for q in queries], dtype=np.int64),
        np.zeros((len(queries), 1), dtype=np.float32),
    )
    labels = corpus.load_labels(p["labels"])
    aligned = corpus.AlignedCorpus(queries, emb, labels)
    stats = corpus.first_word_stats(aligned)
    with open(p["out"], "w", encoding="utf-8") as fh:
        fh.write("class\trank\tword\tpercent\n")
        for cls in sorted(stats.per_class):
            for rank, (word, pct) in enumerate(stats.per_class[cls][: p["top"]], 1):
                fh.write(f"{cls}\t{rank}\t{word}\t{pct:.6f}\n")
    return [p["queries"], p["labels"]], [p["out"]], {"skipped": stats.skipped}


def _cmd_reduce(p):
    emb = corpus.load_embeddings(p["embeddings"])
    config = reduce_mod.ReducerConfig(
        out_dims=p["dims"], n_neighbors=p["neighbors"], min_dist=p["min_dist"],
        n_epochs=p["epochs"] or None, seed=p["seed"],
    )
    reduced = reduce_mod.reduce(emb.matrix, config)
    corpus.save_embeddings(
        corpus.EmbeddingSet(emb.ids, reduced.matrix), p["out"]
    )
    return [p["embeddings"]], [p["out"]], {
        "n": len(emb), "out_dims": p["dims"],
    }


def _cmd_cluster(p):
    emb = corpus.load_embeddings(p["embeddings"])
    params = cluster.ClusterParams(p["min_cluster_size"], p["min_samples"])
    labels, tree = cluster.hdbscan(emb.matrix.astype(np.float64), params)
    cluster.save_labels_tsv(emb.ids, labels, p["out_labels"])
    outs = [p["out_labels"]]
    if p["out_tree"]:
        Path(p["out_tree"]).write_text(tree.to_json(), encoding="utf-8")
        outs.append(p["out_tree"])
    metrics = cluster.cluster_metrics(labels)
    if p["out_metrics"]:
        Path(p["out_metrics"]).write_text(
            json.dumps(metrics, indent=2), encoding="utf-8"
        )
        outs.append(p["out_metrics"])
    return [p["embeddings"]], outs, metrics


def _cmd_dbcv(p):
    from .validate import dbcv as dbcv_fn

    emb = corpus.load_embeddings(p["embeddings"])
    ids, labels = cluster.load_labels_tsv(p["labels"])
    rows = _rows_for_ids(emb, ids)
    report = dbcv_fn(emb.matrix[rows].astype(np.float64), labels)
    Path(p["out"]).write_text(report.to_json(), encoding="utf-8")
    return [p["embeddings"], p["labels"]], [p["out"]], {"overall": report.overall}


def _cmd_grid(p):
    emb = corpus.load_embeddings(p["embeddings"])
    spec = search.GridSpec(
        _int_list(p["dims_set"]), _int_list(p["neighbors_set"]),
        _int_list(p["mcs_set"]), _float_list(p["fractions"]), p["seed"],
    )
    results = search.grid_search(
        emb.matrix, spec, p["seed"], threads=p["threads"],
        n_epochs=p["epochs"] or None,
    )
    search.write_grid_csv(results, p["out"])
    done = sum(1 for r in results if r.error is None)
    return [p["embeddings"]], [p["out"]], {
        "cells": len(results), "completed": done,
    }


def _cmd_consistency(p):
    emb = corpus.load_embeddings(p["embeddings"])
    grid_rows = search.read_grid_csv(p["grid"])
    top = search.rank_top(grid_rows, k=p["top_k"], min_clusters=p["min_clusters"])
    seeds = _int_list(p["seeds"])
    reports = []
    all_rows = []
    for row in top:
        config = search.GridConfig(
            row.config_id, row.umap_dims, row.umap_neighbors,
            row.min_cluster_size, row.min_samples,
        )
        rep = search.consistency(
            emb.matrix, config, seeds,
            n_epochs=p["epochs"] or None, threads=p["threads"],
        )
        reports.append(rep)
        all_rows.extend(rep.per_seed)
    search.write_consistency_csv(reports, p["out_stats"])
    search.write_grid_csv(all_rows, p["out_runs"])
    return [p["embeddings"], p["grid"]], [p["out_stats"], p["out_runs"]], {
        "configs": len(reports), "seeds": list(seeds),
    }


def _cmd_select(p):
    runs = search.read_grid_csv(p["runs"])
    reports = search.read_consistency_csv(p["consistency"], runs)
    chosen, rationale = search.select_config(reports, p["threshold"])
    per_seed = {
        r.seed: r.dbcv for r in chosen.per_seed if r.dbcv is not None
    }
    seed = search.select_seed(per_seed)
    doc = {
        "chosen_config": {
            "config_id": chosen.config_id,
            "umap_dims": chosen.config.umap_dims if chosen.config else None,
            "umap_neighbors": chosen.config.umap_neighbors if chosen.config else None,
            "min_cluster_size": chosen.config.min_cluster_size if chosen.config else None,
            "min_samples": chosen.config.min_samples if chosen.config else None,
        },
        "chosen_seed": seed,
        "per_seed_dbcv": {str(k): v for k, v in sorted(per_seed.items())},
        "rationale": rationale,
    }
    Path(p["out"]).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return [p["consistency"], p["runs"]], [p["out"]], {
        "config_id": chosen.config_id, "seed": seed,
    }


def _cmd_interpret(p):
    queries = corpus.load_queries(p["queries"])
    emb = corpus.load_embeddings(p["embeddings"])
    aligned = corpus.align(queries, emb)
    ids, labels = cluster.load_labels_tsv(p["labels"])
    cluster_of_id = {int(i): int(c) for i, c in zip(ids, labels)}
    summaries = interpret.summarize_clusters(
        aligned, cluster_of_id,
        n_terms=p["terms"], n_samples=p["samples"], seed=p["seed"],
    )
    Path(p["out_md"]).write_text(interpret.export_markdown(summaries), encoding="utf-8")
    interpret.export_csv(summaries, p["out_csv"])
    outs = [p["out_md"], p["out_csv"]]
    if p["out_summaries"]:
        Path(p["out_summaries"]).write_text(
            interpret.summaries_to_json(summaries), encoding="utf-8"
        )
        outs.append(p["out_summaries"])
    return [p["queries"], p["embeddings"], p["labels"]], outs, {
        "clusters": len(summaries),
    }


def _cmd_export(p):
    ids, labels = cluster.load_labels_tsv(p["labels"])
    cluster_of_id = {int(i): int(c) for i, c in zip(ids, labels)}
    merge_map = (
        interpret.load_merge_map(p["merge"]) if p["merge"]
        else interpret.identity_merge_map(set(cluster_of_id.values()))
    )
    summaries = None
    if p["summaries"]:
        summaries = interpret.summaries_from_json(
            Path(p["summaries"]).read_text(encoding="utf-8")
        )
    taxonomy = interpret.build_taxonomy(cluster_of_id, merge_map, summaries)
    Path(p["out"]).write_text(
        interpret.export_taxonomy_json(taxonomy), encoding="utf-8"
    )
    outs = [p["out"]]
    shares = interpret.theme_shares(taxonomy)
    if p["out_shares"]:
        with open(p["out_shares"], "w", encoding="utf-8", newline="") as fh:
            fh.write("theme,percent\n")
            for theme in sorted(shares):
                fh.write(f"{theme},{shares[theme]:.6f}\n")
        outs.append(p["out_shares"])
    inputs = [p["labels"]]
    if p["merge"]:
        inputs.append(p["merge"])
    if p["summaries"]:
        inputs.append(p["summaries"])
    return inputs, outs, {
        "themes": len(taxonomy.theme_sizes()),
        "categories": len(taxonomy.categories),
        "noise_share": shares.get("noise"),
    }


# --- parser wiring -------------------------------------------------------------

COMMANDS = {
    "ingest": (_cmd_ingest, {
        "queries": _REQUIRED, "embeddings": _REQUIRED, "labels": "",
        "out_queries": _REQUIRED, "out_embeddings": _REQUIRED,
    }),
    "sample": (_cmd_sample, {
        "embeddings": _REQUIRED, "k": 5000, "seed": _REQUIRED, "out": _REQUIRED,
    }),
    "votes": (_cmd_votes, {
        "votes": _REQUIRED, "threshold": 0, "out": _REQUIRED,
    }),
    "split": (_cmd_split, {
        "labels": _REQUIRED, "train_n": 200, "val_n": 200, "test_n": 800,
        "seed": _REQUIRED, "out_prefix": _REQUIRED,
    }),
    "train": (_cmd_train, {
        "embeddings": _REQUIRED, "labels": _REQUIRED, "ids": _REQUIRED,
        "epochs": 5, "lr": 2e-3, "batch": 64, "seed": _REQUIRED,
        "out": _REQUIRED,
    }),
    "eval": (_cmd_eval, {
        "embeddings": _REQUIRED, "labels": _REQUIRED, "model": _REQUIRED,
        "ids": _REQUIRED, "resamples": 1000, "level": 0.95,
        "seed": _REQUIRED, "out": _REQUIRED,
    }),
    "predict": (_cmd_predict, {
        "embeddings": _REQUIRED, "model": _REQUIRED, "out": _REQUIRED,
    }),
    "firstwords": (_cmd_firstwords, {
        "queries": _REQUIRED, "labels": _REQUIRED, "top": 20, "out": _REQUIRED,
    }),
    "reduce": (_cmd_reduce, {
        "embeddings": _REQUIRED, "dims": 5, "neighbors": 25,
        "min_dist": 0.1, "epochs": 0, "seed": _REQUIRED, "out": _REQUIRED,
    }),
    "cluster": (_cmd_cluster, {
        "embeddings": _REQUIRED, "min_cluster_size": 200, "min_samples": 40,
        "out_labels": _REQUIRED, "out_tree": "", "out_metrics": "",
    }),
    "dbcv": (_cmd_dbcv, {
        "embeddings": _REQUIRED, "labels": _REQUIRED, "out": _REQUIRED,
    }),
    "grid": (_cmd_grid, {
        "embeddings": _REQUIRED, "dims_set": "5,10,15",
        "neighbors_set": "10,25,50", "mcs_set": "25,50,100,200",
        "fractions": "0.2,0.5,1.0", "epochs": 0, "seed": _REQUIRED,
        "threads": 0, "out": _REQUIRED,
    }),
    "consistency": (_cmd_consistency, {
        "embeddings": _REQUIRED, "grid": _REQUIRED, "top_k": 10,
        "min_clusters": 10, "seeds": "0,1,2,3,4,42", "epochs": 0,
        "threads": 0, "out_stats": _REQUIRED, "out_runs": _REQUIRED,
    }),
    "select": (_cmd_select, {
        "consistency": _REQUIRED, "runs": _REQUIRED, "threshold": 0.05,
        "out": _REQUIRED,
    }),
    "interpret": (_cmd_interpret, {
        "queries": _REQUIRED, "embeddings": _REQUIRED, "labels": _REQUIRED,
        "terms": 20, "samples": 10, "seed": _REQUIRED,
        "out_md": _REQUIRED, "out_csv": _REQUIRED, "out_summaries": "",
    }),
    "export": (_cmd_export, {
        "labels": _REQUIRED, "merge": "", "summaries": "",
        "out": _REQUIRED, "out_shares": "",
    }),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="querytax",
        description="Derive data-driven query-intent taxonomies from embedded corpora.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, defaults) in COMMANDS.items():
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None,
                         help="key = value file; explicit flags win")
        for key, default in defaults.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(default, bool):
                cmd.add_argument(flag, action="store_true",
                                 default=argparse.SUPPRESS)
            elif isinstance(default, int) and default is not _REQUIRED:
                cmd.add_argument(flag, type=int, default=argparse.SUPPRESS)
            elif isinstance(default, float):
                cmd.add_argument(flag, type=float, default=argparse.SUPPRESS)
            else:
                cmd.add_argument(flag, default=argparse.SUPPRESS)
    return parser


def _coerce(params: dict, defaults: dict) -> dict:
    out = {}
    for key, value in params.items():
        default = defaults.get(key)
        if isinstance(default, int) and not isinstance(default, bool) and value is not _REQUIRED:
            out[key] = int(value)
        elif isinstance(default, float) and value is not _REQUIRED:
            out[key] = float(value)
        else:
            out[key] = value
    return out


def dispatch(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    name = args.command
    handler, defaults = COMMANDS[name]
    start = time.time()
    try:
        params = _coerce(_resolve(args, defaults), defaults)
        if name in STOCHASTIC and "seed" in params:
            params["seed"] = int(params["seed"])
        if params.get("threads") == 0:
            params["threads"] = os.cpu_count() or 1
        inputs, outputs, extras = handler(params)
        manifest = {
            "command": name,
            "version": __version__,
            "params": {
                k: v for k, v in sorted(params.items())
                if k not in ("command",)
            },
            "inputs": {str(f): _sha256(f) for f in inputs},
            "outputs": {str(f): _sha256(f) for f in outputs},
            "extras": extras,
            "elapsed_s": round(time.time() - start, 3),
        }
        print(json.dumps(manifest, indent=2))
        return 0
    except QuerytaxError as e:
        print(
            json.dumps({"error": type(e).__name__, "message": str(e)}),
            file=sys.stderr,
        )
        return 1
    except FileNotFoundError as e:
        print(
            json.dumps({"error": "FileNotFound", "message": str(e)}),
            file=sys.stderr,
        )
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
