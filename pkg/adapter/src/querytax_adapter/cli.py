"""Adapter CLI: embed / weaklabel / finetune."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .embed import embed_corpus
from .encoders import get_encoder
from .finetune import apply_projection, fit_projection
from .qemb import read_queries_tsv, write_qemb
from .weaklabel import OllamaClient, weak_label

log = logging.getLogger("querytax_adapter")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="querytax-adapter",
        description="Produce querytax input files: .qemb embeddings and weak-label votes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    embed = sub.add_parser("embed")
    embed.add_argument("--queries", required=True)
    embed.add_argument("--model", default="hash",
                       help="'hash[-dim]' or a sentence-transformers model name")
    embed.add_argument("--dim", type=int, default=384,
                       help="output dim for the hash encoder")
    embed.add_argument("--batch-size", type=int, default=64)
    embed.add_argument("--device", default=None)
    embed.add_argument("--out", required=True)

    weak = sub.add_parser("weaklabel")
    weak.add_argument("--queries", required=True)
    weak.add_argument("--endpoint", default="http://localhost:11434")
    weak.add_argument("--model", default="llama3.1")
    weak.add_argument("--prompt", default=None, help="prompt file overriding the packaged one")
    weak.add_argument("--runs", type=int, default=5)
    weak.add_argument("--temperature", type=float, default=0.3)
    weak.add_argument("--out", required=True)

    tune = sub.add_parser("finetune")
    tune.add_argument("--queries", required=True)
    tune.add_argument("--labels", required=True,
                      help="core labels TSV restricted to the gold subset")
    tune.add_argument("--model", default="hash")
    tune.add_argument("--dim", type=int, default=384)
    tune.add_argument("--epochs", type=int, default=5)
    tune.add_argument("--batch", type=int, default=64)
    tune.add_argument("--lr", type=float, default=2e-5)
    tune.add_argument("--pair-iters", type=int, default=20)
    tune.add_argument("--early-stop-rounds", type=int, default=2)
    tune.add_argument("--retrain-epochs", type=int, default=3,
                      help="epochs for the final full-gold retrain")
    tune.add_argument("--seed", type=int, default=0)
    tune.add_argument("--device", default=None)
    tune.add_argument("--out", required=True)
    return parser


def _read_gold_labels(path):
    """Core labels TSV: id, label, source, votes."""
    gold = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n")
        if header != "id\tlabel\tsource\tvotes":
            raise ValueError(f"{path}: expected core labels TSV header")
        for line in fh:
            line = line.rstrip("\r\n")
            if not line:
                continue
            id_, label, _source, _votes = line.split("\t")
            gold[int(id_)] = label
    return gold


def _cmd_embed(args):
    encoder = get_encoder(args.model, args.dim, args.device)
    n = embed_corpus(args.queries, encoder, args.out, args.batch_size)
    return {"rows": n, "dim": encoder.dim, "model": encoder.name, "out": args.out}


def _cmd_weaklabel(args):
    prompt = None
    if args.prompt:
        with open(args.prompt, encoding="utf-8") as fh:
            prompt = fh.read()
    client = OllamaClient(args.endpoint, args.model)
    stats = weak_label(
        args.queries, args.out, client, prompt=prompt,
        runs=args.runs, temperature=args.temperature,
    )
    stats["out"] = args.out
    return stats


def _cmd_finetune(args):
    encoder = get_encoder(args.model, args.dim, args.device)
    ids, texts = read_queries_tsv(args.queries)
    base = encoder.encode(texts)
    gold = _read_gold_labels(args.labels)
    mask = np.array([i in gold for i in ids])
    if mask.sum() < 2:
        raise ValueError("gold labels cover fewer than 2 queries")
    y = np.array([gold[i] for i, m in zip(ids, mask) if m])
    # initial pass for early-stopping behaviour, then the production retrain
    # on the full gold subset
    _, trace = fit_projection(
        base[mask], y, epochs=args.epochs, batch=args.batch, lr=args.lr,
        pair_iters=args.pair_iters, early_stop_rounds=args.early_stop_rounds,
        seed=args.seed,
    )
    W, _ = fit_projection(
        base[mask], y, epochs=args.retrain_epochs, batch=args.batch,
        lr=args.lr, pair_iters=args.pair_iters,
        early_stop_rounds=args.retrain_epochs, seed=args.seed,
    )
    tuned = apply_projection(base, W)
    write_qemb(np.asarray(ids, dtype=np.int64), tuned, args.out)
    return {
        "rows": len(ids), "gold": int(mask.sum()), "dim": encoder.dim,
        "eval_loss_trace": trace, "out": args.out,
    }


def dispatch(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO)
    args = build_parser().parse_args(argv)
    handler = {
        "embed": _cmd_embed,
        "weaklabel": _cmd_weaklabel,
        "finetune": _cmd_finetune,
    }[args.command]
    try:
        print(json.dumps(handler(args), indent=2))
        return 0
    except (ValueError, RuntimeError, OSError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
