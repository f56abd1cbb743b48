"""Contrastive fine-tuning of embeddings on a small gold-labelled set.

A linear projection (initialised at identity) is trained on cosine
similarity targets over sampled pairs: same-class pairs toward 1,
cross-class pairs toward 0. The tuned projection then re-embeds the full
corpus, and rows are re-normalised, so the output drops into the same
``.qemb`` pipeline as any other embedding source.
"""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, loss_trace):
        self.loss_trace = loss_trace
        super().__init__(f"loss became non-finite after {len(loss_trace)} epochs")


def _sample_pairs(rng, by_class, batch):
    """Balanced same/cross-class index pairs with targets 1/0."""
    classes = list(by_class)
    left, right, target = [], [], []
    for i in range(batch):
        same = i % 2 == 0
        if same:
            c = classes[int(rng.integers(len(classes)))]
            a, b = rng.choice(by_class[c], size=2, replace=len(by_class[c]) < 2)
            target.append(1.0)
        else:
            ca, cb = rng.choice(len(classes), size=2, replace=False)
            a = rng.choice(by_class[classes[ca]])
            b = rng.choice(by_class[classes[cb]])
            target.append(0.0)
        left.append(int(a))
        right.append(int(b))
    return left, right, target


def fit_projection(X, y, *, epochs: int = 5, batch: int = 64, lr: float = 2e-5,
                   pair_iters: int = 20, early_stop_rounds: int = 2,
                   seed: int = 0):
    """Train the d x d projection; returns (weight matrix, loss trace).

    Per epoch, ``pair_iters`` batches of sampled pairs are optimised with
    Adam on an MSE cosine-similarity loss. Stops early after
    ``early_stop_rounds`` epochs without loss improvement; a non-finite
    loss aborts with the trace attached.
    """
    import torch

    X = np.asarray(X, dtype=np.float32)
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    by_class = {c: np.flatnonzero(y == c) for c in classes}
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    feats = torch.from_numpy(X)
    d = X.shape[1]
    proj = torch.nn.Linear(d, d, bias=False)
    with torch.no_grad():
        proj.weight.copy_(torch.eye(d))
    optim = torch.optim.Adam(proj.parameters(), lr=lr)
    cos = torch.nn.CosineSimilarity(dim=1)
    trace = []
    best = float("inf")
    stale = 0
    for epoch in range(epochs):
        total = 0.0
        for _ in range(pair_iters):
            li, ri, tgt = _sample_pairs(rng, by_class, batch)
            a = proj(feats[li])
            b = proj(feats[ri])
            loss = torch.mean((cos(a, b) - torch.tensor(tgt)) ** 2)
            optim.zero_grad()
            loss.backward()
            optim.step()
            total += float(loss.detach())
        epoch_loss = total / pair_iters
        trace.append(epoch_loss)
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(trace)
        if epoch_loss < best - 1e-6:
            best = epoch_loss
            stale = 0
        else:
            stale += 1
            if stale >= early_stop_rounds:
                log.info("early stop after epoch %d", epoch + 1)
                break
    W = proj.weight.detach().numpy().astype(np.float32)
    return W, trace


def apply_projection(matrix, W) -> np.ndarray:
    """Project and L2-renormalise the full corpus."""
    out = np.asarray(matrix, dtype=np.float32) @ W.T
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return np.ascontiguousarray(out / norms, dtype=np.float32)


def finetune_embed(labeled_matrix, labels, full_matrix, *, epochs=5, batch=64,
                   lr=2e-5, pair_iters=20, early_stop_rounds=2, seed=0):
    """Fine-tune on the labelled subset, then re-embed the full corpus."""
    W, trace = fit_projection(
        labeled_matrix, labels, epochs=epochs, batch=batch, lr=lr,
        pair_iters=pair_iters, early_stop_rounds=early_stop_rounds, seed=seed,
    )
    return apply_projection(full_matrix, W), trace
