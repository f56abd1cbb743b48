"""Linear classification head over fixed embeddings, plus evaluation statistics.

The head is plain logistic regression trained by minibatch gradient descent;
embeddings are treated as frozen features regardless of where they came from.
Evaluation covers confusion counts, accuracy/precision/recall/F1, percentile
bootstrap confidence intervals, and Cohen's kappa for annotator agreement.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import GEOSPATIAL, NON_GEOSPATIAL, LabelRecord
from .errors import (
    DegenerateTraining,
    DimMismatch,
    FormatError,
    InsufficientData,
    LengthMismatch,
    TruncatedFile,
    UndefinedMetricCI,
)

MODEL_MAGIC = b"LMDL"
MODEL_VERSION = 1

METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class SplitSpec:
    train_n: int
    val_n: int
    test_n: int
    seed: int


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp, fp, fn, tn) -> "Metrics":
        total = tp + fp + fn + tn
        accuracy = (tp + tn) / total if total else 0.0
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        recall = tp / (tp + fn) if (tp + fn) else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if (precision + recall) > 0
            else 0.0
        )
        return cls(tp, fp, fn, tn, accuracy, precision, recall, f1)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass(frozen=True)
class BootstrapCI:
    metric: str
    lower: float
    upper: float
    resamples: int
    level: float
    skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "ci_lower": self.lower,
            "ci_upper": self.upper,
            "resamples": self.resamples,
            "level": self.level,
            "skipped": self.skipped,
        }


@dataclass
class LinearModel:
    """Logistic head: probability of the positive class is sigmoid(w.x + b)."""

    weights: np.ndarray  # (d,) float64
    bias: float

    @property
    def dim(self) -> int:
        return len(self.weights)

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.dim:
            raise DimMismatch(f"model dim {self.dim} vs data dim {X.shape[1]}")
        z = X @ self.weights + self.bias
        p = _sigmoid(z)
        return np.clip(p, 1e-15, 1.0 - 1e-15)


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_bool_array(values, name) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == bool:
        return arr
    if np.issubdtype(arr.dtype, np.number):
        return arr != 0
    return np.array([v == GEOSPATIAL if isinstance(v, str) else bool(v) for v in arr])


# --- splitting -----------------------------------------------------------------

def stratified_split(labels, spec: SplitSpec):
    """Partition indices into (train, val, test) with per-class counts within
    one of exact proportionality. Partitions are disjoint; output is sorted.

    Rounding keeps a running per-class debt (cumulative exact share minus
    cumulative items taken) so no class is ever overdrawn across partitions.
    """
    y = _as_bool_array(labels, "labels")
    n = len(y)
    want = spec.train_n + spec.val_n + spec.test_n
    if want > n:
        raise InsufficientData(f"requested {want} of {n} labelled items")
    classes = [np.flatnonzero(y), np.flatnonzero(~y)]
    if any(len(c) == 0 for c in classes):
        raise InsufficientData("both classes must be present")
    rng = np.random.default_rng(spec.seed)
    pools = [rng.permutation(c) for c in classes]
    offsets = [0, 0]
    cum_exact = [0.0, 0.0]
    parts = []
    for part_n in (spec.train_n, spec.val_n, spec.test_n):
        exact = [part_n * len(c) / n for c in classes]
        take = [int(np.floor(e)) for e in exact]
        rem = part_n - sum(take)
        debt = [
            cum_exact[i] + exact[i] - (offsets[i] + take[i])
            for i in range(len(classes))
        ]
        order = sorted(range(len(classes)), key=lambda i: (-debt[i], i))
        for i in order:
            if rem == 0:
                break
            if offsets[i] + take[i] + 1 <= len(pools[i]):
                take[i] += 1
                rem -= 1
        if rem:
            raise InsufficientData("class pools exhausted during allocation")
        chunk = []
        for i, t in enumerate(take):
            if offsets[i] + t > len(pools[i]):
                raise InsufficientData(
                    f"class {i} exhausted: needs {offsets[i] + t} of {len(pools[i])}"
                )
            chunk.append(pools[i][offsets[i] : offsets[i] + t])
            offsets[i] += t
            cum_exact[i] += exact[i]
        parts.append(np.sort(np.concatenate(chunk)).astype(np.int64))
    return tuple(parts)


# --- training ------------------------------------------------------------------

def logistic_loss_and_grad(weights, bias, X, y):
    """Mean logistic loss and its gradient at (weights, bias)."""
    X = np.asarray(X, dtype=np.float64)
    y = _as_bool_array(y, "y").astype(np.float64)
    z = X @ weights + bias
    # log(1 + exp(-s*z)) computed stably via logaddexp
    s = 2.0 * y - 1.0
    loss = np.logaddexp(0.0, -s * z).mean()
    p = _sigmoid(z)
    resid = p - y
    grad_w = X.T @ resid / len(y)
    grad_b = resid.mean()
    return loss, grad_w, grad_b


def fit_logistic(X, y, *, epochs=5, lr=2e-3, batch=64, seed=0) -> LinearModel:
    """Minibatch gradient descent from zero init; keeps the best-loss epoch.

    Tracking the best full-data loss (initial parameters included) guarantees
    the returned model never exceeds the initial loss.
    """
    X = np.asarray(X, dtype=np.float64)
    y = _as_bool_array(y, "y")
    if len(X) != len(y):
        raise LengthMismatch(f"{len(X)} examples vs {len(y)} labels")
    if y.all() or not y.any():
        raise DegenerateTraining("training set has a single class")
    n, d = X.shape
    rng = np.random.default_rng(seed)
    w = np.zeros(d)
    b = 0.0
    yf = y.astype(np.float64)
    best_loss, _, _ = logistic_loss_and_grad(w, b, X, y)
    best = (w.copy(), b)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            Xb, yb = X[idx], yf[idx]
            p = _sigmoid(Xb @ w + b)
            resid = p - yb
            w -= lr * (Xb.T @ resid / len(idx))
            b -= lr * resid.mean()
        loss, _, _ = logistic_loss_and_grad(w, b, X, y)
        if loss < best_loss:
            best_loss = loss
            best = (w.copy(), b)
    return LinearModel(best[0], float(best[1]))


def train_head(corpus, train_idx, *, epochs=5, lr=2e-3, batch=64, seed=0) -> LinearModel:
    """Fit the logistic head on corpus rows train_idx using corpus labels."""
    if corpus.labels is None:
        raise InsufficientData("corpus carries no labels")
    train_idx = np.asarray(train_idx, dtype=np.int64)
    ids = corpus.ids[train_idx]
    missing = [int(i) for i in ids if int(i) not in corpus.labels]
    if missing:
        raise InsufficientData(f"{len(missing)} training ids lack labels")
    y = np.array([corpus.labels[int(i)].label == GEOSPATIAL for i in ids])
    if y.all() or not y.any():
        raise DegenerateTraining("training set has a single class")
    X = corpus.matrix[train_idx]
    return fit_logistic(X, y, epochs=epochs, lr=lr, batch=batch, seed=seed)


def predict(model: LinearModel, corpus):
    """Label every corpus query; geospatial iff probability >= 0.5.

    Returns (records, probabilities) where records carry source='predicted'.
    """
    if corpus.matrix.shape[1] != model.dim:
        raise DimMismatch(
            f"model dim {model.dim} vs corpus dim {corpus.matrix.shape[1]}"
        )
    probs = model.predict_proba(corpus.matrix)
    records = [
        LabelRecord(int(id_), GEOSPATIAL if p >= 0.5 else NON_GEOSPATIAL, "predicted")
        for id_, p in zip(corpus.ids, probs)
    ]
    return records, probs


# --- evaluation ------------------------------------------------------------------

def evaluate(predicted, gold) -> Metrics:
    """Confusion counts and derived ratios; ratios are 0 when undefined."""
    p = _as_bool_array(predicted, "predicted")
    g = _as_bool_array(gold, "gold")
    if len(p) != len(g):
        raise LengthMismatch(f"{len(p)} predictions vs {len(g)} gold labels")
    if len(p) == 0:
        raise LengthMismatch("need at least one item")
    tp = int(np.sum(p & g))
    fp = int(np.sum(p & ~g))
    fn = int(np.sum(~p & g))
    tn = int(np.sum(~p & ~g))
    return Metrics.from_counts(tp, fp, fn, tn)


def _resample_metrics(p, g):
    tp = int(np.sum(p & g))
    fp = int(np.sum(p & ~g))
    fn = int(np.sum(~p & g))
    tn = int(np.sum(~p & ~g))
    out = {}
    out["accuracy"] = (tp + tn) / len(p)
    out["precision"] = tp / (tp + fp) if (tp + fp) else None
    out["recall"] = tp / (tp + fn) if (tp + fn) else None
    prec = out["precision"] if out["precision"] is not None else 0.0
    rec = out["recall"] if out["recall"] is not None else 0.0
    out["f1"] = 2 * prec * rec / (prec + rec) if (prec + rec) > 0 else None
    return out


def bootstrap_ci(predicted, gold, resamples=1000, level=0.95, seed=0):
    """Percentile bootstrap CI per metric over uniform with-replacement resamples.

    Resample i draws its randomness from (seed, i), so results are identical
    under any parallel split of the work. Resamples where a metric's
    denominator is zero are skipped and counted; a metric undefined in every
    resample raises UndefinedMetricCI.
    """
    p = _as_bool_array(predicted, "predicted")
    g = _as_bool_array(gold, "gold")
    if len(p) != len(g):
        raise LengthMismatch(f"{len(p)} predictions vs {len(g)} gold labels")
    n = len(p)
    if n < 2:
        raise InsufficientData("bootstrap needs at least two items")
    values = {m: [] for m in METRIC_NAMES}
    skipped = {m: 0 for m in METRIC_NAMES}
    for i in range(resamples):
        rng = np.random.default_rng((seed, i))
        idx = rng.integers(0, n, n)
        sample = _resample_metrics(p[idx], g[idx])
        for m in METRIC_NAMES:
            if sample[m] is None:
                skipped[m] += 1
            else:
                values[m].append(sample[m])
    lo_pct = 100.0 * (1.0 - level) / 2.0
    hi_pct = 100.0 - lo_pct
    out = {}
    for m in METRIC_NAMES:
        if not values[m]:
            raise UndefinedMetricCI(m)
        lo, hi = np.percentile(values[m], [lo_pct, hi_pct])
        out[m] = BootstrapCI(m, float(lo), float(hi), resamples, level, skipped[m])
    return out


def cohens_kappa(labels_a, labels_b) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    Returns 1.0 when expected agreement is 1 (both raters constant and equal,
    which forces perfect observed agreement). Symmetric in its arguments.
    """
    a = list(labels_a)
    b = list(labels_b)
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} labels")
    if not a:
        raise LengthMismatch("need at least one item")
    n = len(a)
    p_o = sum(x == y for x, y in zip(a, b)) / n
    cats = set(a) | set(b)
    p_e = sum((a.count(c) / n) * (b.count(c) / n) for c in cats)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


# --- model persistence -------------------------------------------------------------

def save_model(model: LinearModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        fh.write(struct.pack("<I", model.dim))
        payload = np.concatenate([model.weights, [model.bias]]).astype("<f4")
        fh.write(payload.tobytes())


def load_model(path) -> LinearModel:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic")
    if len(data) < 12:
        raise TruncatedFile(f"{path}: header incomplete")
    version, = struct.unpack_from("<I", data, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    d, = struct.unpack_from("<I", data, 8)
    expected = 12 + (d + 1) * 4
    if len(data) < expected:
        raise TruncatedFile(f"{path}: {len(data)} bytes, header claims {expected}")
    if len(data) > expected:
        raise FormatError(f"{path}: trailing bytes")
    payload = np.frombuffer(data, dtype="<f4", count=d + 1, offset=12)
    return LinearModel(payload[:d].astype(np.float64), float(payload[d]))
