"""Clustering and classification metrics on learned representations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .rng import substream
from .tensor_nn import Adam, DenseLayer, softmax_cross_entropy


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    acc: float
    nmi: float
    ari: float


@dataclass
class ProbeResult:
    acc: float
    macro_f1: float
    per_class_f1: np.ndarray


# --------------------------------------------------------------------------
# k-means


def _kmeans_pp(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[i] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))
    return centers


def _assign(x, centers):
    d2 = np.sum(x * x, axis=1)[:, None] - 2 * x @ centers.T + np.sum(centers * centers, axis=1)[None, :]
    return np.argmin(d2, axis=1)


def _lloyd(x, centers, tol, max_iter):
    for _ in range(max_iter):
        assign = _assign(x, centers)
        new = centers.copy()
        for j in range(centers.shape[0]):
            members = x[assign == j]
            if len(members):
                new[j] = members.mean(axis=0)
        shift = float(np.max(np.sqrt(np.sum((new - centers) ** 2, axis=1))))
        centers = new
        if shift < tol:
            break
    assign = _assign(x, centers)
    inertia = float(np.sum((x - centers[assign]) ** 2))
    return assign, inertia


def _stream(seed, name, run):
    return substream(seed, name if run == 0 else f"{name}.{run}")


def kmeans(z, k: int, restarts: int = 10, seed: int = 0, tol: float = 1e-6, max_iter: int = 300,
           run: int = 0) -> np.ndarray:
    """k-means++ seeded Lloyd iterations; best of ``restarts`` by inertia.

    ``run`` selects an independent random stream for repeated clusterings
    under one seed.
    """
    x = np.asarray(z, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D array")
    if not np.all(np.isfinite(x)):
        raise ValueError("features contain NaN or inf")
    if not 1 <= k <= x.shape[0]:
        raise ValueError(f"need 1 <= k <= N, got k={k}, N={x.shape[0]}")
    rng = _stream(seed, "kmeans", run)
    best, best_inertia = None, math.inf
    for _ in range(max(1, restarts)):
        assign, inertia = _lloyd(x, _kmeans_pp(x, k, rng), tol, max_iter)
        if inertia < best_inertia:
            best, best_inertia = assign, inertia
    return best


# --------------------------------------------------------------------------
# partition metrics


def contingency(pred, truth) -> np.ndarray:
    _, p = np.unique(np.asarray(pred), return_inverse=True)
    _, t = np.unique(np.asarray(truth), return_inverse=True)
    if p.size != t.size:
        raise ValueError("pred and truth must have equal length")
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def matched_count(table: np.ndarray) -> int:
    """Largest total of a one-to-one cluster/class matching (Hungarian)."""
    rows, cols = linear_sum_assignment(table, maximize=True)
    return int(table[rows, cols].sum())


def clustering_accuracy(pred, truth) -> float:
    table = contingency(pred, truth)
    return matched_count(table) / table.sum()


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return -float(np.sum(p * np.log(p)))


def nmi(pred, truth) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    pi, pj = table.sum(axis=1), table.sum(axis=0)
    nz = table > 0
    mi = float(np.sum(table[nz] / n * np.log(table[nz] * n / np.outer(pi, pj)[nz])))
    denom = 0.5 * (_entropy(pi) + _entropy(pj))
    if denom <= 0:
        return 1.0 if pi.size == pj.size == 1 else 0.0
    return max(0.0, min(1.0, mi / denom))


def ari(pred, truth) -> float:
    table = contingency(pred, truth).astype(np.float64)
    comb2 = lambda x: x * (x - 1) / 2.0
    n = table.sum()
    index = comb2(table).sum()
    a, b = comb2(table.sum(axis=1)).sum(), comb2(table.sum(axis=0)).sum()
    expected = a * b / comb2(n)
    max_index = 0.5 * (a + b)
    if max_index == expected:
        return 1.0 if index == expected else 0.0
    return float((index - expected) / (max_index - expected))


def evaluate_clustering(z, truth, k: int, restarts: int = 10, seed: int = 0, run: int = 0) -> ClusteringResult:
    assign = kmeans(z, k, restarts, seed, run=run)
    return ClusteringResult(assign, clustering_accuracy(assign, truth), nmi(assign, truth), ari(assign, truth))


def random_assignment_accuracy(truth, k: int, trials: int = 100, seed: int = 0) -> float:
    """Mean Hungarian accuracy of uniformly random cluster assignments."""
    rng = substream(seed, "random-baseline")
    truth = np.asarray(truth)
    return float(np.mean([clustering_accuracy(rng.integers(k, size=truth.size), truth) for _ in range(trials)]))


# --------------------------------------------------------------------------
# classification


def f1_scores(pred, truth, classes) -> np.ndarray:
    out = []
    for c in classes:
        tp = np.sum((pred == c) & (truth == c))
        fp = np.sum((pred == c) & (truth != c))
        fn = np.sum((pred != c) & (truth == c))
        denom = 2 * tp + fp + fn
        out.append(2 * tp / denom if denom else 0.0)
    return np.array(out, dtype=np.float64)


def stratified_split(labels, test_fraction: float = 0.2, seed: int = 0, run: int = 0):
    """Per-class shuffled split; returns (train_idx, test_idx), both sorted."""
    rng = _stream(seed, "split", run)
    labels = np.asarray(labels)
    train, test = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.nonzero(labels == c)[0])
        n_test = int(round(test_fraction * idx.size))
        if idx.size > 1:
            n_test = min(max(n_test, 1), idx.size - 1)
        test.extend(idx[:n_test])
        train.extend(idx[n_test:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


def linear_probe(z_train, y_train, z_test, y_test, seed: int = 0, lr: float = 0.001, epochs: int = 200,
                 run: int = 0) -> ProbeResult:
    """Softmax regression on frozen features, full-batch Adam.

    Features are z-scored with training-split statistics before fitting.
    """
    z_train = np.asarray(z_train, dtype=np.float64)
    z_test = np.asarray(z_test, dtype=np.float64)
    y_train = np.asarray(y_train)
    y_test = np.asarray(y_test)
    classes = np.unique(y_train)
    missing = np.setdiff1d(np.unique(y_test), classes)
    if missing.size:
        raise ValueError(f"classes {missing.tolist()} are absent from the training split")
    mean = z_train.mean(axis=0)
    std = z_train.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    a, b = (z_train - mean) / std, (z_test - mean) / std

    rng = _stream(seed, "probe", run)
    layer = DenseLayer(rng.normal(0.0, 0.01, size=(classes.size, a.shape[1])), np.zeros(classes.size), "identity")
    y_idx = np.searchsorted(classes, y_train)
    opt = Adam(lr=lr)
    for _ in range(epochs):
        _, g = softmax_cross_entropy(layer.forward(a), y_idx)
        layer.backward(g)
        opt.step(layer.params, layer.grads)
    pred = classes[np.argmax(layer.forward(b), axis=1)]
    f1 = f1_scores(pred, y_test, classes)
    return ProbeResult(float(np.mean(pred == y_test)), float(f1.mean()), f1)


def summarize(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "std": float(v.std())}
