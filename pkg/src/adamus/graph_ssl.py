"""KNN similarity graphs, their consensus, and binary pseudo-labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_nn import Adam, pairwise_distances


@dataclass(frozen=True)
class SimilarityGraph:
    matrix: np.ndarray
    kernel_sigma: float
    k: int


@dataclass(frozen=True)
class ConsensusGraph:
    matrix: np.ndarray
    alpha: np.ndarray


@dataclass(frozen=True)
class PseudoLabels:
    matrix: np.ndarray  # bool
    threshold: float

    def positive_fraction(self) -> float:
        n = self.matrix.shape[0]
        if n < 2:
            return 0.0
        return float((self.matrix.sum() - n) / (n * (n - 1)))


def knn_indices(d2: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other points per row (ties -> lower index)."""
    masked = d2.copy()
    np.fill_diagonal(masked, np.inf)
    return np.argsort(masked, axis=1, kind="stable")[:, :k]


def build_view_graph(view, k: int = 10, kernel_sigma_mode: str = "mean_sq_dist") -> SimilarityGraph:
    """Gaussian-kernel KNN graph with an OR-symmetrized neighbor rule.

    ``kernel_sigma_mode="mean_sq_dist"`` sets the kernel width to the mean
    squared distance to each point's k-th neighbor; ``"mean_dist"`` uses the
    mean (unsquared) distance.
    """
    x = np.asarray(view, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < N, got k={k}, N={n}")
    d2 = pairwise_distances(x)
    nbrs = knn_indices(d2, k)
    adj = np.zeros((n, n), dtype=bool)
    adj[np.repeat(np.arange(n), k), nbrs.ravel()] = True
    adj |= adj.T

    kth = d2[np.arange(n), nbrs[:, -1]]
    if kernel_sigma_mode == "mean_sq_dist":
        sigma = float(kth.mean())
    elif kernel_sigma_mode == "mean_dist":
        sigma = float(np.sqrt(kth).mean())
    else:
        raise ValueError(f"unknown kernel_sigma_mode {kernel_sigma_mode!r}")

    if sigma > 0:
        kernel = np.exp(-d2 / (2.0 * sigma * sigma))
    else:
        kernel = (d2 == 0).astype(np.float64)
    s = np.where(adj, kernel, 0.0)
    s = 0.5 * (s + s.T)
    np.fill_diagonal(s, 1.0)
    return SimilarityGraph(s, sigma, k)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {a >= 0, sum a = 1}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def fit_consensus(graphs, lr: float = 0.001, steps: int = 200) -> ConsensusGraph:
    """Weighted combination of view graphs fitted by projected Adam.

    Minimizes ``||S - sum_v alpha_v S_v||_F^2`` over the simplex, resetting
    ``S`` to the current combination after every step.
    """
    mats = [np.asarray(g.matrix if isinstance(g, SimilarityGraph) else g, dtype=np.float64) for g in graphs]
    if len(mats) < 1:
        raise ValueError("need at least one graph")
    shape = mats[0].shape
    for m in mats:
        if m.shape != shape:
            raise ValueError(f"graph size mismatch: {m.shape} vs {shape}")
    v = len(mats)
    # S always lies in the span of the view graphs, so <S - sum a S_v, S_u>
    # reduces to Gram-matrix algebra; s_coef holds S's combination weights
    gram = np.array([[float(np.sum(a * b)) for b in mats] for a in mats])
    alpha = np.full(v, 1.0 / v)
    s_coef = alpha.copy()
    opt = Adam(lr=lr)
    params = {"alpha": alpha}
    for _ in range(steps):
        grad = -2.0 * gram @ (s_coef - alpha)
        opt.step(params, {"alpha": grad})
        alpha[:] = project_simplex(alpha)
        s_coef = alpha.copy()
    s = sum(w * m for w, m in zip(s_coef, mats))
    s = np.clip(0.5 * (s + s.T), 0.0, 1.0)
    return ConsensusGraph(s, alpha.copy())


def median_threshold(s: np.ndarray) -> float:
    off = ~np.eye(s.shape[0], dtype=bool)
    vals = s[off & (s > 0)]
    return float(np.median(vals)) if vals.size else 0.0


def make_pseudo_labels(consensus, epsilon=None) -> PseudoLabels:
    """``l_ij = 1`` iff ``S_ij > epsilon`` (strict); diagonal forced to 1.

    ``epsilon=None`` uses the median of the nonzero off-diagonal entries.
    """
    s = consensus.matrix if isinstance(consensus, ConsensusGraph) else np.asarray(consensus)
    eps = median_threshold(s) if epsilon is None else float(epsilon)
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"threshold must lie in [0, 1), got {eps}")
    lab = s > eps
    lab = lab & lab.T
    np.fill_diagonal(lab, True)
    return PseudoLabels(lab, eps)


def save_matrix_csv(matrix: np.ndarray, path) -> None:
    fmt = "%d" if matrix.dtype == bool else "%.17g"
    np.savetxt(path, matrix.astype(np.int64) if matrix.dtype == bool else matrix, delimiter=",", fmt=fmt)
