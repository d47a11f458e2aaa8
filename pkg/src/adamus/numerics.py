"""Small linear-algebra and statistics kernels used by pruning and evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DegenerateInputError(ValueError):
    """Raised when an input has too few rows/entries for the statistic."""


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        if self.eigenvalues.ndim != 1 or self.eigenvalues.size < 1:
            raise ValueError("spectrum needs at least one eigenvalue")

    def normalize(self) -> "Spectrum":
        total = float(self.eigenvalues.sum())
        if total <= 0.0:
            # all-zero spectrum: no variance at all, treat as uniform
            d = self.eigenvalues.size
            return Spectrum(np.full(d, 1.0 / d), normalized=True)
        return Spectrum(self.eigenvalues / total, normalized=True)


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    return a


def covariance(activations) -> np.ndarray:
    """Sample covariance of the columns (divisor N-1)."""
    a = _as_matrix(activations)
    n = a.shape[0]
    if n < 2:
        raise DegenerateInputError("covariance needs at least 2 rows")
    centered = a - a.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    return 0.5 * (cov + cov.T)


def jacobi_eigenvalues(m: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all (p, q) pairs in row order until the off-diagonal
    Frobenius norm drops below ``tol`` (relative to the full norm) or
    ``max_sweeps`` is reached.
    """
    a = np.array(m, dtype=np.float64, copy=True)
    n = a.shape[0]
    if n == 1:
        return a[0].copy()
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = math.sqrt(max(float(np.sum(a * a) - np.sum(np.diag(a) ** 2)), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            row = a[p]
            qs = np.nonzero(np.abs(row[p + 1:]) > 1e-300)[0] + p + 1
            for q in qs:
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app, aqq = a[p, p], a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                if abs(theta) > 1e150:  # theta**2 would overflow; t ~ 1 / (2 theta)
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p].copy()
                rq = a[q]
                a[p] = c * rp - s * rq
                a[q] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
    return np.diag(a).copy()


# Above this size the pure-python rotation loop is too slow for the
# full-dataset spectra; LAPACK's symmetric solver is used instead.
JACOBI_MAX_DIM = 128


def symmetric_eigenvalues(m, method: str = "auto", symmetry_tol: float = 1e-9) -> Spectrum:
    """All eigenvalues of a symmetric matrix, clamped at 0 and sorted descending.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    ``JACOBI_MAX_DIM``).
    """
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > symmetry_tol * max(1.0, float(np.max(np.abs(a)))):
        raise ValueError(f"matrix is not symmetric (max |a - a^T| = {asym:.3g})")
    a = 0.5 * (a + a.T)
    if method == "auto":
        method = "jacobi" if a.shape[0] <= JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        vals = jacobi_eigenvalues(a)
    elif method == "lapack":
        vals = np.linalg.eigvalsh(a)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    vals = np.clip(vals, 0.0, None)
    return Spectrum(np.sort(vals)[::-1].copy())


def pearson_matrix(activations) -> np.ndarray:
    """Pairwise Pearson correlation of the columns.

    Constant columns correlate 0 with everything else and 1 with themselves.
    """
    a = _as_matrix(activations)
    n, d = a.shape
    if n < 2:
        raise DegenerateInputError("correlation needs at least 2 rows")
    centered = a - a.mean(axis=0)
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    scale = np.maximum(np.abs(a).max(axis=0), 1.0)
    live = norms > 1e-12 * scale * math.sqrt(n)
    corr = np.zeros((d, d))
    if np.any(live):
        c = centered[:, live] / norms[live]
        sub = c.T @ c
        corr[np.ix_(live, live)] = 0.5 * (sub + sub.T)
    np.clip(corr, -1.0, 1.0, out=corr)
    np.fill_diagonal(corr, 1.0)
    return corr


def _check_distribution(p: np.ndarray, name: str) -> None:
    if p.ndim != 1 or p.size < 1:
        raise ValueError(f"{name} must be a non-empty vector")
    if np.any(p < 0) or abs(math.fsum(p) - 1.0) > 1e-9:
        raise ValueError(f"{name} must be a normalized nonnegative distribution")


def wasserstein_1d(p, q) -> float:
    """W1 distance between two distributions on the support 1..D (unit spacing)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_distribution(p, "p")
    _check_distribution(q, "q")
    if p.size != q.size:
        raise ValueError(f"support length mismatch: {p.size} vs {q.size}")
    # difference of CDFs accumulated directly keeps p == q at exactly 0
    diff = np.cumsum(p - q)
    return math.fsum(np.abs(diff[:-1]))


def dirac(d: int) -> np.ndarray:
    out = np.zeros(d)
    out[0] = 1.0
    return out


def uniform(d: int) -> np.ndarray:
    return np.full(d, 1.0 / d)
