"""Minimal differentiable building blocks with explicit backward passes.

Every layer caches what it needs during ``forward`` and returns the input
gradient from ``backward``; parameter gradients are stored on the layer in
``grads`` under the same names as ``params``.
"""

from __future__ import annotations

import math

import numpy as np


class NumericFault(FloatingPointError):
    """Raised when a NaN/inf shows up in a loss or gradient."""


class DegenerateBatchError(ValueError):
    pass


# --------------------------------------------------------------------------
# Layers


class DenseLayer:
    """Affine map ``x @ W.T + b`` followed by relu or identity."""

    def __init__(self, weight, bias, activation: str = "relu"):
        if activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {activation!r}")
        self.weight = np.array(weight, dtype=np.float64)
        self.bias = np.array(bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("weight must be (D_out, D_in) and bias (D_out,)")
        self.activation = activation
        self.grads = {}
        self._x = None
        self._pre = None

    @classmethod
    def init(cls, d_in: int, d_out: int, activation: str, rng: np.random.Generator) -> "DenseLayer":
        w = rng.normal(0.0, math.sqrt(2.0 / d_in), size=(d_out, d_in))
        return cls(w, np.zeros(d_out), activation)

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    @property
    def params(self) -> dict:
        return {"w": self.weight, "b": self.bias}

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ValueError(f"expected input with {self.d_in} columns, got shape {x.shape}")
        pre = x @ self.weight.T + self.bias
        self._x, self._pre = x, pre
        if self.activation == "relu":
            return np.maximum(pre, 0.0)
        return pre

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        g = grad_out
        if self.activation == "relu":
            g = g * (self._pre > 0)
        self.grads = {"w": g.T @ self._x, "b": g.sum(axis=0)}
        return g @ self.weight

    def keep_outputs(self, keep: np.ndarray) -> None:
        self.weight = self.weight[keep].copy()
        self.bias = self.bias[keep].copy()

    def keep_inputs(self, keep: np.ndarray) -> None:
        self.weight = self.weight[:, keep].copy()

    def to_dict(self) -> dict:
        return {"w": self.weight.tolist(), "b": self.bias.tolist(), "act": self.activation}

    @classmethod
    def from_dict(cls, d: dict) -> "DenseLayer":
        w = np.array(d["w"], dtype=np.float64)
        if w.ndim == 1:
            w = w.reshape(len(d["b"]), -1)
        return cls(w, d["b"], d["act"])


class LayerNormState:
    """Batch normalization with one mean/variance shared by the whole layer.

    ``mode="layerwide"`` pools statistics over samples and channels;
    ``mode="per_channel"`` is the conventional per-feature variant.
    Scale and shift stay per channel in both modes.
    """

    def __init__(self, dim: int, eps: float = 1e-5, momentum: float = 0.1, mode: str = "layerwide"):
        if eps <= 0:
            raise ValueError("eps must be positive")
        if not 0.0 < momentum < 1.0:
            raise ValueError("momentum must lie in (0, 1)")
        if mode not in ("layerwide", "per_channel"):
            raise ValueError(f"unknown bn mode {mode!r}")
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.mode = mode
        shape = () if mode == "layerwide" else (dim,)
        self.running_mean = np.zeros(shape)
        self.running_var = np.ones(shape)
        self.eps = eps
        self.momentum = momentum
        self.grads = {}
        self._cache = None

    @property
    def dim(self) -> int:
        return self.gamma.size

    @property
    def params(self) -> dict:
        return {"gamma": self.gamma, "beta": self.beta}

    def _axes(self):
        return None if self.mode == "layerwide" else 0

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"expected input with {self.dim} columns, got shape {x.shape}")
        if train:
            count = x.size if self.mode == "layerwide" else x.shape[0]
            if count < 2:
                raise DegenerateBatchError("batch normalization needs at least 2 entries per statistic")
            mu = x.mean(axis=self._axes())
            var = x.var(axis=self._axes())
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mu
            self.running_var = (1 - m) * self.running_var + m * var
        else:
            mu, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        self._cache = (xhat, inv, train)
        return xhat * self.gamma + self.beta

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        xhat, inv, train = self._cache
        self.grads = {"gamma": np.sum(grad_out * xhat, axis=0), "beta": grad_out.sum(axis=0)}
        gx = grad_out * self.gamma
        if not train:
            return gx * inv
        axes = self._axes()
        mean_g = gx.mean(axis=axes)
        mean_gx = (gx * xhat).mean(axis=axes)
        return inv * (gx - mean_g - xhat * mean_gx)

    def keep_channels(self, keep: np.ndarray) -> None:
        self.gamma = self.gamma[keep].copy()
        self.beta = self.beta[keep].copy()
        if self.mode == "per_channel":
            self.running_mean = self.running_mean[keep].copy()
            self.running_var = self.running_var[keep].copy()

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma.tolist(),
            "beta": self.beta.tolist(),
            "rm": np.asarray(self.running_mean).tolist(),
            "rv": np.asarray(self.running_var).tolist(),
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, d: dict, eps: float = 1e-5, momentum: float = 0.1) -> "LayerNormState":
        mode = d.get("mode", "layerwide")
        bn = cls(len(d["gamma"]), eps=eps, momentum=momentum, mode=mode)
        bn.gamma = np.array(d["gamma"], dtype=np.float64)
        bn.beta = np.array(d["beta"], dtype=np.float64)
        bn.running_mean = np.array(d["rm"], dtype=np.float64)
        bn.running_var = np.array(d["rv"], dtype=np.float64)
        return bn


# --------------------------------------------------------------------------
# Losses


def l1_penalty(gammas, weight: float):
    """``weight * sum |gamma|`` and its subgradient (0 at exactly 0)."""
    loss = weight * math.fsum(float(np.abs(g).sum()) for g in gammas)
    return loss, [weight * np.sign(g) for g in gammas]


def pairwise_distances(z: np.ndarray) -> np.ndarray:
    sq = np.sum(z * z, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (z @ z.T)
    d2 = np.maximum(0.5 * (d2 + d2.T), 0.0)
    np.fill_diagonal(d2, 0.0)
    return d2


def _pair_gradient(z: np.ndarray, coef: np.ndarray) -> np.ndarray:
    # d/dz_i of sum_ij f(z_i - z_j) where df = coef_ij * (z_i - z_j)
    c = coef + coef.T
    return c.sum(axis=1)[:, None] * z - c @ z


def contrastive_loss(z, labels, margin: float = 1.0, sparsity_weight: float = 0.0, gammas=()):
    """Margin contrastive loss over all ordered pairs of a batch plus an L1 term.

    Returns ``(loss, grad_z, grad_gammas)``. ``labels`` is the binary
    pairwise matrix (1 = positive pair).
    """
    z = np.asarray(z, dtype=np.float64)
    l = np.asarray(labels, dtype=np.float64)
    n = z.shape[0]
    if l.shape != (n, n):
        raise ValueError(f"label matrix must be {n}x{n}, got {l.shape}")
    if margin <= 0:
        raise ValueError("margin must be positive")
    d2 = pairwise_distances(z)
    d = np.sqrt(d2)
    hinge = np.maximum(margin - d, 0.0)
    terms = (1.0 - l) * hinge ** 2 + l * d2
    scale = 1.0 / (2.0 * n)
    loss = scale * float(terms.sum())

    safe = np.where(d > 0, d, 1.0)
    neg = np.where(d > 0, -2.0 * hinge / safe, 0.0)
    coef = 2.0 * l + (1.0 - l) * neg
    grad_z = scale * _pair_gradient(z, coef)

    pen, grad_g = l1_penalty(gammas, sparsity_weight)
    return loss + pen, grad_z, grad_g


def graph_embedding_loss(z, similarity, sparsity_weight: float = 0.0, gammas=()):
    """Similarity-weighted squared distances, ``1/(2N) sum S_ij |z_i - z_j|^2`` plus L1."""
    z = np.asarray(z, dtype=np.float64)
    s = np.asarray(similarity, dtype=np.float64)
    n = z.shape[0]
    if s.shape != (n, n):
        raise ValueError(f"similarity must be {n}x{n}, got {s.shape}")
    scale = 1.0 / (2.0 * n)
    loss = scale * float(np.sum(pairwise_distances(z) * s))
    grad_z = scale * _pair_gradient(z, 2.0 * s)
    pen, grad_g = l1_penalty(gammas, sparsity_weight)
    return loss + pen, grad_z, grad_g


def softmax_cross_entropy(logits: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradient wrt the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -float(logp[np.arange(n), y].mean())
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    return loss, grad / n


# --------------------------------------------------------------------------
# Optimizer


class Adam:
    """Bias-corrected Adam over a dict of named arrays, updated in place."""

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {}
        self.v = {}

    def step(self, params: dict, grads: dict) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericFault(f"non-finite gradient in parameter {name!r}")
            if g.shape != params[name].shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {params[name].shape}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, g in grads.items():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
