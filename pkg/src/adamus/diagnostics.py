"""Toy-dataset diagnostics: overfitting of an expanding head, sparse alignment, baseline gap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import RunConfig
from .data import ToySpec, generate_toy, standardize, unbalance_degree
from .evaluation import stratified_split
from .pipeline import build_pseudo_labels
from .model import AdaMuSModel, extract_representations, finetune, pretrain
from .pna import layer_spectrum, moderating_factor, one_shot_prune, pruning_rate, remove_hidden_neurons, select_neurons
from .rng import substream
from .tensor_nn import Adam, DenseLayer, softmax_cross_entropy


def ls_slope(values) -> float:
    """Least-squares slope of ``values`` against their index."""
    v = np.asarray(values, dtype=np.float64)
    t = np.arange(v.size, dtype=np.float64)
    t -= t.mean()
    return float(np.dot(t, v - v.mean()) / np.dot(t, t))


# --------------------------------------------------------------------------
# overfitting of a dimension-expanding classifier head


@dataclass
class OverfitResult:
    dense_val: np.ndarray
    pruned_val: np.ndarray
    pruned_widths: list

    def tail_mean(self, curve, n=10) -> float:
        return float(np.mean(curve[-n:]))

    def last_third_slope(self, curve) -> float:
        return ls_slope(curve[-max(2, len(curve) // 3):])

    @property
    def passed(self) -> bool:
        return (self.tail_mean(self.pruned_val) <= self.tail_mean(self.dense_val)
                and self.last_third_slope(self.dense_val) >= 0.0 >= self.last_third_slope(self.pruned_val))


def _train_head(x, y, tr, va, widths, seed, epochs, prune_at, tau, rate_cap, batch_size=128, lr=1e-3):
    rng = substream(seed, "init")
    layers = [DenseLayer.init(a, b, "relu" if i < len(widths) - 2 else "identity", rng)
              for i, (a, b) in enumerate(zip(widths, widths[1:]))]
    shuffle = substream(seed, "shuffle.head")
    opt = Adam(lr)

    def forward(a):
        for lay in layers:
            a = lay.forward(a)
        return a

    val = []
    n_batches = max(1, -(-tr.size // batch_size))
    for epoch in range(epochs):
        if prune_at is not None and epoch == prune_at:
            acts, a = [], x[tr]
            for lay in layers[:-1]:
                a = lay.forward(a)
                acts.append(a)
            removals = [select_neurons(h, pruning_rate(layer_spectrum(h), tau, rate_cap)) for h in acts]
            for i, removed in enumerate(removals):
                if removed:
                    remove_hidden_neurons(layers, None, i, removed)
            opt = Adam(lr)  # parameter shapes changed
        for idx in np.array_split(shuffle.permutation(tr), n_batches):
            _, g = softmax_cross_entropy(forward(x[idx]), y[idx])
            for lay in reversed(layers):
                g = lay.backward(g)
            params = {f"{i}.{k}": p for i, lay in enumerate(layers) for k, p in lay.params.items()}
            grads = {f"{i}.{k}": g_ for i, lay in enumerate(layers) for k, g_ in lay.grads.items()}
            opt.step(params, grads)
        val.append(softmax_cross_entropy(forward(x[va]), y[va])[0])
    return np.array(val), [lay.d_out for lay in layers[:-1]]


def overfitting_study(seed: int = 0, epochs: int = 60, hidden=(1024, 512), prune_after: int = 5,
                      rate_cap: float = 0.95, view: int = 1) -> OverfitResult:
    """Dense vs PNA-pruned softmax head trained on one toy view (default: the low-dim one)."""
    ds, _ = generate_toy(ToySpec(seed=seed))
    x = standardize(ds).views[view]
    y = ds.labels
    tr, va = stratified_split(y, 0.2, seed)
    tau = moderating_factor(unbalance_degree(ds.dims), view)
    widths = [x.shape[1], *hidden, int(np.unique(y).size)]
    dense, _ = _train_head(x, y, tr, va, widths, seed, epochs, None, tau, rate_cap)
    pruned, kept = _train_head(x, y, tr, va, widths, seed, epochs, prune_after, tau, rate_cap)
    return OverfitResult(dense, pruned, kept)


# --------------------------------------------------------------------------
# sparse alignment of the low-dimensional view


@dataclass
class AlignmentResult:
    gamma_abs: np.ndarray  # |gamma| of the view's MSBN per aligned dim
    latent_of_dim: np.ndarray  # matched latent dim per aligned dim
    masked_latent: np.ndarray

    @property
    def masked_mean(self) -> float:
        return float(self.gamma_abs[np.isin(self.latent_of_dim, self.masked_latent)].mean())

    @property
    def unmasked_mean(self) -> float:
        return float(self.gamma_abs[~np.isin(self.latent_of_dim, self.masked_latent)].mean())

    @property
    def passed(self) -> bool:
        return self.masked_mean < self.unmasked_mean


def match_dims_to_latent(z: np.ndarray, latent: np.ndarray) -> np.ndarray:
    """One-to-one assignment of aligned dims to latent dims maximizing total |correlation|."""
    zc = (z - z.mean(0)) / np.where(z.std(0) > 0, z.std(0), 1.0)
    lc = (latent - latent.mean(0)) / np.where(latent.std(0) > 0, latent.std(0), 1.0)
    corr = np.abs(zc.T @ lc) / z.shape[0]
    rows, cols = linear_sum_assignment(corr, maximize=True)
    out = np.full(z.shape[1], -1, dtype=np.int64)
    out[rows] = cols
    return out


def sparse_alignment_study(seed: int = 0, aligned_dim: int = 9, view: int = 1, **overrides) -> AlignmentResult:
    """Run the full pipeline on the toy with H = latent width and compare |gamma| on masked vs visible latent dims."""
    cfg = RunConfig(seed=seed, aligned_dim=aligned_dim, **overrides)
    ds, truth = generate_toy(cfg.toy_spec())
    ds = standardize(ds)
    tcfg = cfg.train_config()
    consensus, labels = build_pseudo_labels(ds, cfg)
    model, _ = pretrain(AdaMuSModel.init(ds.dims, tcfg), ds, labels, tcfg, consensus)
    if cfg.pna.enabled:
        model, _ = one_shot_prune(model, ds, unbalance_degree(ds.dims, aligned_dim), cfg.pna.rate_cap,
                                  cfg.pna.tau_variant)
    model, _ = finetune(model, ds, labels, tcfg, consensus)
    z = extract_representations(model, ds)
    return AlignmentResult(np.abs(model.encoders[view].msbn.gamma.copy()),
                           match_dims_to_latent(z, truth.latent), truth.masked_dims(view))
