"""Principal Neuron Analysis: spectrum-driven, per-layer structured pruning.

A layer whose activation covariance has a nearly uniform eigen-spectrum
keeps its neurons; one whose spectrum collapses onto a single eigenvalue
is mostly redundant. The distance to the uniform spectrum, normalized by
the distance of a point mass from it, gives the raw pruning ratio. Each
view scales its ratios by a logistic factor of its own unbalance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import UnbalanceReport
from .model import AdaMuSModel, StageOrderError
from .numerics import (
    covariance,
    dirac,
    pearson_matrix,
    symmetric_eigenvalues,
    uniform,
    wasserstein_1d,
)


@dataclass
class LayerSpectrumReport:
    view: int
    layer: int
    width: int
    eigenvalues: np.ndarray
    w_to_uniform: float
    normalizer: float
    raw_ratio: float


@dataclass
class LayerPlan:
    view: int
    layer: int
    width: int
    raw_ratio: float
    rate: float
    removed: list
    kept: int
    w_ratio: float


@dataclass
class PrunePlan:
    layers: list
    tau: list
    view_unbalance: list
    rate_cap: float


@dataclass
class PruneReport:
    plan: PrunePlan
    params_before: int
    params_after: int
    flops_before: int
    flops_after: int

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"view": p.view, "layer": p.layer, "width": p.width, "rate": p.rate,
                 "removed": list(p.removed), "w_ratio": p.w_ratio, "kept": p.kept}
                for p in self.plan.layers
            ],
            "tau": list(self.plan.tau),
            "view_unbalance": list(self.plan.view_unbalance),
            "rate_cap": self.plan.rate_cap,
            "params_before": self.params_before,
            "params_after": self.params_after,
            "flops_before": self.flops_before,
            "flops_after": self.flops_after,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def layer_spectrum(activations, view: int = 0, layer: int = 0, eig_method: str = "auto") -> LayerSpectrumReport:
    """Normalized covariance spectrum of a layer and its redundancy ratio."""
    acts = np.asarray(activations, dtype=np.float64)
    n, d = acts.shape
    if d < 2:
        return LayerSpectrumReport(view, layer, d, np.ones(d), 0.0, 0.0, 0.0)
    spec = symmetric_eigenvalues(covariance(acts), method=eig_method).normalize()
    lam = spec.eigenvalues
    w = wasserstein_1d(lam, uniform(d))
    norm = wasserstein_1d(dirac(d), uniform(d))
    ratio = min(max(w / norm, 0.0), 1.0)
    return LayerSpectrumReport(view, layer, d, lam, w, norm, ratio)


def moderating_factor(report: UnbalanceReport, view: int, variant: str = "as_printed") -> float:
    """Logistic moderation of a view's pruning rates by its own unbalance.

    ``"as_printed"`` gives ``2 / (1 + exp(-L))`` in [1, 2); ``"inverted"``
    gives ``2 / (1 + exp(L))`` in (0, 1].
    """
    lam = report.per_view[view]
    if variant == "as_printed":
        return 2.0 / (1.0 + math.exp(-lam))
    if variant == "inverted":
        return 2.0 / (1.0 + math.exp(lam))
    raise ValueError(f"unknown tau variant {variant!r}")


def pruning_rate(spectrum: LayerSpectrumReport, tau: float, rate_cap: float = 0.95) -> float:
    if not 0.0 < rate_cap < 1.0:
        raise ValueError("rate_cap must lie in (0, 1)")
    return min(spectrum.raw_ratio * tau, rate_cap)


def select_neurons(activations, rate: float) -> list:
    """Indices of the floor(rate * D) most correlated neurons.

    A neuron's score is the L1 norm of its Pearson correlations with the
    other neurons; ties go to the lower index. At least one neuron survives.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must lie in [0, 1), got {rate}")
    acts = np.asarray(activations, dtype=np.float64)
    d = acts.shape[1]
    count = min(int(math.floor(rate * d + 1e-12)), d - 1)
    if count <= 0:
        return []
    corr = np.abs(pearson_matrix(acts))
    np.fill_diagonal(corr, 0.0)
    scores = corr.sum(axis=1)
    order = np.lexsort((np.arange(d), -scores))
    return sorted(int(i) for i in order[:count])


# --------------------------------------------------------------------------
# complexity accounting


def dense_params(d_in: int, d_out: int) -> int:
    """Weights plus biases of a dense layer (47 -> 200 gives 9,600)."""
    return (d_in + 1) * d_out


def dense_flops(d_in: int, d_out: int) -> int:
    return 2 * d_in * d_out


def chain_widths(widths) -> tuple:
    """(params, flops) of a chain of dense layers with the given widths."""
    pairs = list(zip(widths, widths[1:]))
    return sum(dense_params(a, b) for a, b in pairs), sum(dense_flops(a, b) for a, b in pairs)


def model_complexity(model: AdaMuSModel) -> tuple:
    params = flops = 0
    for enc in model.encoders:
        widths = [enc.layers[0].d_in] + [l.d_out for l in enc.layers]
        p, f = chain_widths(widths)
        params += p
        flops += f
    return params, flops


# --------------------------------------------------------------------------
# structural pruning


def remove_hidden_neurons(layers, norms, index: int, removed) -> None:
    """Drop neurons of hidden layer ``index`` and the matching downstream inputs."""
    if index >= len(layers) - 1:
        raise ValueError("the output layer is never pruned")
    keep = np.setdiff1d(np.arange(layers[index].d_out), np.asarray(removed, dtype=np.int64))
    if keep.size == 0:
        raise ValueError("pruning would remove every neuron of the layer")
    layers[index].keep_outputs(keep)
    if norms is not None:
        norms[index].keep_channels(keep)
    layers[index + 1].keep_inputs(keep)


def record_hidden_activations(model: AdaMuSModel, dataset, batch_size: int = 1024) -> list:
    """Post-relu outputs of every hidden layer over the full dataset (inference mode)."""
    per_view = [[[] for _ in enc.layers[:-1]] for enc in model.encoders]
    n = dataset.n_samples
    for start in range(0, n, batch_size):
        rec = [[] for _ in model.encoders]
        model.encode([x[start:start + batch_size] for x in dataset.views], train=False, record=rec)
        for v, layers in enumerate(rec):
            for l, a in enumerate(layers):
                per_view[v][l].append(a)
    return [[np.concatenate(chunks) for chunks in layers] for layers in per_view]


def plan_pruning(activations, unbalance: UnbalanceReport, rate_cap: float = 0.95,
                 tau_variant: str = "as_printed", eig_method: str = "auto") -> PrunePlan:
    """Rates and removal sets for every hidden layer, computed once."""
    plans, taus = [], []
    for v, layers in enumerate(activations):
        tau = moderating_factor(unbalance, v, tau_variant)
        taus.append(tau)
        for l, acts in enumerate(layers):
            spec = layer_spectrum(acts, v, l, eig_method)
            rate = pruning_rate(spec, tau, rate_cap) if spec.width >= 2 else 0.0
            removed = select_neurons(acts, rate) if spec.width >= 2 else []
            plans.append(LayerPlan(v, l, spec.width, spec.raw_ratio, rate, removed,
                                   spec.width - len(removed), spec.raw_ratio))
    return PrunePlan(plans, taus, list(unbalance.per_view), rate_cap)


def apply_plan(model: AdaMuSModel, plan: PrunePlan) -> None:
    for p in plan.layers:
        if p.removed:
            enc = model.encoders[p.view]
            remove_hidden_neurons(enc.layers, enc.norms, p.layer, p.removed)


def one_shot_prune(model: AdaMuSModel, dataset, unbalance: UnbalanceReport, rate_cap: float = 0.95,
                   tau_variant: str = "as_printed", eig_method: str = "auto"):
    """Compute all layer rates from one full-data pass, then prune everything at once."""
    if not model.pretrained:
        raise StageOrderError("one-shot pruning requires a pretrained model")
    if len(unbalance.per_view) != len(model.encoders):
        raise ValueError("unbalance report does not match the model's view count")
    params_before, flops_before = model_complexity(model)
    acts = record_hidden_activations(model, dataset)
    plan = plan_pruning(acts, unbalance, rate_cap, tau_variant, eig_method)
    apply_plan(model, plan)
    model.stage = "pruned"
    params_after, flops_after = model_complexity(model)
    return model, PruneReport(plan, params_before, params_after, flops_before, flops_after)
