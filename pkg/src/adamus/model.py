"""Per-view encoders with sparse batch-norm fusion, and the training loops."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .rng import substream
from .tensor_nn import (
    Adam,
    DenseLayer,
    LayerNormState,
    NumericFault,
    contrastive_loss,
    graph_embedding_loss,
)

log = logging.getLogger(__name__)


class StageOrderError(RuntimeError):
    """Raised when a pipeline stage runs before its prerequisite."""


@dataclass
class TrainConfig:
    lr: float = 0.001
    epochs_pre: int = 50
    epochs_fine: int = 50
    batch_size: int = 128
    margin: float = 1.0
    sparsity_weight: float = 1e-3
    aligned_dim: int = 128
    hidden_dims: list = field(default_factory=lambda: [512])
    seed: int = 0
    bn_mode: str = "layerwide"
    loss: str = "contrastive"

    def __post_init__(self):
        for name in ("epochs_pre", "epochs_fine"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.batch_size < 2 or self.aligned_dim < 1:
            raise ValueError("batch_size must be >= 2 and aligned_dim >= 1")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.sparsity_weight < 0:
            raise ValueError("sparsity_weight must be nonnegative")
        if self.bn_mode not in ("layerwide", "per_channel"):
            raise ValueError(f"unknown bn_mode {self.bn_mode!r}")
        if self.loss not in ("contrastive", "graph_embedding"):
            raise ValueError(f"unknown loss {self.loss!r}")

    def hidden_for(self, view: int) -> list:
        """Hidden widths for ``view``: a flat list is shared, a nested list is per view."""
        h = self.hidden_dims
        if h and isinstance(h[0], (list, tuple)):
            return list(h[view])
        return list(h)


@dataclass
class FusedBatch:
    per_view: list
    fused: np.ndarray


class ViewEncoder:
    """Dense -> relu -> BN blocks, then a linear map to the aligned width and MSBN."""

    def __init__(self, layers, norms):
        if len(layers) != len(norms) or not layers:
            raise ValueError("an encoder needs one norm per dense layer")
        self.layers = list(layers)
        self.norms = list(norms)
        self._check()

    def _check(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.d_out != b.d_in:
                raise ValueError("consecutive layer widths do not chain")
        for lay, bn in zip(self.layers, self.norms):
            if lay.d_out != bn.dim:
                raise ValueError("norm width does not match its dense layer")

    @classmethod
    def init(cls, d_in: int, hidden, aligned_dim: int, rng, bn_mode="layerwide") -> "ViewEncoder":
        widths = [d_in] + list(hidden) + [aligned_dim]
        layers, norms = [], []
        for i, (a, b) in enumerate(zip(widths, widths[1:])):
            act = "identity" if i == len(widths) - 2 else "relu"
            layers.append(DenseLayer.init(a, b, act, rng))
            norms.append(LayerNormState(b, mode=bn_mode))
        return cls(layers, norms)

    @property
    def d_in(self) -> int:
        return self.layers[0].d_in

    @property
    def msbn(self) -> LayerNormState:
        return self.norms[-1]

    @property
    def hidden_widths(self) -> list:
        return [lay.d_out for lay in self.layers[:-1]]

    def forward(self, x, train=True, record=None):
        h = x
        for i, (lay, bn) in enumerate(zip(self.layers, self.norms)):
            h = lay.forward(h)
            if record is not None and i < len(self.layers) - 1:
                record.append(h)
            h = bn.forward(h, train)
        return h

    def backward(self, grad):
        for lay, bn in zip(reversed(self.layers), reversed(self.norms)):
            grad = lay.backward(bn.backward(grad))
        return grad

    def to_dict(self) -> dict:
        return {"layers": [l.to_dict() for l in self.layers], "bn": [b.to_dict() for b in self.norms]}

    @classmethod
    def from_dict(cls, d: dict) -> "ViewEncoder":
        return cls([DenseLayer.from_dict(x) for x in d["layers"]], [LayerNormState.from_dict(x) for x in d["bn"]])


class AdaMuSModel:
    def __init__(self, encoders, config: TrainConfig, stage: str = "init"):
        self.encoders = list(encoders)
        self.config = config
        self.stage = stage
        widths = {e.layers[-1].d_out for e in self.encoders}
        if len(widths) != 1:
            raise ValueError(f"all encoders must share the aligned width, got {sorted(widths)}")

    @classmethod
    def init(cls, dims, config: TrainConfig) -> "AdaMuSModel":
        rng = substream(config.seed, "init")
        encs = [ViewEncoder.init(d, config.hidden_for(v), config.aligned_dim, rng, config.bn_mode)
                for v, d in enumerate(dims)]
        return cls(encs, config)

    @property
    def aligned_dim(self) -> int:
        return self.encoders[0].layers[-1].d_out

    @property
    def pretrained(self) -> bool:
        return self.stage != "init"

    def msbn_gammas(self) -> list:
        return [e.msbn.gamma for e in self.encoders]

    # parameters are addressed as "v{view}.l{layer}.{w,b}" and "v{view}.bn{layer}.{gamma,beta}"
    def params(self) -> dict:
        out = {}
        for v, enc in enumerate(self.encoders):
            for i, (lay, bn) in enumerate(zip(enc.layers, enc.norms)):
                out[f"v{v}.l{i}.w"] = lay.weight
                out[f"v{v}.l{i}.b"] = lay.bias
                out[f"v{v}.bn{i}.gamma"] = bn.gamma
                out[f"v{v}.bn{i}.beta"] = bn.beta
        return out

    def grads(self) -> dict:
        out = {}
        for v, enc in enumerate(self.encoders):
            for i, (lay, bn) in enumerate(zip(enc.layers, enc.norms)):
                out[f"v{v}.l{i}.w"] = lay.grads["w"]
                out[f"v{v}.l{i}.b"] = lay.grads["b"]
                out[f"v{v}.bn{i}.gamma"] = bn.grads["gamma"]
                out[f"v{v}.bn{i}.beta"] = bn.grads["beta"]
        return out

    def encode(self, views, train: bool = False, record=None) -> FusedBatch:
        if len(views) != len(self.encoders):
            raise ValueError(f"expected {len(self.encoders)} views, got {len(views)}")
        per_view = []
        for v, (enc, x) in enumerate(zip(self.encoders, views)):
            if x.shape[1] != enc.d_in:
                raise ValueError(f"view {v} has {x.shape[1]} columns, encoder expects {enc.d_in}")
            per_view.append(enc.forward(x, train, None if record is None else record[v]))
        fused = sum(per_view) / len(per_view)
        return FusedBatch(per_view, fused)

    def backward(self, grad_fused: np.ndarray, grad_msbn_gammas=None) -> None:
        share = grad_fused / len(self.encoders)
        for v, enc in enumerate(self.encoders):
            enc.backward(share)
            if grad_msbn_gammas is not None:
                enc.msbn.grads["gamma"] = enc.msbn.grads["gamma"] + grad_msbn_gammas[v]

    def param_count(self) -> int:
        return sum(l.weight.size + l.bias.size for e in self.encoders for l in e.layers)

    def to_dict(self) -> dict:
        return {
            "views": [e.to_dict() for e in self.encoders],
            "config": asdict(self.config),
            "seed": self.config.seed,
            "stage": self.stage,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdaMuSModel":
        cfg = TrainConfig(**d["config"])
        return cls([ViewEncoder.from_dict(x) for x in d["views"]], cfg, d.get("stage", "finetuned"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AdaMuSModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def batch_loss(model: AdaMuSModel, views, targets, config: TrainConfig, train: bool = True):
    """Forward a batch, return the loss, and leave gradients on the model."""
    out = model.encode(views, train=train)
    gammas = model.msbn_gammas()
    if config.loss == "contrastive":
        loss, gz, gg = contrastive_loss(out.fused, targets, config.margin, config.sparsity_weight, gammas)
    else:
        loss, gz, gg = graph_embedding_loss(out.fused, targets, config.sparsity_weight, gammas)
    model.backward(gz, gg)
    return loss


def _targets_matrix(pseudo_labels, similarity, config):
    if config.loss == "contrastive":
        m = getattr(pseudo_labels, "matrix", pseudo_labels)
    else:
        m = getattr(similarity, "matrix", similarity)
        if m is None:
            raise ValueError("graph_embedding loss needs the consensus similarity matrix")
    return np.asarray(m)


def _train(model, dataset, pseudo_labels, config, epochs, stage, similarity=None):
    targets = _targets_matrix(pseudo_labels, similarity, config)
    n = dataset.n_samples
    if targets.shape != (n, n):
        raise ValueError(f"pair targets must be {n}x{n}, got {targets.shape}")
    targets = targets.astype(np.float64)
    rng = substream(config.seed, f"shuffle.{stage}")
    opt = Adam(lr=config.lr)
    n_batches = max(1, -(-n // config.batch_size))
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        losses = []
        for b, idx in enumerate(np.array_split(order, n_batches)):
            views = [x[idx] for x in dataset.views]
            loss = batch_loss(model, views, targets[np.ix_(idx, idx)], config)
            if not np.isfinite(loss):
                raise NumericFault(f"{stage}: non-finite loss at epoch {epoch + 1}, batch {b}")
            try:
                opt.step(model.params(), model.grads())
            except NumericFault as exc:
                raise NumericFault(f"{stage}: {exc} at epoch {epoch + 1}, batch {b}") from exc
            losses.append(loss)
        history.append(float(np.mean(losses)))
        log.debug("%s epoch %d loss %.6f", stage, epoch + 1, history[-1])
    return history


def pretrain(model: AdaMuSModel, dataset, pseudo_labels, config: TrainConfig, similarity=None):
    """Stage 1: contrastive training of the dense encoders. Returns (model, losses)."""
    hist = _train(model, dataset, pseudo_labels, config, config.epochs_pre, "pretrain", similarity)
    model.stage = "pretrained"
    return model, hist


def finetune(model: AdaMuSModel, dataset, pseudo_labels, config: TrainConfig, similarity=None):
    """Stage 3: same objective on the (pruned) encoders."""
    if not model.pretrained:
        raise StageOrderError("finetune requires a pretrained model")
    hist = _train(model, dataset, pseudo_labels, config, config.epochs_fine, "finetune", similarity)
    model.stage = "finetuned"
    return model, hist


def extract_representations(model: AdaMuSModel, dataset, batch_size: int = 1024) -> np.ndarray:
    """Fused embeddings of every sample in inference mode, row order preserved."""
    n = dataset.n_samples
    chunks = []
    for start in range(0, n, batch_size):
        views = [x[start:start + batch_size] for x in dataset.views]
        chunks.append(model.encode(views, train=False).fused)
    return np.concatenate(chunks, axis=0)


def save_loss_csv(history, path) -> None:
    lines = ["epoch,loss"] + [f"{i + 1},{v!r}" for i, v in enumerate(history)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
