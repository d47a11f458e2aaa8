"""Run configuration: schema, defaults, file loading and dotted-path overrides."""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .data import ToySpec
from .model import TrainConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PnaSection(_Strict):
    enabled: bool = True
    rate_cap: float = Field(0.95, gt=0.0, lt=1.0)
    tau_variant: Literal["as_printed", "inverted"] = "as_printed"


class GraphSection(_Strict):
    # k is clipped to N - 1 at run time
    k: int = Field(100, ge=1)
    # "unanimous": 1 - 1/V, so a pair is positive only when every view links it;
    # "median": median of nonzero consensus entries; "fixed": use `epsilon`
    epsilon_mode: Literal["median", "unanimous", "fixed"] = "unanimous"
    epsilon: Optional[float] = Field(None, ge=0.0, lt=1.0)
    kernel_sigma_mode: Literal["mean_sq_dist", "mean_dist"] = "mean_sq_dist"
    export: bool = False


class EvalSection(_Strict):
    task: Literal["clustering", "classification", "both"] = "both"
    restarts: int = Field(10, ge=1)
    runs: int = Field(5, ge=1)
    test_fraction: float = Field(0.2, gt=0.0, lt=1.0)


class ToySection(_Strict):
    n_samples: int = Field(1500, ge=3)
    view_dims: List[int] = [3000, 10]
    noise_stds: List[float] = [0.2, 0.75]
    c3_shares_c2_block: bool = True


class RunConfig(_Strict):
    dataset: str = "toy"
    output_dir: str = "runs/latest"
    seed: int = 0

    lr: float = Field(0.001, gt=0.0)
    epochs_pre: int = Field(50, ge=0)
    epochs_fine: int = Field(50, ge=0)
    batch_size: int = Field(128, ge=2)
    margin: float = Field(1.0, gt=0.0)
    sparsity_weight: float = Field(1e-3, ge=0.0)
    aligned_dim: int = Field(128, ge=1)
    hidden_dims: Union[List[int], List[List[int]]] = [512]
    bn_mode: Literal["layerwide", "per_channel"] = "layerwide"
    loss: Literal["contrastive", "graph_embedding"] = "contrastive"

    pna: PnaSection = PnaSection()
    graph: GraphSection = GraphSection()
    eval: EvalSection = EvalSection()
    toy: ToySection = ToySection()
    baseline: bool = False

    @model_validator(mode="after")
    def _fixed_needs_value(self):
        if self.graph.epsilon_mode == "fixed" and self.graph.epsilon is None:
            raise ValueError("graph.epsilon_mode 'fixed' requires graph.epsilon")
        return self

    @field_validator("hidden_dims")
    @classmethod
    def _positive_widths(cls, v):
        flat = [x for row in v for x in (row if isinstance(row, list) else [row])]
        if any(x < 1 for x in flat):
            raise ValueError("hidden widths must be positive")
        return v

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            epochs_pre=self.epochs_pre,
            epochs_fine=self.epochs_fine,
            batch_size=self.batch_size,
            margin=self.margin,
            sparsity_weight=self.sparsity_weight,
            aligned_dim=self.aligned_dim,
            hidden_dims=[list(h) if isinstance(h, list) else h for h in self.hidden_dims],
            seed=self.seed,
            bn_mode=self.bn_mode,
            loss=self.loss,
        )

    def toy_spec(self) -> ToySpec:
        t = self.toy
        return ToySpec(n_samples=t.n_samples, view_dims=tuple(t.view_dims), noise_stds=tuple(t.noise_stds),
                       c3_shares_c2_block=t.c3_shares_c2_block, seed=self.seed)


def parse_value(text: str):
    """CLI override values: JSON when it parses (numbers, bools, lists), else a bare string."""
    low = text.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: dict) -> dict:
    """Set dotted keys (``pna.enabled``) in a nested dict, creating sections as needed."""
    out = json.loads(json.dumps(raw))
    for dotted, value in overrides.items():
        node = out
        parts = dotted.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ValueError(f"cannot set {dotted!r}: {p!r} is not a section")
        node[parts[-1]] = value
    return out


def load_config(path=None, overrides=None) -> RunConfig:
    raw = {}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if overrides:
        raw = apply_overrides(raw, overrides)
    return RunConfig.model_validate(raw)
