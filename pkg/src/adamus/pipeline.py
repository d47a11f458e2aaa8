"""End-to-end training run: graphs, pretraining, pruning, finetuning, evaluation.

Every stage writes its artifacts as soon as it finishes, so a failed run
leaves everything produced up to the failing stage in ``output_dir``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig
from .data import MultiViewDataset, generate_toy, generate_uci_like, load_csv_dataset, standardize, unbalance_degree
from .evaluation import evaluate_clustering, linear_probe, stratified_split, summarize
from .graph_ssl import PseudoLabels, build_view_graph, fit_consensus, make_pseudo_labels, save_matrix_csv
from .model import AdaMuSModel, extract_representations, finetune, pretrain, save_loss_csv
from .pna import PrunePlan, PruneReport, model_complexity, one_shot_prune

log = logging.getLogger(__name__)

NMI_NORMALIZATION = "arithmetic"


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunResult:
    output_dir: Path
    model: AdaMuSModel
    prune_report: PruneReport
    metrics: dict = field(default_factory=dict)
    baseline_metrics: dict = field(default_factory=dict)
    pseudo_labels: Optional[PseudoLabels] = None


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


def write_json(obj, path) -> None:
    """Deterministic JSON: sorted keys, repr-exact floats, trailing newline."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# stages


def load_dataset(cfg: RunConfig) -> MultiViewDataset:
    """Raw (unstandardized) dataset named by ``cfg.dataset``."""
    if cfg.dataset == "toy":
        return generate_toy(cfg.toy_spec())[0]
    if cfg.dataset == "uci-like":
        return generate_uci_like(seed=cfg.seed)
    return load_csv_dataset(cfg.dataset)


def concatenated(ds: MultiViewDataset) -> MultiViewDataset:
    return MultiViewDataset((np.hstack(ds.views),), ds.labels, ("concat",))


def resolve_epsilon(cfg: RunConfig, n_views: int) -> Optional[float]:
    mode = cfg.graph.epsilon_mode
    if mode == "fixed":
        return cfg.graph.epsilon
    if mode == "unanimous":
        return 1.0 - 1.0 / n_views
    return None


def build_pseudo_labels(ds: MultiViewDataset, cfg: RunConfig):
    """Per-view KNN graphs, their consensus, and thresholded pair labels."""
    k = min(cfg.graph.k, ds.n_samples - 1)
    graphs = [build_view_graph(x, k, cfg.graph.kernel_sigma_mode) for x in ds.views]
    consensus = fit_consensus(graphs)
    return consensus, make_pseudo_labels(consensus, resolve_epsilon(cfg, ds.n_views))


def identity_report(model: AdaMuSModel) -> PruneReport:
    params, flops = model_complexity(model)
    return PruneReport(PrunePlan([], [], [], 0.0), params, params, flops, flops)


def complexity_summary(report: PruneReport) -> dict:
    return {
        "params_before": report.params_before,
        "params_after": report.params_after,
        "flops_before": report.flops_before,
        "flops_after": report.flops_after,
    }


def evaluate_embeddings(z: np.ndarray, labels: np.ndarray, cfg: RunConfig, complexity: dict) -> dict:
    """RunMetrics per requested task, keyed by task name."""
    e = cfg.eval
    out = {}
    meta = {"runs": e.runs, "seed": cfg.seed}
    k = int(np.unique(labels).size)
    if e.task in ("clustering", "both"):
        res = [evaluate_clustering(z, labels, k, e.restarts, cfg.seed, run=r) for r in range(e.runs)]
        out["clustering"] = {
            "task": "clustering",
            "acc": summarize([r.acc for r in res]),
            "nmi": summarize([r.nmi for r in res]),
            "ari": summarize([r.ari for r in res]),
            "f1": None,
            "complexity": complexity,
            "meta": dict(meta, restarts=e.restarts, k=k, nmi_normalization=NMI_NORMALIZATION),
        }
    if e.task in ("classification", "both"):
        res = []
        for r in range(e.runs):
            tr, te = stratified_split(labels, e.test_fraction, cfg.seed, run=r)
            res.append(linear_probe(z[tr], labels[tr], z[te], labels[te], cfg.seed, run=r))
        out["classification"] = {
            "task": "classification",
            "acc": summarize([r.acc for r in res]),
            "nmi": None,
            "ari": None,
            "f1": summarize([r.macro_f1 for r in res]),
            "complexity": complexity,
            "meta": dict(meta, test_fraction=e.test_fraction),
        }
    return out


def _write_metrics(metrics: dict, out: Path) -> None:
    for task, m in metrics.items():
        write_json(m, out / f"metrics_{task}.json")


def _train_and_evaluate(ds, cfg: RunConfig, out: Path, prune: bool, prefix: str = ""):
    """Shared body of the main run and the baseline run."""
    tcfg = cfg.train_config()
    with _Stage(prefix + "graph"):
        consensus, labels = build_pseudo_labels(ds, cfg)
        log.info("pseudo-label threshold %.4g, positive fraction %.4f", labels.threshold, labels.positive_fraction())
        if cfg.graph.export:
            save_matrix_csv(consensus.matrix, out / "S.csv")
            save_matrix_csv(labels.matrix, out / "l.csv")

    with _Stage(prefix + "pretrain"):
        model = AdaMuSModel.init(ds.dims, tcfg)
        model, hist = pretrain(model, ds, labels, tcfg, consensus)
        save_loss_csv(hist, out / "loss_pretrain.csv")

    with _Stage(prefix + "prune"):
        if prune:
            unbalance = unbalance_degree(ds.dims, tcfg.aligned_dim)
            model, report = one_shot_prune(model, ds, unbalance, cfg.pna.rate_cap, cfg.pna.tau_variant)
        else:
            report = identity_report(model)
            model.stage = "pruned"
        report.save(out / "prune_report.json")

    with _Stage(prefix + "finetune"):
        model, hist = finetune(model, ds, labels, tcfg, consensus)
        save_loss_csv(hist, out / "loss_finetune.csv")
        model.save(out / "checkpoint.json")

    metrics = {}
    with _Stage(prefix + "evaluate"):
        z = extract_representations(model, ds)
        np.savetxt(out / "embeddings.csv", z, delimiter=",", fmt="%.17g")
        if ds.labels is None:
            log.warning("dataset has no labels; skipping metrics")
        else:
            metrics = evaluate_embeddings(z, ds.labels, cfg, complexity_summary(report))
            _write_metrics(metrics, out)
    return model, report, labels, metrics


def run_pipeline(cfg: RunConfig) -> RunResult:
    """Run every stage for ``cfg`` and write artifacts under ``cfg.output_dir``."""
    out = Path(cfg.output_dir)
    with _Stage("setup"):
        out.mkdir(parents=True, exist_ok=True)
        write_json(cfg.model_dump(mode="json"), out / "config.resolved.json")

    with _Stage("data"):
        ds = standardize(load_dataset(cfg))

    model, report, labels, metrics = _train_and_evaluate(ds, cfg, out, cfg.pna.enabled)
    result = RunResult(out, model, report, metrics, pseudo_labels=labels)

    if cfg.baseline:
        with _Stage("baseline"):
            base_dir = out / "baseline"
            base_dir.mkdir(exist_ok=True)
        _, _, _, result.baseline_metrics = _train_and_evaluate(concatenated(ds), cfg, base_dir, False, "baseline.")
    return result


def evaluate_run_dir(run_dir) -> dict:
    """Recompute metrics from a run directory's resolved config and checkpoint."""
    run_dir = Path(run_dir)
    with _Stage("load"):
        cfg = RunConfig.model_validate(json.loads((run_dir / "config.resolved.json").read_text(encoding="utf-8")))
        model = AdaMuSModel.load(run_dir / "checkpoint.json")
        report = json.loads((run_dir / "prune_report.json").read_text(encoding="utf-8"))
    with _Stage("data"):
        ds = standardize(load_dataset(cfg))
        if ds.labels is None:
            raise ValueError("dataset has no labels to evaluate against")
    with _Stage("evaluate"):
        z = extract_representations(model, ds)
        complexity = {k: report[k] for k in ("params_before", "params_after", "flops_before", "flops_after")}
        metrics = evaluate_embeddings(z, ds.labels, cfg, complexity)
        _write_metrics(metrics, run_dir)
    return metrics
