"""Multi-view representation learning for dimensionally unbalanced views.

View-specific encoders map each view to a shared width; a sparse batch-norm
layer fuses them, spectral pruning trims redundant hidden neurons, and
consensus KNN graphs supply self-supervised pair labels.
"""

from .config import RunConfig, load_config
from .data import MultiViewDataset, ToySpec, generate_toy, generate_uci_like, load_csv_dataset, unbalance_degree
from .pipeline import PipelineError, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "MultiViewDataset",
    "PipelineError",
    "RunConfig",
    "ToySpec",
    "generate_toy",
    "generate_uci_like",
    "load_config",
    "load_csv_dataset",
    "run_pipeline",
    "unbalance_degree",
]
