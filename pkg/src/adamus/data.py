"""Multi-view datasets: CSV ingestion, standardization, unbalance metric, toy generators."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .rng import substream


class DatasetError(ValueError):
    """Raised when a dataset directory cannot be ingested."""


@dataclass(frozen=True)
class MultiViewDataset:
    views: tuple
    labels: Optional[np.ndarray] = None
    view_names: tuple = ()

    def __post_init__(self):
        views = tuple(np.asarray(v, dtype=np.float64) for v in self.views)
        if len(views) < 1:
            raise ValueError("a dataset needs at least one view")
        n = views[0].shape[0]
        for k, v in enumerate(views):
            if v.ndim != 2 or v.shape[1] < 1:
                raise ValueError(f"view {k} must be a 2-D matrix with >= 1 column")
            if v.shape[0] != n:
                raise ValueError(f"view {k} has {v.shape[0]} rows, expected {n}")
            v.setflags(write=False)
        object.__setattr__(self, "views", views)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (n,):
                raise ValueError(f"expected {n} labels, got shape {labels.shape}")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        names = tuple(self.view_names) or tuple(f"view_{k}" for k in range(len(views)))
        if len(names) != len(views):
            raise ValueError("view_names length must match the number of views")
        object.__setattr__(self, "view_names", names)

    @property
    def n_samples(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list:
        return [v.shape[1] for v in self.views]

    @property
    def n_classes(self) -> Optional[int]:
        if self.labels is None:
            return None
        return int(np.unique(self.labels).size)

    def take(self, rows) -> "MultiViewDataset":
        rows = np.asarray(rows)
        labels = None if self.labels is None else self.labels[rows]
        return MultiViewDataset(tuple(v[rows] for v in self.views), labels, self.view_names)


# --------------------------------------------------------------------------
# Unbalanced degree


@dataclass(frozen=True)
class UnbalanceReport:
    lambda_total: float
    pairwise: float
    global_component: float
    per_view: list
    dims: list
    aligned_dim: int
    mean_dim: float
    std_dim: float
    expansion_ratios: list
    mean_ratio: float
    std_ratio: float

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def unbalance_degree(dims: Sequence[int], aligned_dim: int = 128, ddof: int = 1) -> UnbalanceReport:
    """Unbalanced Degree of a set of view dimensions plus per-view unbalance.

    The dataset-level value is the mean relative pairwise gap
    ``2|Di - Dj| / (Di + Dj)`` over unordered pairs plus the coefficient of
    variation of the dims. ``ddof=1`` (sample std) reproduces published
    tables; ``ddof=0`` gives the population form.

    Per-view unbalance combines the distance of ``D_v`` and of the
    expansion ratio ``aligned_dim / D_v`` from their means, each scaled by
    twice the corresponding standard deviation (a zero std zeroes the term).
    """
    d = [int(x) if float(x).is_integer() else float(x) for x in dims]
    if len(d) < 2:
        raise ValueError("unbalance degree needs at least 2 views")
    if any(x <= 0 for x in d):
        raise ValueError(f"dimensions must be positive, got {list(dims)}")
    if aligned_dim <= 0:
        raise ValueError("aligned_dim must be positive")
    arr = np.asarray(d, dtype=np.float64)
    pairs = [2.0 * abs(a - b) / (a + b) for a, b in itertools.combinations(arr, 2)]
    pairwise = math.fsum(pairs) / len(pairs)
    mean_dim = float(arr.mean())
    std_dim = float(np.std(arr, ddof=ddof))
    global_component = std_dim / mean_dim

    ratios = aligned_dim / arr
    mean_ratio = float(ratios.mean())
    std_ratio = float(np.std(ratios, ddof=ddof))
    per_view = []
    for dv, pv in zip(arr, ratios):
        term_d = abs(dv - mean_dim) / (2 * std_dim) if std_dim > 0 else 0.0
        term_p = abs(pv - mean_ratio) / (2 * std_ratio) if std_ratio > 0 else 0.0
        per_view.append(float(term_d + term_p))

    return UnbalanceReport(
        lambda_total=float(pairwise + global_component),
        pairwise=float(pairwise),
        global_component=float(global_component),
        per_view=per_view,
        dims=d,
        aligned_dim=int(aligned_dim),
        mean_dim=mean_dim,
        std_dim=std_dim,
        expansion_ratios=[float(r) for r in ratios],
        mean_ratio=mean_ratio,
        std_ratio=std_ratio,
    )


# --------------------------------------------------------------------------
# CSV ingestion


def _locate_bad_cell(path: Path):
    with path.open(newline="", encoding="utf-8") as fh:
        for r, row in enumerate(csv.reader(fh), start=1):
            for c, cell in enumerate(row, start=1):
                try:
                    float(cell)
                except ValueError:
                    return r, c, cell
    return None


def _read_matrix(path: Path) -> np.ndarray:
    try:
        with path.open(encoding="utf-8") as fh:
            arr = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        bad = _locate_bad_cell(path)
        if bad is not None:
            r, c, cell = bad
            raise DatasetError(f"{path.name}: non-numeric cell {cell!r} at row {r}, column {c}") from exc
        raise DatasetError(f"{path.name}: {exc}") from exc
    if arr.size == 0:
        raise DatasetError(f"{path.name}: file is empty")
    if not np.all(np.isfinite(arr)):
        r, c = np.argwhere(~np.isfinite(arr))[0]
        raise DatasetError(f"{path.name}: non-finite value at row {r + 1}, column {c + 1}")
    return arr


def load_csv_dataset(directory) -> MultiViewDataset:
    """Load ``view_<k>.csv`` files (plus optional labels.csv / meta.json)."""
    root = Path(directory)
    if not root.is_dir():
        raise DatasetError(f"{root} is not a directory")
    paths = []
    k = 0
    while (root / f"view_{k}.csv").exists():
        paths.append(root / f"view_{k}.csv")
        k += 1
    if not paths:
        raise DatasetError(f"{root}: no view_0.csv found")
    views = [_read_matrix(p) for p in paths]
    n = views[0].shape[0]
    for p, v in zip(paths, views):
        if v.shape[0] != n:
            raise DatasetError(f"{p.name}: has {v.shape[0]} rows but {paths[0].name} has {n}")

    labels = None
    label_path = root / "labels.csv"
    if label_path.exists():
        raw = _read_matrix(label_path)
        if raw.shape[1] != 1:
            raise DatasetError("labels.csv: expected one integer per row")
        if raw.shape[0] != n:
            raise DatasetError(f"labels.csv: has {raw.shape[0]} rows but {paths[0].name} has {n}")
        if not np.all(raw == np.round(raw)):
            raise DatasetError("labels.csv: labels must be integers")
        labels = raw[:, 0].astype(np.int64)

    names = ()
    meta_path = root / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        names = tuple(meta.get("view_names", ()))
        if names and len(names) != len(views):
            raise DatasetError("meta.json: view_names length does not match the view files")
    return MultiViewDataset(tuple(views), labels, names)


def save_csv_dataset(ds: MultiViewDataset, directory) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for k, v in enumerate(ds.views):
        np.savetxt(root / f"view_{k}.csv", v, delimiter=",", fmt="%.17g")
    if ds.labels is not None:
        np.savetxt(root / "labels.csv", ds.labels, fmt="%d")
    meta = {"view_names": list(ds.view_names)}
    if ds.labels is not None:
        meta["n_classes"] = ds.n_classes
    (root / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return root


def standardize(ds: MultiViewDataset) -> MultiViewDataset:
    """Z-score every column with the sample std; constant columns become zeros."""
    if ds.n_samples < 2:
        raise ValueError("standardize needs at least 2 samples")
    out = []
    for v in ds.views:
        mean = v.mean(axis=0)
        std = v.std(axis=0, ddof=1)
        constant = std <= 1e-12 * np.maximum(np.abs(mean), 1.0)
        safe = np.where(constant, 1.0, std)
        z = (v - mean) / safe
        z[:, constant] = 0.0
        out.append(z)
    return MultiViewDataset(tuple(out), ds.labels, ds.view_names)


# --------------------------------------------------------------------------
# Synthetic data


@dataclass(frozen=True)
class ToySpec:
    n_samples: int = 1500
    n_classes: int = 3
    latent_dim: int = 9
    gamma_shape: float = 1.0
    gamma_scale: float = 0.8
    latent_noise_std: float = 0.1
    view_dims: tuple = (3000, 10)
    w1_range: tuple = (0.2, 1.2)
    w2_range: tuple = (0.2, 0.8)
    noise_stds: tuple = (0.2, 0.75)
    # class 3 also carries the class-2 latent block, so only the last block
    # separates classes 2 and 3 (view 1 is blind to it)
    c3_shares_c2_block: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("n_samples", "n_classes", "latent_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.latent_dim % self.n_classes:
            raise ValueError("latent_dim must be a multiple of n_classes")
        if len(self.view_dims) != 2 or min(self.view_dims) <= 0:
            raise ValueError("view_dims must hold two positive dims")
        for name in ("w1_range", "w2_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must satisfy low < high")
        if min(self.noise_stds) < 0 or self.latent_noise_std < 0:
            raise ValueError("noise levels must be nonnegative")

    def with_overrides(self, **kw) -> "ToySpec":
        return replace(self, **kw)


@dataclass(frozen=True)
class ToyGroundTruth:
    latent: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    labels: np.ndarray
    active: np.ndarray  # (n_classes, latent_dim) bool: which latent dims carry signal per class

    def masked_dims(self, view: int) -> np.ndarray:
        """Latent dims whose projection columns are zeroed for ``view`` (0-based)."""
        w = self.w1 if view == 0 else self.w2
        return np.nonzero(np.all(w == 0.0, axis=0))[0]

    def to_dict(self) -> dict:
        return {
            "latent": self.latent.tolist(),
            "w1": self.w1.tolist(),
            "w2": self.w2.tolist(),
            "labels": self.labels.tolist(),
            "active": self.active.astype(int).tolist(),
        }


def toy_activity(spec: ToySpec) -> np.ndarray:
    block = spec.latent_dim // spec.n_classes
    active = np.zeros((spec.n_classes, spec.latent_dim), dtype=bool)
    for c in range(spec.n_classes):
        active[c, c * block:(c + 1) * block] = True
    if spec.c3_shares_c2_block and spec.n_classes >= 3:
        active[2, block:2 * block] = True
    return active


def generate_toy(spec: ToySpec = ToySpec()):
    """Two-view toy with complementary, dimensionally unbalanced views.

    Returns ``(dataset, truth)``. Rows are grouped by class. View 1 has
    its last latent block masked, view 2 sees only the last block.
    """
    rng = substream(spec.seed, "data")
    per_class = np.full(spec.n_classes, spec.n_samples // spec.n_classes)
    per_class[: spec.n_samples % spec.n_classes] += 1
    labels = np.repeat(np.arange(spec.n_classes), per_class)
    active = toy_activity(spec)

    n, h = spec.n_samples, spec.latent_dim
    signal = rng.gamma(spec.gamma_shape, spec.gamma_scale, size=(n, h))
    latent = np.where(active[labels], signal, 0.0)
    latent = latent + rng.normal(0.0, spec.latent_noise_std, size=(n, h))

    block = h // spec.n_classes
    d1, d2 = spec.view_dims
    w1 = rng.uniform(*spec.w1_range, size=(d1, h))
    w2 = rng.uniform(*spec.w2_range, size=(d2, h))
    w1[:, h - block:] = 0.0
    w2[:, : h - block] = 0.0

    x1 = latent @ w1.T + rng.normal(0.0, spec.noise_stds[0], size=(n, d1))
    x2 = latent @ w2.T + rng.normal(0.0, spec.noise_stds[1], size=(n, d2))
    ds = MultiViewDataset((x1, x2), labels, ("high_dim", "low_dim"))
    return ds, ToyGroundTruth(latent, w1, w2, labels, active)


def generate_uci_like(n_per_class: int = 60, n_classes: int = 10, dims=(6, 47, 240),
                      latent_dim: int = 12, seed: int = 0) -> MultiViewDataset:
    """Synthetic stand-in for a UCI-digits-shaped dataset (6/47/240 dims).

    Each class has a Gaussian center in a shared latent space; every view
    is a random linear map of the latent code through tanh plus noise, with
    the smallest view the noisiest.
    """
    rng = substream(seed, "data")
    centers = rng.normal(0.0, 1.0, size=(n_classes, latent_dim))
    labels = np.repeat(np.arange(n_classes), n_per_class)
    latent = centers[labels] + rng.normal(0.0, 0.45, size=(labels.size, latent_dim))
    views = []
    noise = np.linspace(0.6, 0.3, len(dims))
    for d, s in zip(dims, noise):
        proj = rng.normal(0.0, 1.0 / math.sqrt(latent_dim), size=(latent_dim, d))
        views.append(np.tanh(latent @ proj) + rng.normal(0.0, s, size=(labels.size, d)))
    return MultiViewDataset(tuple(views), labels, tuple(f"d{d}" for d in dims))
