"""Dataset ingestion, synthetic generation, augmentation, splits, batching.

Datasets hold one or two feature views plus a binary label matrix and a
per-row labeled flag. Batch plans list anchor rows and one negative index
set per anchor; the contrastive losses consume them as boolean masks via
``plan_neg_mask``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, IngestionError, ShapeError
from .ioutil import atomic_write_text, format_kv_text, parse_kv_text
from .numeric import Matrix, Rng, as_matrix, unit_rows


@dataclass
class Dataset:
    """Immutable-by-convention container: views, labels, labeled flags."""

    views: list[Matrix]
    labels: Matrix
    labeled_mask: np.ndarray
    name: str = "dataset"
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 1 <= len(self.views) <= 2:
            raise ContractError(f"need one or two views, got {len(self.views)}")
        self.views = [as_matrix(v, f"view {i + 1}") for i, v in enumerate(self.views)]
        self.labels = as_matrix(self.labels, "labels")
        n = self.views[0].shape[0]
        for i, v in enumerate(self.views):
            if v.shape[0] != n:
                raise ShapeError(
                    f"view {i + 1} has {v.shape[0]} rows, view 1 has {n}"
                )
        if self.labels.shape[0] != n:
            raise ShapeError(
                f"labels have {self.labels.shape[0]} rows for {n} samples"
            )
        if not np.isin(self.labels, (0.0, 1.0)).all():
            raise ContractError("labels must be strictly binary (0/1)")
        self.labeled_mask = np.asarray(self.labeled_mask, dtype=bool)
        if self.labeled_mask.shape != (n,):
            raise ShapeError(
                f"labeled_mask has shape {self.labeled_mask.shape}, expected ({n},)"
            )

    @property
    def n(self) -> int:
        return self.views[0].shape[0]

    @property
    def c(self) -> int:
        return self.labels.shape[1]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labeled_mask)

    @property
    def unlabeled_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.labeled_mask)


@dataclass
class BatchPlan:
    """Anchor rows, the labeled subset, and per-anchor negative sets.

    ``negatives`` is (n_anchors, neg_size) of dataset row indices; every
    negative set has the same size and never contains its own anchor.
    """

    anchors: np.ndarray
    labeled: np.ndarray
    negatives: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        self.anchors = np.asarray(self.anchors, dtype=int).ravel()
        self.labeled = np.asarray(self.labeled, dtype=int).ravel()
        self.negatives = np.asarray(self.negatives, dtype=int)
        if self.anchors.size == 0:
            raise ContractError("a batch plan needs at least one anchor")
        if np.unique(self.anchors).size != self.anchors.size:
            raise ContractError("anchor indices must be unique")
        if self.negatives.ndim != 2 or self.negatives.shape[0] != self.anchors.size:
            raise ShapeError(
                f"negatives have shape {self.negatives.shape}, expected "
                f"({self.anchors.size}, neg_size)"
            )
        if self.negatives.shape[1] < 1:
            raise ContractError("every anchor needs at least one negative")
        if self.anchors.min() < 0 or self.negatives.min() < 0:
            raise ContractError("indices must be non-negative")
        if (self.negatives == self.anchors[:, None]).any():
            raise ContractError("an anchor may not appear in its own negative set")
        if not np.isin(self.labeled, self.anchors).all():
            raise ContractError("labeled subset must be drawn from the anchors")

    @property
    def neg_size(self) -> int:
        return self.negatives.shape[1]


def plan_neg_mask(plan: BatchPlan) -> np.ndarray:
    """Boolean (n_anchors, n_anchors) mask over anchor positions: entry
    [i, j] marks anchor j as a negative of anchor i."""
    na = plan.anchors.size
    inv = np.full(int(plan.anchors.max()) + 1, -1, dtype=int)
    inv[plan.anchors] = np.arange(na)
    if plan.negatives.max() >= inv.size:
        raise ContractError("negative index outside the anchor pool")
    cols = inv[plan.negatives]
    if (cols < 0).any():
        raise ContractError("negative index outside the anchor pool")
    mask = np.zeros((na, na), dtype=bool)
    mask[np.repeat(np.arange(na), plan.neg_size), cols.ravel()] = True
    return mask


# ---------------------------------------------------------------------------
# CSV ingestion


def _read_matrix(path: str, header: bool) -> tuple[Matrix, list[int]]:
    """Parse a numeric CSV; returns the matrix and per-row source lines."""
    rows: list[list[float]] = []
    lines: list[int] = []
    width = None
    skipped_header = not header
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if not skipped_header:
                skipped_header = True
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise IngestionError(
                    f"{path}:{lineno}: expected {width} columns, found {len(record)}"
                )
            parsed = []
            for j, cell in enumerate(record):
                try:
                    value = float(cell)
                except ValueError:
                    raise IngestionError(
                        f"{path}:{lineno}: column {j + 1}: "
                        f"could not parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(value):
                    raise IngestionError(
                        f"{path}:{lineno}: column {j + 1}: non-finite value {cell!r}"
                    )
                parsed.append(value)
            rows.append(parsed)
            lines.append(lineno)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64), lines


def load_csv(feature_paths, labels_path: str, *, header: bool = False,
             name: str | None = None) -> Dataset:
    """Load one or two view CSVs plus a 0/1 labels CSV into a Dataset."""
    if isinstance(feature_paths, (str, os.PathLike)):
        feature_paths = [feature_paths]
    feature_paths = [os.fspath(p) for p in feature_paths]
    labels_path = os.fspath(labels_path)
    if not 1 <= len(feature_paths) <= 2:
        raise ContractError(f"need one or two view files, got {len(feature_paths)}")
    views = []
    read = []
    for p in feature_paths:
        mat, lines = _read_matrix(p, header)
        views.append(mat)
        read.append((p, mat.shape[0], lines[-1]))
    labels, label_lines = _read_matrix(labels_path, header)
    read.append((labels_path, labels.shape[0], label_lines[-1]))
    p0, n0, l0 = read[0]
    for p, n, last in read[1:]:
        if n != n0:
            raise IngestionError(
                f"row count mismatch: {p0} has {n0} data rows (last at line "
                f"{l0}) but {p} has {n} (last at line {last})"
            )
    bad = np.argwhere(~np.isin(labels, (0.0, 1.0)))
    if bad.size:
        i, j = bad[0]
        raise IngestionError(
            f"{labels_path}:{label_lines[i]}: column {j + 1}: "
            f"label value {labels[i, j]:g} is not 0 or 1"
        )
    return Dataset(views=views, labels=labels,
                   labeled_mask=np.ones(n0, dtype=bool),
                   name=name or os.path.splitext(os.path.basename(labels_path))[0])


def save_csv(path: str, matrix: Matrix) -> None:
    """Write a matrix as CSV with round-trip-exact float formatting."""
    mat = as_matrix(matrix, "matrix")
    lines = [",".join(repr(float(v)) for v in row) for row in mat]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_manifest(path: str) -> Dataset:
    """Load a dataset named by a key-value manifest.

    Keys: ``view1`` (required), ``view2`` (optional), ``labels`` (required),
    ``c`` (required, validated against the labels file), ``name`` and
    ``header`` (optional). Relative paths resolve against the manifest.
    """
    with open(path, "r", encoding="utf-8") as fh:
        kv = parse_kv_text(fh.read(), source=path)
    known = {"view1", "view2", "labels", "c", "name", "header"}
    for key in kv:
        if key not in known:
            raise IngestionError(f"{path}: unknown manifest key {key!r}")
    for key in ("view1", "labels", "c"):
        if key not in kv:
            raise IngestionError(f"{path}: missing manifest key {key!r}")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    header = kv.get("header", "false").lower()
    if header not in ("true", "false"):
        raise IngestionError(f"{path}: header must be true or false, got {header!r}")
    feature_paths = [resolve(kv["view1"])]
    if "view2" in kv:
        feature_paths.append(resolve(kv["view2"]))
    ds = load_csv(feature_paths, resolve(kv["labels"]), header=header == "true",
                  name=kv.get("name"))
    try:
        c = int(kv["c"])
    except ValueError:
        raise IngestionError(f"{path}: c must be an integer, got {kv['c']!r}") from None
    if ds.c != c:
        raise IngestionError(
            f"{path}: manifest says c = {c}, labels file has {ds.c} columns"
        )
    return ds


def save_manifest(path: str, view_files, labels_file: str, c: int,
                  name: str = "dataset") -> None:
    if isinstance(view_files, str):
        view_files = [view_files]
    pairs = {f"view{i + 1}": p for i, p in enumerate(view_files)}
    pairs.update({"labels": labels_file, "c": str(int(c)), "name": name})
    atomic_write_text(path, format_kv_text(pairs))


# ---------------------------------------------------------------------------
# Rescaling and augmentation


def rescale01(x: Matrix) -> Matrix:
    """Per-column min-max rescaling to [0, 1]; constant columns map to 0."""
    x = as_matrix(x, "features")
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    safe = np.where(span > 0.0, span, 1.0)
    out = (x - lo) / safe
    out[:, span == 0.0] = 0.0
    return out


def inject_noise(x: Matrix, level: float, rng: Rng) -> Matrix:
    """Rescale per column to [0, 1], add uniform [0, 1] noise to an exact
    ``level`` fraction of entries, truncate back to [0, 1]."""
    if not 0.0 <= level <= 1.0:
        raise ContractError(f"noise level must be in [0, 1], got {level}")
    out = rescale01(x)
    count = int(round(level * out.size))
    if count:
        flat = out.reshape(-1)
        picked = rng.choice(out.size, size=count, replace=False)
        flat[picked] += rng.uniform(0.0, 1.0, size=count)
        np.clip(out, 0.0, 1.0, out=out)
    return out


def mask_features(x: Matrix, rate: float, rng: Rng) -> Matrix:
    """Zero an exact ``rate`` fraction of entries, chosen uniformly."""
    if not 0.0 <= rate <= 1.0:
        raise ContractError(f"masking rate must be in [0, 1], got {rate}")
    out = as_matrix(x, "features").copy()
    count = int(round(rate * out.size))
    if count:
        picked = rng.choice(out.size, size=count, replace=False)
        out.reshape(-1)[picked] = 0.0
    return out


def _parse_aug(spec: str) -> tuple[str, float]:
    kind, _, arg = str(spec).strip().lower().partition(":")
    if kind == "none" and not arg:
        return "none", 0.0
    if kind in ("noise", "mask"):
        try:
            rate = float(arg)
        except ValueError:
            raise ConfigError(
                f"augmentation {spec!r} needs a numeric rate, e.g. '{kind}:0.25'"
            ) from None
        if not 0.0 <= rate <= 1.0:
            raise ConfigError(f"augmentation rate must be in [0, 1], got {spec!r}")
        return kind, rate
    raise ConfigError(
        f"unknown augmentation {spec!r} (expected none, noise:LEVEL, or mask:RATE)"
    )


def _apply_aug(x: Matrix, spec: str, rng: Rng) -> Matrix:
    kind, rate = _parse_aug(spec)
    if kind == "none":
        return x.copy()
    if kind == "noise":
        return inject_noise(x, rate, rng)
    return mask_features(x, rate, rng)


def make_views(x: Matrix, aug_a: str, aug_b: str, rng: Rng) -> tuple[Matrix, Matrix]:
    """Two stochastic views of ``x``: rescale once, then apply one
    augmentation per view with independent draws."""
    _parse_aug(aug_a), _parse_aug(aug_b)  # reject bad specs before any rng use
    base = rescale01(x)
    return _apply_aug(base, aug_a, rng), _apply_aug(base, aug_b, rng)


# ---------------------------------------------------------------------------
# Synthetic datasets


def synth_multiview(n: int, d1: int, d2: int, c: int, noise_sd: float,
                    rng: Rng) -> Dataset:
    """Two linear views of a shared unit-sphere latent, labels from random
    halfspaces thresholded at per-label medians. Generative pieces are kept
    in ``meta`` so audits can regress the latent back out."""
    if n < 2 or d1 < 1 or d2 < 1:
        raise ContractError(f"need n >= 2 and positive dims, got {n}, {d1}, {d2}")
    if c < 2:
        raise ContractError(f"need c >= 2 labels, got {c}")
    if noise_sd < 0:
        raise ContractError(f"noise_sd must be >= 0, got {noise_sd}")
    p = min(d1, d2)
    latent = unit_rows(rng.normal(size=(n, p)))
    map1 = rng.normal(size=(p, d1))
    map2 = rng.normal(size=(p, d2))
    dirs = rng.normal(size=(p, c))
    x1 = latent @ map1
    x2 = latent @ map2
    if noise_sd > 0:
        x1 = x1 + noise_sd * rng.normal(size=(n, d1))
        x2 = x2 + noise_sd * rng.normal(size=(n, d2))
    scores = latent @ dirs
    thresholds = np.median(scores, axis=0)
    labels = (scores > thresholds).astype(np.float64)
    meta = {"latent": latent, "view_maps": [map1, map2], "label_dirs": dirs,
            "label_thresholds": thresholds, "noise_sd": float(noise_sd)}
    return Dataset(views=[x1, x2], labels=labels,
                   labeled_mask=np.ones(n, dtype=bool), name="synth", meta=meta)


def make_cluster_dataset(n: int, d: int, c: int, rng: Rng, *,
                         spread: float = 0.05, box_hi: float = 0.55) -> Dataset:
    """Single-view c-cluster dataset with one-hot labels.

    Class centers are binary on/off templates at {0, box_hi}. After a
    per-column rescale the "on" coordinates sit near the top of the range,
    where additive-uniform corruption plus [0, 1] truncation saturates
    instead of destroying them, so the label signal degrades gracefully
    while raw-feature similarity decays much faster.
    """
    if n < c or c < 2 or d < 1:
        raise ContractError(f"need n >= c >= 2 and d >= 1, got {n}, {c}, {d}")
    centers = np.where(rng.uniform(size=(c, d)) < 0.5, 0.0, box_hi)
    ids = rng.permutation(np.arange(n) % c)
    x = centers[ids] + spread * rng.normal(size=(n, d))
    np.clip(x, 0.0, box_hi, out=x)
    labels = np.zeros((n, c))
    labels[np.arange(n), ids] = 1.0
    return Dataset(views=[x], labels=labels, labeled_mask=np.ones(n, dtype=bool),
                   name="clusters", meta={"centers": centers, "ids": ids})


def make_scene_like(n: int, d: int, c: int, rng: Rng, *, n_clusters: int = 12,
                    latent_dim: int = 6, noise_sd: float = 1.0) -> Dataset:
    """Single-view multi-label dataset shaped like a small tabular benchmark.

    Rows fall into latent clusters and every cluster carries one fixed
    multi-label pattern of one to three positives, so labels are constant
    within a cluster but nonlinear in the features. Feature noise is tuned
    so the cluster geometry survives in raw similarities while a small
    labeled subset alone pins the patterns down only loosely.
    """
    if n < 2 * n_clusters or c < 2 or d < latent_dim:
        raise ContractError(
            f"need n >= {2 * n_clusters}, c >= 2, d >= {latent_dim}, "
            f"got {n}, {c}, {d}"
        )
    centers = 2.0 * rng.normal(size=(n_clusters, latent_dim))
    ids = rng.permutation(np.arange(n) % n_clusters)
    latent = centers[ids] + 0.6 * rng.normal(size=(n, latent_dim))
    feature_map = rng.normal(size=(latent_dim, d))
    x = latent @ feature_map + noise_sd * rng.normal(size=(n, d))
    # per-cluster label patterns; round-robin base label keeps every label
    # populated, extra positives make some rows genuinely multi-label
    patterns = np.zeros((n_clusters, c))
    patterns[np.arange(n_clusters), np.arange(n_clusters) % c] = 1.0
    extra = rng.integers(0, 3, size=n_clusters)
    for k in range(n_clusters):
        if extra[k]:
            others = np.delete(np.arange(c), k % c)
            patterns[k, rng.choice(others, size=extra[k], replace=False)] = 1.0
    labels = patterns[ids]
    meta = {"latent": latent, "centers": centers, "ids": ids,
            "feature_map": feature_map, "patterns": patterns}
    return Dataset(views=[x], labels=labels, labeled_mask=np.ones(n, dtype=bool),
                   name="scene-like", meta=meta)


# ---------------------------------------------------------------------------
# Splits and batch plans


def take_rows(ds: Dataset, rows, name: str | None = None) -> Dataset:
    """Row-indexed copy of a dataset. Keeps meta by reference."""
    rows = np.asarray(rows)
    if rows.ndim != 1 or rows.size == 0:
        raise ContractError("rows must be a non-empty 1-D index array")
    return Dataset(views=[v[rows] for v in ds.views], labels=ds.labels[rows],
                   labeled_mask=ds.labeled_mask[rows],
                   name=ds.name if name is None else name, meta=ds.meta)


def split(ds: Dataset, n_labeled: int, rng: Rng) -> Dataset:
    """Uniformly random labeled subset; all other rows become unlabeled."""
    if not 0 < n_labeled < ds.n:
        raise ContractError(
            f"n_labeled must be in (0, {ds.n}), got {n_labeled}"
        )
    mask = np.zeros(ds.n, dtype=bool)
    mask[rng.choice(ds.n, size=n_labeled, replace=False)] = True
    return Dataset(views=list(ds.views), labels=ds.labels, labeled_mask=mask,
                   name=ds.name, meta=ds.meta)


def sample_batch(ds: Dataset, batch_size: int, neg_size, rng: Rng, *,
                 seed: int = 0) -> BatchPlan:
    """One training batch: up to ``batch_size`` labeled anchors plus enough
    unlabeled rows that each anchor has ``neg_size`` negatives inside the
    pool. ``neg_size='full'`` pools the whole dataset and uses complements.
    """
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    n = ds.n
    full = isinstance(neg_size, str)
    if full:
        if neg_size != "full":
            raise ContractError(
                f"neg_size must be a positive int or 'full', got {neg_size!r}"
            )
        k = n - 1
    else:
        k = int(neg_size)
        if k < 1:
            raise ContractError(f"neg_size must be >= 1, got {neg_size}")
        if k > n - 1:
            raise ContractError(
                f"neg_size {k} exceeds the limit {n - 1} for {n} rows"
            )
    labeled_rows = ds.labeled_indices
    if labeled_rows.size == 0:
        raise ContractError("dataset has no labeled rows to anchor a batch")
    if batch_size >= labeled_rows.size:
        batch_labeled = labeled_rows.copy()
    else:
        batch_labeled = rng.choice(labeled_rows, size=batch_size, replace=False)
    if full:
        anchors = np.arange(n)
    else:
        pool = [batch_labeled]
        need = k + 1 - batch_labeled.size
        if need > 0:
            unlabeled = ds.unlabeled_indices
            take = min(need, unlabeled.size)
            if take == unlabeled.size:
                pool.append(unlabeled)
            elif take:
                pool.append(rng.choice(unlabeled, size=take, replace=False))
            need -= take
            if need > 0:
                # not enough unlabeled rows; top up from unused labeled ones
                rest = np.setdiff1d(labeled_rows, batch_labeled)
                pool.append(rng.choice(rest, size=need, replace=False))
        anchors = np.sort(np.concatenate(pool))
    na = anchors.size
    if k == na - 1:
        # forced full complement, no sampling needed
        cols = np.arange(na - 1)[None, :]
        rows = np.arange(na)[:, None]
        negatives = anchors[np.where(cols < rows, cols, cols + 1)]
    else:
        negatives = np.empty((na, k), dtype=int)
        for i in range(na):
            others = np.delete(anchors, i)
            negatives[i] = rng.choice(others, size=k, replace=False)
    return BatchPlan(anchors=anchors, labeled=np.sort(batch_labeled),
                     negatives=negatives, seed=seed)
