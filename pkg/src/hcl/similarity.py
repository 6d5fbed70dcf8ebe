"""Similarity kernels and label-distance weights used by the contrastive losses.

Two kernels act on feature/embedding vectors:

* ``sim_f(u, v)``  = exp(cos(u, v) / temperature), the score inside every
  softmax-style loss term;
* ``weight_g(x1, x2)`` = exp(1 - cos(x1, x2)), the *raw-input* dissimilarity
  weight applied to negative pairs, always in [1, e^2].

Two weights act on binary label vectors:

* ``pos_weight_sigma`` scales positive pairs by label agreement,
* ``neg_weight_gamma`` scales negative pairs by label disagreement
  (plain hamming distance).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

_E = float(np.e)


@dataclass(frozen=True)
class SimilarityConfig:
    """Kernel hyperparameters. ``temperature`` must be positive."""

    temperature: float = 1.0

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise ContractError(
                f"temperature must be positive, got {self.temperature}"
            )


DEFAULT_SIMILARITY = SimilarityConfig()


def sim_f(u, v, cfg: SimilarityConfig = DEFAULT_SIMILARITY) -> float:
    """Exponentiated cosine similarity, exp(cos(u, v) / temperature).

    Zero-norm vectors contribute cosine 0, so the kernel value is 1
    regardless of temperature.
    """
    from .numeric import cosine

    return float(np.exp(cosine(u, v) / cfg.temperature))


def weight_g(x1, x2) -> float:
    """Negative-pair weight exp(1 - cos(x1, x2)) on raw input features.

    Ranges over [1, e^2]: identical inputs get weight 1 (down-weighted),
    anti-aligned inputs get e^2 (emphasized). Zero-norm inputs get e.
    """
    from .numeric import cosine

    return float(np.exp(1.0 - cosine(x1, x2)))


def _as_binary_labels(y, name: str) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ContractError(f"{name} must be non-empty")
    bad = ~((arr == 0.0) | (arr == 1.0))
    if np.any(bad):
        pos = int(np.argmax(bad))
        raise ContractError(
            f"{name} must be binary, entry {pos} is {arr[pos]!r}"
        )
    return arr


def hamming(y1, y2) -> int:
    """Number of positions where two binary label vectors differ."""
    a = _as_binary_labels(y1, "y1")
    b = _as_binary_labels(y2, "y2")
    if a.shape != b.shape:
        raise ContractError(
            f"label vectors must have equal length, got {a.size} and {b.size}"
        )
    return int(np.sum(a != b))


def pos_weight_sigma(y1, y2) -> float:
    """Positive-pair weight 1 - hamming(y1, y2)/c for c-label vectors.

    For pairs that share at least one positive label the value lies in
    [1/c, 1]; identical label vectors give exactly 1. Computed as
    (c - hamming)/c so the boundary values are float-exact.
    """
    a = _as_binary_labels(y1, "y1")
    c = a.size
    return (c - hamming(y1, y2)) / float(c)


def neg_weight_gamma(y1, y2) -> float:
    """Negative-pair weight: the hamming distance itself, in [1, c].

    Raises if the vectors are identical, since such a pair is not a
    negative for any label.
    """
    h = hamming(y1, y2)
    if h == 0:
        raise ContractError(
            "negative-pair weight undefined for identical label vectors"
        )
    return float(h)
