"""Contrastive and classification losses with exact analytic gradients.

Every loss returns ``(value, grad...)`` where the gradients are taken with
respect to the embedding arguments (or predicted probabilities for
``cross_entropy``). All of them reduce, per anchor, to

    -log( w_pos * f(pos pair) / (w_pos * f(pos pair) + sum_k w_k * f(neg_k)) )

with f the exponentiated cosine kernel, so values are computed as a single
logsumexp over logits ``cos/tau + log(weight)`` with the positive term folded
in, and gradients come from the corresponding softmax coefficients. The
gradient of cosine(u, v) in u is (v_hat - cos * u_hat)/|u|, applied row-wise
through the unit-normalization of each embedding matrix.

Negative-pair weights:

* unweighted variants use weight 1 (the usual InfoNCE denominator);
* weighted variants use ``exp(1 - cos)`` on *raw input* features;
* the supervised loss weighs the positive pair by label agreement
  (``pos_weight_sigma``) and each negative by hamming distance
  (``neg_weight_gamma``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegenerateBatchError, ShapeError
from .numeric import Matrix, as_matrix, row_logsumexp, unit_rows
from .similarity import DEFAULT_SIMILARITY, SimilarityConfig

_NEG_INF = float("-inf")


@dataclass(frozen=True)
class LossBreakdown:
    """One training step's objective: j = l_c + alpha*l_u + beta*l_s."""

    l_c: float
    l_u: float
    l_s: float
    alpha: float
    beta: float
    j: float

    def __post_init__(self) -> None:
        expected = self.l_c + self.alpha * self.l_u + self.beta * self.l_s
        if abs(self.j - expected) > 1e-12:
            raise ContractError(
                f"inconsistent breakdown: j={self.j!r} but "
                f"l_c + alpha*l_u + beta*l_s = {expected!r}"
            )


def total_loss(l_c: float, l_u: float, l_s: float,
               alpha: float, beta: float) -> LossBreakdown:
    """Combine the three loss terms into the training objective."""
    if alpha < 0 or beta < 0:
        raise ContractError(
            f"balance weights must be non-negative, got alpha={alpha}, beta={beta}"
        )
    j = float(l_c) + alpha * float(l_u) + beta * float(l_s)
    return LossBreakdown(float(l_c), float(l_u), float(l_s),
                         float(alpha), float(beta), j)


@dataclass
class ContrastiveBatch:
    """Anchors, their negative sets, and the raw features behind them.

    Every row is an anchor. ``neg_mask[i, k]`` marks sample ``k`` as a member
    of anchor ``i``'s negative set; the diagonal must be False and every row
    must select at least one negative. ``x1``/``x2`` hold the raw input
    features used by the dissimilarity weight; ``x_sim`` optionally carries
    the feature-side argument of the similarity kernel for single-view losses
    when the raw features do not match the embedding dimension (e.g. a fixed
    random projection of ``x1``).
    """

    z1: Matrix
    neg_mask: np.ndarray
    x1: Matrix | None = None
    z2: Matrix | None = None
    x2: Matrix | None = None
    x_sim: Matrix | None = None

    def __post_init__(self) -> None:
        self.z1 = as_matrix(self.z1, "z1")
        n = self.z1.shape[0]
        self.neg_mask = np.asarray(self.neg_mask, dtype=bool)
        if self.neg_mask.shape != (n, n):
            raise ShapeError(
                f"neg_mask must be {n}x{n}, got {self.neg_mask.shape}"
            )
        if np.any(np.diag(self.neg_mask)):
            raise ContractError("an anchor may not appear in its own negative set")
        if not np.all(self.neg_mask.any(axis=1)):
            empty = int(np.argmin(self.neg_mask.any(axis=1)))
            raise DegenerateBatchError(f"anchor {empty} has an empty negative set")
        for name in ("x1", "z2", "x2", "x_sim"):
            v = getattr(self, name)
            if v is not None:
                v = as_matrix(v, name)
                if v.shape[0] != n:
                    raise ShapeError(
                        f"{name} has {v.shape[0]} rows, expected {n}"
                    )
                setattr(self, name, v)
        if self.z2 is not None and self.z2.shape[1] != self.z1.shape[1]:
            raise ShapeError(
                f"view embeddings must share a dimension, got "
                f"{self.z1.shape} and {self.z2.shape}"
            )

    @property
    def n(self) -> int:
        return self.z1.shape[0]


def full_negatives(n: int) -> np.ndarray:
    """Mask selecting, for each anchor, every other sample as a negative."""
    return ~np.eye(n, dtype=bool)


def cross_entropy(y_hat: Matrix, y: Matrix) -> tuple[float, Matrix]:
    """Mean elementwise binary cross-entropy and its gradient in ``y_hat``.

    Predictions are clamped to [1e-12, 1 - 1e-12] before the logs; the
    gradient is zero where the clamp is active.
    """
    y_hat = as_matrix(y_hat, "y_hat")
    y = as_matrix(y, "y")
    if y_hat.shape != y.shape:
        raise ShapeError(f"y_hat {y_hat.shape} and y {y.shape} must match")
    if np.any((y != 0.0) & (y != 1.0)):
        raise ContractError("targets must be binary")
    lo, hi = 1e-12, 1.0 - 1e-12
    p = np.clip(y_hat, lo, hi)
    value = float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))
    grad = (p - y) / (p * (1.0 - p)) / y.size
    grad[(y_hat <= lo) | (y_hat >= hi)] = 0.0
    return value, grad


def _unnormalize_rows(d_unit: Matrix, raw: Matrix, unit: Matrix) -> Matrix:
    """Back-propagate a gradient in the unit rows to the raw rows."""
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    inner = np.sum(d_unit * unit, axis=1, keepdims=True)
    out = (d_unit - inner * unit) / np.where(norms < 1e-12, 1.0, norms)
    out[norms.ravel() < 1e-12] = 0.0
    return out


def _log_weight(xa: Matrix, xb: Matrix) -> Matrix:
    """log of the raw-feature negative weight: 1 - cos(xa_i, xb_k)."""
    ca = unit_rows(xa)
    cb = unit_rows(xb)
    return 1.0 - np.clip(ca @ cb.T, -1.0, 1.0)


def unsup_loss_single(batch: ContrastiveBatch,
                      cfg: SimilarityConfig = DEFAULT_SIMILARITY,
                      weighted: bool = True) -> tuple[float, Matrix]:
    """Single-view contrastive loss pairing each input with its embedding.

    Per anchor i the positive score is f(x_i, z_i) and each negative k in the
    anchor's set contributes w_ik * f(x_i, z_k), with w = exp(1 - cos) on raw
    features when ``weighted`` (otherwise 1). Returns the mean over anchors
    and the gradient with respect to ``batch.z1``. The feature side of f is
    ``batch.x_sim`` when provided, else ``batch.x1`` (dimensions must match
    the embeddings).
    """
    z = batch.z1
    xs = batch.x_sim if batch.x_sim is not None else batch.x1
    if xs is None:
        raise ContractError("single-view loss needs x1 (or x_sim) features")
    if xs.shape[1] != z.shape[1]:
        raise ShapeError(
            f"feature side of f has dim {xs.shape[1]} but embeddings have "
            f"{z.shape[1]}; pass x_sim with matching dimension"
        )
    tau = cfg.temperature
    n = batch.n
    xh = unit_rows(xs)
    zh = unit_rows(z)
    cos = np.clip(xh @ zh.T, -1.0, 1.0)

    logits = cos / tau
    if weighted:
        if batch.x1 is None:
            raise ContractError("weighted loss needs raw features x1")
        logits = logits + _log_weight(batch.x1, batch.x1)
    pos_logit = np.diag(cos) / tau
    allowed = batch.neg_mask.copy()
    logits = np.where(allowed, logits, _NEG_INF)
    # Fold the positive term into the row before the logsumexp.
    np.fill_diagonal(logits, pos_logit)

    lse = row_logsumexp(logits)
    value = float(np.mean(lse - pos_logit))

    # Softmax coefficients; the positive column picks up the extra -1.
    p = np.exp(logits - lse[:, None])
    p[np.arange(n), np.arange(n)] -= 1.0
    d_cos = p / (n * tau)
    d_zh = d_cos.T @ xh
    return value, _unnormalize_rows(d_zh, z, zh)


def unsup_loss_multiview(batch: ContrastiveBatch,
                         cfg: SimilarityConfig = DEFAULT_SIMILARITY,
                         weighted: bool = True) -> tuple[float, Matrix, Matrix]:
    """Two-view contrastive loss, symmetrized over both anchor views.

    Anchor (i, v) scores its other-view partner as the positive and both
    views of every negative-set member as negatives (2|N_i| denominator
    terms). Negative weights come from raw features: cross-view when the
    view dimensions agree, otherwise the anchor view's own features stand in
    for both. Returns (value, grad_z1, grad_z2), the mean over the 2n anchor
    terms.
    """
    if batch.z2 is None:
        raise ContractError("two-view loss needs z2 embeddings")
    z1, z2 = batch.z1, batch.z2
    tau = cfg.temperature
    n = batch.n
    z1h = unit_rows(z1)
    z2h = unit_rows(z2)
    c11 = np.clip(z1h @ z1h.T, -1.0, 1.0)
    c12 = np.clip(z1h @ z2h.T, -1.0, 1.0)
    c21 = c12.T.copy()
    c22 = np.clip(z2h @ z2h.T, -1.0, 1.0)

    if weighted:
        if batch.x1 is None or batch.x2 is None:
            raise ContractError("weighted loss needs raw features x1 and x2")
        lw11 = _log_weight(batch.x1, batch.x1)
        lw22 = _log_weight(batch.x2, batch.x2)
        if batch.x1.shape[1] == batch.x2.shape[1]:
            lw12 = _log_weight(batch.x1, batch.x2)
            lw21 = lw12.T.copy()
        else:
            # Same-view proxy: weight both views of negative k by the
            # anchor view's own raw dissimilarity.
            lw12, lw21 = lw11, lw22
    else:
        lw11 = lw22 = lw12 = lw21 = 0.0

    mask = batch.neg_mask
    eye = np.eye(n, dtype=bool)

    def anchor_terms(c_same, lw_same, c_cross, lw_cross):
        """Loss terms and softmax coefficients for one anchor view."""
        b_same = np.where(mask, c_same / tau + lw_same, _NEG_INF)
        b_cross = np.where(mask, c_cross / tau + lw_cross, _NEG_INF)
        pos = np.diag(c_cross) / tau
        b_cross[eye] = pos
        lse = row_logsumexp(np.hstack([b_same, b_cross]))
        terms = lse - pos
        p_same = np.exp(b_same - lse[:, None])
        p_cross = np.exp(b_cross - lse[:, None])
        p_cross[eye] -= 1.0
        return terms, p_same, p_cross

    scale = 1.0 / (2 * n * tau)
    t1, p11, p12 = anchor_terms(c11, lw11, c12, lw12)
    t2, p22, p21 = anchor_terms(c22, lw22, c21, lw21)
    value = float((np.sum(t1) + np.sum(t2)) / (2 * n))

    m11, m12 = p11 * scale, p12 * scale
    m22, m21 = p22 * scale, p21 * scale
    d_z1h = (m11 + m11.T) @ z1h + m12 @ z2h + m21.T @ z2h
    d_z2h = (m22 + m22.T) @ z2h + m21 @ z1h + m12.T @ z1h
    return (value,
            _unnormalize_rows(d_z1h, z1, z1h),
            _unnormalize_rows(d_z2h, z2, z2h))


def _label_groups(y: Matrix) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """Valid label groups: (label, positive idx, negative idx) with at least
    two positives and one negative."""
    groups = []
    for a in range(y.shape[1]):
        pos = np.flatnonzero(y[:, a] == 1.0)
        neg = np.flatnonzero(y[:, a] == 0.0)
        if pos.size >= 2 and neg.size >= 1:
            groups.append((a, pos, neg))
    return groups


def _sup_engine(s: Matrix, y: Matrix, cfg: SimilarityConfig,
                indicator: bool) -> tuple[float, Matrix]:
    """Shared core of the supervised losses.

    Averages, over valid labels and then over ordered positive pairs (i, j)
    within each label, the term

        -log( sigma_ij f(s_i, s_j) /
              (sigma_ij f(s_i, s_j) + sum_{k in negatives} gamma_ik f(s_i, s_k)) )

    with sigma = gamma = 1 when ``indicator`` (single-label data) and the
    label-distance weights otherwise.
    """
    n, c = y.shape
    groups = _label_groups(y)
    if not groups:
        counts = y.sum(axis=0).astype(int).tolist()
        raise DegenerateBatchError(
            f"no label with >=2 positives and >=1 negative in a batch of "
            f"{n} samples (positives per label: {counts})"
        )
    tau = cfg.temperature
    sh = unit_rows(s)
    cos = np.clip(sh @ sh.T, -1.0, 1.0)
    logits = cos / tau

    if indicator:
        log_sigma = np.zeros((n, n))
        log_gamma = np.zeros((n, n))
    else:
        ham = np.sum(y[:, None, :] != y[None, :, :], axis=2).astype(np.float64)
        # sigma >= 1/c for pairs sharing a positive label; gamma >= 1 for
        # anchor-negative pairs. Entries outside those index sets are never
        # read, so the masked logs below stay finite where it matters.
        with np.errstate(divide="ignore"):
            log_sigma = np.log(np.maximum((c - ham) / c, 0.0))
            log_gamma = np.log(np.maximum(ham, 0.0))

    m = np.zeros((n, n))
    total = 0.0
    n_groups = len(groups)
    for _, pos, neg in groups:
        np_pos = pos.size
        n_pairs = np_pos * (np_pos - 1)
        pos_ix = np.ix_(pos, pos)
        neg_logits = logits[np.ix_(pos, neg)] + log_gamma[np.ix_(pos, neg)]
        lse_neg = row_logsumexp(neg_logits)
        pos_logits = logits[pos_ix] + log_sigma[pos_ix]
        t = np.logaddexp(pos_logits, lse_neg[:, None])
        off = ~np.eye(np_pos, dtype=bool)
        total += float(np.sum((t - pos_logits)[off])) / n_pairs

        scale = 1.0 / (n_groups * n_pairs * tau)
        d_pos = (np.exp(pos_logits - t) - 1.0) * scale
        d_pos[~off] = 0.0
        m[pos_ix] += d_pos
        # Each negative k collects exp(neg_logit_ik - t_ij) over partners j.
        e_row = np.sum(np.where(off, np.exp(-t), 0.0), axis=1)
        m[np.ix_(pos, neg)] += np.exp(neg_logits) * e_row[:, None] * scale

    value = total / n_groups
    d_sh = (m + m.T) @ sh
    return value, _unnormalize_rows(d_sh, s, sh)


def _as_label_matrix(y, n: int) -> Matrix:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    if y.ndim != 2 or y.shape[0] != n:
        raise ShapeError(f"labels must have {n} rows, got shape {y.shape}")
    return y


def _is_one_hot(y: Matrix) -> bool:
    return bool(y.shape[1] >= 2 and
                np.all((y == 0.0) | (y == 1.0)) and
                np.all(y.sum(axis=1) == 1.0))


def supcon_loss(s: Matrix, y, cfg: SimilarityConfig = DEFAULT_SIMILARITY
                ) -> tuple[float, Matrix]:
    """Supervised contrastive loss for single-label data.

    ``y`` may be a binary column (anchors and positives are the label-1
    samples, label-0 samples are negatives), a column of class ids, or
    one-hot rows. Per class, averages over ordered same-class pairs; classes
    need at least two members and one non-member to contribute. Returns the
    loss and its gradient in ``s``.
    """
    s = as_matrix(s, "s")
    y = _as_label_matrix(y, s.shape[0])
    if y.shape[1] == 1:
        vals = np.unique(y)
        if not np.all(np.isin(vals, (0.0, 1.0))):
            # Column of class ids: expand to one-hot over observed classes.
            if np.any(y != np.round(y)):
                raise ContractError("class-id labels must be integers")
            classes = np.unique(y)
            y = (y == classes[None, :]).astype(np.float64)
    elif not _is_one_hot(y):
        raise ContractError(
            "supcon_loss needs single-label targets (binary column, class "
            "ids, or one-hot rows); use weighted_sup_loss for multi-label"
        )
    return _sup_engine(s, y, cfg, indicator=True)


def weighted_sup_loss(s: Matrix, y, cfg: SimilarityConfig = DEFAULT_SIMILARITY
                      ) -> tuple[float, Matrix]:
    """Label-distance-weighted supervised contrastive loss.

    ``y`` holds binary multi-label rows. Positive pairs within each valid
    label are scaled by label agreement (1 - hamming/c) and negatives by
    hamming distance. When every row is one-hot the weights reduce to
    indicators (agreement 1, disagreement 1), which makes the loss coincide
    exactly with ``supcon_loss``. Returns the loss and its gradient in ``s``.
    """
    s = as_matrix(s, "s")
    y = _as_label_matrix(y, s.shape[0])
    if np.any((y != 0.0) & (y != 1.0)):
        raise ContractError("multi-label targets must be binary")
    return _sup_engine(s, y, cfg, indicator=_is_one_hot(y))
