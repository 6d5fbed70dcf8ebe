"""Independent scalar reference implementations used as test oracles.

Everything here is written with explicit loops and ``math`` so that it
cannot share bugs with the vectorized implementations under test. Keep it
slow and obvious.
"""

import math

import numpy as np


def ref_cosine(u, v):
    nu = math.sqrt(sum(float(x) * float(x) for x in u))
    nv = math.sqrt(sum(float(x) * float(x) for x in v))
    if nu < 1e-12 or nv < 1e-12:
        return 0.0
    dot = sum(float(a) * float(b) for a, b in zip(u, v))
    return max(-1.0, min(1.0, dot / (nu * nv)))


def ref_f(u, v, tau):
    return math.exp(ref_cosine(u, v) / tau)


def ref_g(a, b):
    return math.exp(1.0 - ref_cosine(a, b))


def ref_hamming(y1, y2):
    return sum(1 for a, b in zip(y1, y2) if float(a) != float(b))


def neg_sets_from_mask(mask):
    return [list(np.flatnonzero(row)) for row in np.asarray(mask, dtype=bool)]


def ref_unsup_single(x_sim, x_raw, z, neg_sets, tau, weighted):
    n = len(z)
    total = 0.0
    for i in range(n):
        f_pos = ref_f(x_sim[i], z[i], tau)
        den = f_pos
        for k in neg_sets[i]:
            w = ref_g(x_raw[i], x_raw[k]) if weighted else 1.0
            den += w * ref_f(x_sim[i], z[k], tau)
        total += -math.log(f_pos / den)
    return total / n


def ref_unsup_multiview(x1, x2, z1, z2, neg_sets, tau, weighted):
    n = len(z1)
    same_dims = len(x1[0]) == len(x2[0]) if weighted else True
    total = 0.0
    for i in range(n):
        for za, zb, xa in ((z1, z2, x1), (z2, z1, x2)):
            f_pos = ref_f(za[i], zb[i], tau)
            den = f_pos
            for k in neg_sets[i]:
                for zv, xv in ((z1, x1), (z2, x2)):
                    if not weighted:
                        w = 1.0
                    elif same_dims:
                        w = ref_g(xa[i], xv[k])
                    else:
                        w = ref_g(xa[i], xa[k])
                    den += w * ref_f(za[i], zv[k], tau)
            total += -math.log(f_pos / den)
    return total / (2 * n)


def ref_sup_groups(y):
    """(label, positives, negatives) for labels with >=2 pos and >=1 neg."""
    y = np.asarray(y, dtype=float)
    out = []
    for a in range(y.shape[1]):
        pos = [i for i in range(y.shape[0]) if y[i, a] == 1.0]
        neg = [k for k in range(y.shape[0]) if y[k, a] == 0.0]
        if len(pos) >= 2 and len(neg) >= 1:
            out.append((a, pos, neg))
    return out


def ref_weighted_sup(s, y, tau, indicator=None):
    y = np.asarray(y, dtype=float)
    c = y.shape[1]
    if indicator is None:
        indicator = c >= 2 and all(
            sorted(row) == [0.0] * (c - 1) + [1.0] for row in y.tolist()
        )
    groups = ref_sup_groups(y)
    assert groups, "oracle needs at least one usable label"
    group_means = []
    for _, pos, neg in groups:
        terms = []
        for i in pos:
            for j in pos:
                if i == j:
                    continue
                sigma = 1.0 if indicator else 1.0 - ref_hamming(y[i], y[j]) / c
                num = sigma * ref_f(s[i], s[j], tau)
                den = num
                for k in neg:
                    gamma = 1.0 if indicator else float(ref_hamming(y[i], y[k]))
                    den += gamma * ref_f(s[i], s[k], tau)
                terms.append(-math.log(num / den))
        group_means.append(sum(terms) / len(terms))
    return sum(group_means) / len(group_means)


def ref_cross_entropy(y_hat, y):
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    total = 0.0
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            p = min(max(y_hat[i, j], 1e-12), 1.0 - 1e-12)
            t = y[i, j]
            total += -(t * math.log(p) + (1.0 - t) * math.log(1.0 - p))
    return total / y.size


def random_neg_mask(rng, n, size=None):
    """Random negative sets: ``size`` per anchor, or varied sizes if None."""
    mask = np.zeros((n, n), dtype=bool)
    for i in range(n):
        others = [k for k in range(n) if k != i]
        m = size if size is not None else int(rng.integers(1, n))
        picked = rng.choice(others, size=m, replace=False)
        mask[i, picked] = True
    return mask


def ref_f1_micro(y_true, y_pred):
    """Micro F1 by direct TP/FP/FN counting over all cells."""
    tp = fp = fn = 0
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    for i in range(y_true.shape[0]):
        for j in range(y_true.shape[1]):
            t, p = y_true[i, j], y_pred[i, j]
            if p == 1 and t == 1:
                tp += 1
            elif p == 1 and t == 0:
                fp += 1
            elif p == 0 and t == 1:
                fn += 1
    den = 2 * tp + fp + fn
    return 0.0 if den == 0 else 2.0 * tp / den


def ref_auc_pairwise(scores, labels):
    """Rank AUC by exhaustive positive/negative pair comparison."""
    pos = [s for s, t in zip(scores, labels) if t == 1]
    neg = [s for s, t in zip(scores, labels) if t == 0]
    if not pos or not neg:
        return None
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def ref_discrete_mi(joint):
    """MI of a joint probability table by direct double loop (natural log)."""
    joint = np.asarray(joint, dtype=float)
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    total = 0.0
    for i in range(joint.shape[0]):
        for j in range(joint.shape[1]):
            p = joint[i, j]
            if p > 0.0:
                total += p * math.log(p / (px[i] * py[j]))
    return total


def ref_stratum_sup(s, y, tau):
    """Stratified label-weighted loss: {shared_count: (loss, n_term)}.

    Same pair weighting as ref_weighted_sup, but each per-label mean is
    restricted to ordered positive pairs with a fixed shared-label count,
    and labels are averaged per stratum afterwards.
    """
    y = np.asarray(y, dtype=float)
    c = y.shape[1]
    buckets = {}
    for a, pos, neg in ref_sup_groups(y):
        terms = {}
        for i in pos:
            for j in pos:
                if i == j:
                    continue
                eps = int(sum(float(p) * float(q) for p, q in zip(y[i], y[j])))
                sigma = 1.0 - ref_hamming(y[i], y[j]) / c
                num = sigma * ref_f(s[i], s[j], tau)
                den = num
                for k in neg:
                    den += float(ref_hamming(y[i], y[k])) * ref_f(s[i], s[k], tau)
                terms.setdefault(eps, []).append(-math.log(num / den))
        for eps, vals in terms.items():
            buckets.setdefault(eps, []).append(
                (sum(vals) / len(vals), math.log(len(neg)))
            )
    out = {}
    for eps, pairs in buckets.items():
        losses = [p[0] for p in pairs]
        n_terms = [p[1] for p in pairs]
        out[eps] = (sum(losses) / len(losses), sum(n_terms) / len(n_terms))
    return out


def ref_stratum_pair_tables(ids, y, n_protos):
    """Stratified positive-pair tables over quantized ids, one table per
    shared-label count. Pairs weigh 1/count within each (label, stratum)."""
    y = np.asarray(y, dtype=float)
    tables = {}
    for a, pos, _neg in ref_sup_groups(y):
        cells = {}
        for i in pos:
            for j in pos:
                if i == j:
                    continue
                eps = int(sum(float(p) * float(q) for p, q in zip(y[i], y[j])))
                cells.setdefault(eps, []).append((ids[i], ids[j]))
        for eps, pairs in cells.items():
            table = tables.setdefault(eps, np.zeros((n_protos, n_protos)))
            for i, j in pairs:
                table[i, j] += 1.0 / len(pairs)
    return {eps: t / t.sum() for eps, t in tables.items()}
