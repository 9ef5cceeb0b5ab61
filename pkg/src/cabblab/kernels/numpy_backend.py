"""Pure-numpy reference implementations of the hot kernels.

These define the exact numeric semantics; the numba backend mirrors the
same operation order so the two stay interchangeable within floating-point
reproduction of the identical formulas.
"""

from __future__ import annotations

import numpy as np

LOSS_CLAMP_LO = 1e-7
LOSS_CLAMP_HI = 1.0 - 1e-7

NAME = "numpy"


def sparse_dot(ids_a: np.ndarray, ws_a: np.ndarray, ids_b: np.ndarray, ws_b: np.ndarray) -> float:
    """Dot product of two sparse vectors given as sorted unique id arrays
    with aligned weights."""
    common, ia, ib = np.intersect1d(ids_a, ids_b, assume_unique=True, return_indices=True)
    if common.size == 0:
        return 0.0
    return float(np.dot(ws_a[ia], ws_b[ib]))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward_batch(emb, trunk_ws, trunk_bs, w1, b1, w2, b2, X, leaf_ids):
    inp = np.concatenate((emb[leaf_ids], X), axis=1)
    acts = [inp]
    a = inp
    for li in range(len(trunk_ws)):
        a = np.maximum(np.dot(a, trunk_ws[li]) + trunk_bs[li], 0.0)
        acts.append(a)
    p1 = _sigmoid(np.dot(a, w1) + b1)
    p2 = _sigmoid(np.dot(a, w2) + b2)
    return acts, p1, p2


def predict_batch(emb, trunk_ws, trunk_bs, w1, b1, w2, b2, X, leaf_ids):
    _, p1, p2 = forward_batch(emb, trunk_ws, trunk_bs, w1, b1, w2, b2, X, leaf_ids)
    return p1, p2


def run_epoch(
    emb,
    trunk_ws,
    trunk_bs,
    w1,
    b1,
    w2,
    b2,
    X,
    leaf_ids,
    y1,
    y2,
    alpha,
    order,
    lam,
    lr,
    batch_size,
):
    """One pass of mini-batch gradient descent over `order`.

    Parameters are updated in place (scalar biases are returned updated).
    Returns (sum of per-example CABA cross-entropies, sum of alpha-weighted
    CABB cross-entropies, b1, b2); sums are over the whole epoch, computed
    from pre-update predictions of each batch. When lam == 0 the CABB term
    contributes nothing anywhere: head 2 and its gradient path are skipped
    entirely, not merely scaled to zero.
    """
    n = order.size
    n_layers = len(trunk_ws)
    emb_dim = emb.shape[1]
    caba_sum = 0.0
    cabb_sum = 0.0
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        nb = idx.size
        lb = leaf_ids[idx]
        y1b = y1[idx]
        y2b = y2[idx]
        ab = alpha[idx]
        acts, p1, p2 = forward_batch(emb, trunk_ws, trunk_bs, w1, b1, w2, b2, X[idx], lb)

        pc1 = np.clip(p1, LOSS_CLAMP_LO, LOSS_CLAMP_HI)
        caba_sum += float(-np.sum(y1b * np.log(pc1) + (1.0 - y1b) * np.log(1.0 - pc1)))
        dz1 = (p1 - y1b) / nb
        dz1[(p1 <= LOSS_CLAMP_LO) | (p1 >= LOSS_CLAMP_HI)] = 0.0
        gw1 = np.dot(acts[-1].T, dz1)
        gb1 = float(np.sum(dz1))
        dh = np.outer(dz1, w1)

        if lam > 0.0:
            pc2 = np.clip(p2, LOSS_CLAMP_LO, LOSS_CLAMP_HI)
            cabb_sum += float(
                -np.sum(ab * (y2b * np.log(pc2) + (1.0 - y2b) * np.log(1.0 - pc2)))
            )
            dz2 = lam * ab * (p2 - y2b) / nb
            dz2[(p2 <= LOSS_CLAMP_LO) | (p2 >= LOSS_CLAMP_HI)] = 0.0
            gw2 = np.dot(acts[-1].T, dz2)
            gb2 = float(np.sum(dz2))
            dh = dh + np.outer(dz2, w2)

        g_ws = [np.empty(0)] * n_layers
        g_bs = [np.empty(0)] * n_layers
        for li in range(n_layers - 1, -1, -1):
            dz = dh * (acts[li + 1] > 0.0)
            g_ws[li] = np.dot(acts[li].T, dz)
            g_bs[li] = dz.sum(axis=0)
            dh = np.dot(dz, trunk_ws[li].T)

        w1 -= lr * gw1
        b1 = b1 - lr * gb1
        if lam > 0.0:
            w2 -= lr * gw2
            b2 = b2 - lr * gb2
        for li in range(n_layers):
            W = trunk_ws[li]  # mutate through the local name; the container may be a tuple
            W -= lr * g_ws[li]
            bvec = trunk_bs[li]
            bvec -= lr * g_bs[li]
        np.add.at(emb, lb, -lr * dh[:, :emb_dim])
    return caba_sum, cabb_sum, b1, b2
