"""Compiled variants of the hot kernels; semantics mirror numpy_backend.

Matrix products go through np.dot; everything elementwise is written as
explicit loops, which is the idiom that compiles to tight machine code.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .numpy_backend import LOSS_CLAMP_HI, LOSS_CLAMP_LO

NAME = "numba"


@njit(cache=True)
def sparse_dot(ids_a, ws_a, ids_b, ws_b):
    i = 0
    j = 0
    acc = 0.0
    while i < ids_a.size and j < ids_b.size:
        a = ids_a[i]
        b = ids_b[j]
        if a == b:
            acc += ws_a[i] * ws_b[j]
            i += 1
            j += 1
        elif a < b:
            i += 1
        else:
            j += 1
    return acc


@njit(cache=True)
def _sigmoid_scalar(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@njit(cache=True)
def _gather_input(emb, X, leaf_ids, idx):
    nb = idx.size
    ed = emb.shape[1]
    dd = X.shape[1]
    inp = np.empty((nb, ed + dd))
    for r in range(nb):
        row = idx[r]
        leaf = leaf_ids[row]
        for c in range(ed):
            inp[r, c] = emb[leaf, c]
        for c in range(dd):
            inp[r, ed + c] = X[row, c]
    return inp


@njit(cache=True)
def _trunk_forward(inp, trunk_ws, trunk_bs):
    acts = [inp]
    a = inp
    for li in range(len(trunk_ws)):
        z = np.dot(a, trunk_ws[li])
        b = trunk_bs[li]
        for r in range(z.shape[0]):
            for c in range(z.shape[1]):
                v = z[r, c] + b[c]
                z[r, c] = v if v > 0.0 else 0.0
        acts.append(z)
        a = z
    return acts


@njit(cache=True)
def _heads_forward(a, w1, b1, w2, b2):
    n = a.shape[0]
    h = a.shape[1]
    p1 = np.empty(n)
    p2 = np.empty(n)
    for r in range(n):
        z1 = b1
        z2 = b2
        for c in range(h):
            z1 += a[r, c] * w1[c]
            z2 += a[r, c] * w2[c]
        p1[r] = _sigmoid_scalar(z1)
        p2[r] = _sigmoid_scalar(z2)
    return p1, p2


@njit(cache=True)
def predict_batch(emb, trunk_ws, trunk_bs, w1, b1, w2, b2, X, leaf_ids):
    idx = np.arange(X.shape[0])
    inp = _gather_input(emb, X, leaf_ids, idx)
    acts = _trunk_forward(inp, trunk_ws, trunk_bs)
    return _heads_forward(acts[len(trunk_ws)], w1, b1, w2, b2)


@njit(cache=True)
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
    n = order.size
    n_layers = len(trunk_ws)
    ed = emb.shape[1]
    caba_sum = 0.0
    cabb_sum = 0.0
    for start in range(0, n, batch_size):
        end = min(start + batch_size, n)
        idx = order[start:end]
        nb = idx.size
        inp = _gather_input(emb, X, leaf_ids, idx)
        acts = _trunk_forward(inp, trunk_ws, trunk_bs)
        a = acts[n_layers]
        h = a.shape[1]
        p1, p2 = _heads_forward(a, w1, b1, w2, b2)

        dz1 = np.empty(nb)
        for r in range(nb):
            yv = y1[idx[r]]
            pv = p1[r]
            pc = pv
            if pc < LOSS_CLAMP_LO:
                pc = LOSS_CLAMP_LO
            elif pc > LOSS_CLAMP_HI:
                pc = LOSS_CLAMP_HI
            caba_sum += -(yv * math.log(pc) + (1.0 - yv) * math.log(1.0 - pc))
            if pv <= LOSS_CLAMP_LO or pv >= LOSS_CLAMP_HI:
                dz1[r] = 0.0  # clamp flattens the loss here
            else:
                dz1[r] = (pv - yv) / nb
        gw1 = np.dot(a.T, dz1)
        gb1 = dz1.sum()
        dh = np.empty((nb, h))
        for r in range(nb):
            d1 = dz1[r]
            for c in range(h):
                dh[r, c] = d1 * w1[c]

        gw2 = np.zeros(h)
        gb2 = 0.0
        if lam > 0.0:
            dz2 = np.empty(nb)
            for r in range(nb):
                yv = y2[idx[r]]
                av = alpha[idx[r]]
                pv = p2[r]
                pc = pv
                if pc < LOSS_CLAMP_LO:
                    pc = LOSS_CLAMP_LO
                elif pc > LOSS_CLAMP_HI:
                    pc = LOSS_CLAMP_HI
                cabb_sum += -av * (yv * math.log(pc) + (1.0 - yv) * math.log(1.0 - pc))
                if pv <= LOSS_CLAMP_LO or pv >= LOSS_CLAMP_HI:
                    dz2[r] = 0.0
                else:
                    dz2[r] = lam * av * (pv - yv) / nb
            for r in range(nb):
                d2 = dz2[r]
                for c in range(h):
                    dh[r, c] += d2 * w2[c]
            gw2 = np.dot(a.T, dz2)
            gb2 = dz2.sum()

        g_ws = []
        g_bs = []
        for li in range(n_layers - 1, -1, -1):
            act = acts[li + 1]
            width = act.shape[1]
            dz = np.empty((nb, width))
            for r in range(nb):
                for c in range(width):
                    dz[r, c] = dh[r, c] if act[r, c] > 0.0 else 0.0
            g_ws.append(np.dot(acts[li].T, dz))
            gb = np.empty(width)
            for c in range(width):
                s = 0.0
                for r in range(nb):
                    s += dz[r, c]
                gb[c] = s
            g_bs.append(gb)
            dh = np.dot(dz, trunk_ws[li].T)

        for c in range(h):
            w1[c] -= lr * gw1[c]
        b1 -= lr * gb1
        if lam > 0.0:
            for c in range(h):
                w2[c] -= lr * gw2[c]
            b2 -= lr * gb2
        for li in range(n_layers):
            W = trunk_ws[li]
            g = g_ws[n_layers - 1 - li]
            for r in range(W.shape[0]):
                for c in range(W.shape[1]):
                    W[r, c] -= lr * g[r, c]
            bvec = trunk_bs[li]
            gb = g_bs[n_layers - 1 - li]
            for c in range(bvec.shape[0]):
                bvec[c] -= lr * gb[c]
        for r in range(nb):
            leaf = leaf_ids[idx[r]]
            for c in range(ed):
                emb[leaf, c] -= lr * dh[r, c]
    return caba_sum, cabb_sum, b1, b2
