"""Numba kernels for the GRU recurrence over a right-padded batch.

Gate layout follows the usual (reset, update, new) stacking:

    r = sigmoid(gi_r + W_hr h + b_hr)
    z = sigmoid(gi_z + W_hz h + b_hz)
    n = tanh(gi_n + r * (W_hn h + b_hn))
    h' = (1 - z) * n + z * h

``gi`` holds the input projections ``W_ih x + b_ih`` for every position.
Loops run step-major so the recurrent product is one matmul per step.  At
step ``s`` sample ``b`` reads position ``s`` (or ``lengths[b]-1-s`` when
``reverse``); samples shorter than ``s`` are carried along but never
written out.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def gru_forward(gi, lengths, W_hh, b_hh, reverse):
    B, T, H3 = gi.shape
    H = H3 // 3
    hs = np.zeros((B, T, H))
    r = np.zeros((B, T, H))
    z = np.zeros((B, T, H))
    n = np.zeros((B, T, H))
    ghn = np.zeros((B, T, H))
    h = np.zeros((B, H))
    W_hhT = np.ascontiguousarray(W_hh.T)
    Lmax = 0
    for b in range(B):
        Lmax = max(Lmax, lengths[b])
    for s in range(Lmax):
        gh = h @ W_hhT
        for b in range(B):
            L = lengths[b]
            if s >= L:
                continue
            t = L - 1 - s if reverse else s
            for j in range(H):
                rj = _sigmoid(gi[b, t, j] + gh[b, j] + b_hh[j])
                zj = _sigmoid(gi[b, t, H + j] + gh[b, H + j] + b_hh[H + j])
                hn = gh[b, 2 * H + j] + b_hh[2 * H + j]
                nj = math.tanh(gi[b, t, 2 * H + j] + rj * hn)
                r[b, t, j] = rj
                z[b, t, j] = zj
                n[b, t, j] = nj
                ghn[b, t, j] = hn
                hv = (1.0 - zj) * nj + zj * h[b, j]
                h[b, j] = hv
                hs[b, t, j] = hv
    return hs, r, z, n, ghn


@njit(cache=True)
def gru_backward(dhs, hs, r, z, n, ghn, lengths, W_hh, reverse):
    """Backpropagate ``dhs`` (gradient w.r.t. every hidden state) through time.

    Returns the gradient w.r.t. ``gi`` and the recurrent weights/biases.
    """
    B, T, H = hs.shape
    H3 = 3 * H
    d_gi = np.zeros((B, T, H3))
    dW_hh = np.zeros((H3, H))
    db_hh = np.zeros(H3)
    dh = np.zeros((B, H))
    dgh = np.zeros((B, H3))
    h_prev = np.zeros((B, H))
    Lmax = 0
    for b in range(B):
        Lmax = max(Lmax, lengths[b])
    for s in range(Lmax - 1, -1, -1):
        for b in range(B):
            L = lengths[b]
            if s >= L:
                for j in range(H3):
                    dgh[b, j] = 0.0
                for j in range(H):
                    h_prev[b, j] = 0.0
                continue
            t = L - 1 - s if reverse else s
            tp = t + 1 if reverse else t - 1
            for j in range(H):
                hp = hs[b, tp, j] if s > 0 else 0.0
                h_prev[b, j] = hp
                g = dh[b, j] + dhs[b, t, j]
                zj = z[b, t, j]
                nj = n[b, t, j]
                rj = r[b, t, j]
                dn_pre = g * (1.0 - zj) * (1.0 - nj * nj)
                dz_pre = g * (hp - nj) * zj * (1.0 - zj)
                dr_pre = dn_pre * ghn[b, t, j] * rj * (1.0 - rj)
                d_gi[b, t, j] = dr_pre
                d_gi[b, t, H + j] = dz_pre
                d_gi[b, t, 2 * H + j] = dn_pre
                dgh[b, j] = dr_pre
                dgh[b, H + j] = dz_pre
                dgh[b, 2 * H + j] = dn_pre * rj
                dh[b, j] = g * zj
        dW_hh += dgh.T @ h_prev
        for b in range(B):
            for j in range(H3):
                db_hh[j] += dgh[b, j]
        back = dgh @ W_hh
        for b in range(B):
            if s < lengths[b]:
                for j in range(H):
                    dh[b, j] += back[b, j]
    return d_gi, dW_hh, db_hh
