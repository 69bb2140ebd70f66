"""Pure numpy/scipy versions of the compiled kernels (same signatures).

The two directional recursions are first-order IIR filters, so
``scipy.signal.lfilter`` runs them in C along any axis.
"""
from __future__ import annotations

import numpy as np
from scipy.signal import lfilter


def _conv(src: np.ndarray, rho_r: float, rho_l: float) -> np.ndarray:
    right = lfilter([1.0], [1.0, -rho_r], src, axis=-1)
    left = lfilter([1.0], [1.0, -rho_l], src[..., ::-1], axis=-1)[..., ::-1]
    return right + left - src


def geom_conv(src, rho_r, rho_l, out):
    if src.size:
        out[...] = _conv(src, rho_r, rho_l)


def area_layer(prev, new, ret, r, inv_c, X, a_hi, positive):
    W = 2 * X + 1
    new[...] = 0.0
    ret[: a_hi + 1] = 0.0
    lim = min(X, a_hi)
    lo = X - lim
    block = prev[: a_hi + 1, lo: lo + 2 * lim + 1]
    C = inv_c * _conv(block, r, r)
    ret[: a_hi + 1] = C[:, lim]
    tail = 0.0
    if lim == X:
        b = np.arange(a_hi + 1)
        m = a_hi - b - X
        ok = m > 0
        if np.any(ok):
            geo = r * -np.expm1(m[ok] * np.log(r)) / (1.0 - r)
            edge = C[ok, -1] if positive else C[ok, -1] + C[ok, 0]
            tail = float(np.sum(geo * edge))
    first = 1 if positive else -lim
    for y in range(first, lim + 1):
        ay = abs(y)
        if ay > a_hi:
            continue
        new[ay: a_hi + 1, y + X] = C[: a_hi + 1 - ay, y + lim]
    return tail


def skew_shift(T, out, v0):
    S, W = T.shape
    out[...] = 0.0
    for col in range(W):
        v = v0 + col
        if v >= 0:
            if v < S:
                out[v:, col] = T[: S - v, col]
        elif -v < S:
            out[: S + v, col] = T[-v:, col]
