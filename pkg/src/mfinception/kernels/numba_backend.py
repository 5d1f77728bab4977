"""Numba-compiled kernels mirroring ``numpy_backend``.

Same calling conventions as the numpy module: padded inputs in, plain loops
inside.  ``fastmath`` stays off so results are deterministic and agree with
the numpy path to float tolerance.
"""

import numpy as np
from numba import njit

_JIT = dict(cache=True, fastmath=False, nogil=True)


@njit(**_JIT)
def conv2d_forward(xp, w, b, sh, sw, ho, wo):
    n = xp.shape[0]
    co, ci, kh, kw = w.shape
    y = np.empty((n, co, ho, wo), dtype=xp.dtype)
    for ni in range(n):
        for oi in range(co):
            for a in range(ho):
                row = y[ni, oi, a]
                for bb in range(wo):
                    row[bb] = b[oi]
                for c in range(ci):
                    for i in range(kh):
                        xrow = xp[ni, c, a * sh + i]
                        for j in range(kw):
                            wv = w[oi, c, i, j]
                            for bb in range(wo):
                                row[bb] += wv * xrow[bb * sw + j]
    return y


@njit(**_JIT)
def conv2d_backward(xp, w, dy, sh, sw):
    n, ci, hp, wp = xp.shape
    co = w.shape[0]
    kh, kw = w.shape[2], w.shape[3]
    ho, wo = dy.shape[2], dy.shape[3]

    db = np.zeros(co, dtype=dy.dtype)
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for ni in range(n):
        for oi in range(co):
            for a in range(ho):
                drow = dy[ni, oi, a]
                for bb in range(wo):
                    db[oi] += drow[bb]
                for c in range(ci):
                    for i in range(kh):
                        xrow = xp[ni, c, a * sh + i]
                        gxrow = dxp[ni, c, a * sh + i]
                        for j in range(kw):
                            wv = w[oi, c, i, j]
                            acc = dw[oi, c, i, j]
                            for bb in range(wo):
                                g = drow[bb]
                                acc += g * xrow[bb * sw + j]
                                gxrow[bb * sw + j] += g * wv
                            dw[oi, c, i, j] = acc
    return dxp, dw, db


@njit(**_JIT)
def maxpool2d_forward(xp, kh, kw, sh, sw, ho, wo):
    n, c, _, wp = xp.shape
    y = np.empty((n, c, ho, wo), dtype=xp.dtype)
    idx = np.empty((n, c, ho, wo), dtype=np.int64)
    for ni in range(n):
        for ci in range(c):
            for a in range(ho):
                for bb in range(wo):
                    best = xp[ni, ci, a * sh, bb * sw]
                    bi = (a * sh) * wp + bb * sw
                    for i in range(kh):
                        for j in range(kw):
                            v = xp[ni, ci, a * sh + i, bb * sw + j]
                            if v > best:  # strict: ties keep the first hit
                                best = v
                                bi = (a * sh + i) * wp + (bb * sw + j)
                    y[ni, ci, a, bb] = best
                    idx[ni, ci, a, bb] = bi
    return y, idx


@njit(**_JIT)
def maxpool2d_backward(dy, idx, n, c, hp, wp):
    dxp = np.zeros((n, c, hp, wp), dtype=dy.dtype)
    for ni in range(n):
        for ci in range(c):
            flat = dxp[ni, ci].reshape(hp * wp)
            for a in range(dy.shape[2]):
                for bb in range(dy.shape[3]):
                    flat[idx[ni, ci, a, bb]] += dy[ni, ci, a, bb]
    return dxp


@njit(**_JIT)
def avgpool2d_forward(xp, kh, kw, sh, sw, ho, wo, inv_count):
    n, c = xp.shape[0], xp.shape[1]
    y = np.zeros((n, c, ho, wo), dtype=xp.dtype)
    for ni in range(n):
        for ci in range(c):
            for a in range(ho):
                for bb in range(wo):
                    for i in range(kh):
                        for j in range(kw):
                            y[ni, ci, a, bb] += xp[ni, ci, a * sh + i, bb * sw + j]
                    y[ni, ci, a, bb] *= inv_count[a, bb]
    return y


@njit(**_JIT)
def avgpool2d_backward(dy, kh, kw, sh, sw, n, c, hp, wp, inv_count):
    dxp = np.zeros((n, c, hp, wp), dtype=dy.dtype)
    for ni in range(n):
        for ci in range(c):
            for a in range(dy.shape[2]):
                for bb in range(dy.shape[3]):
                    g = dy[ni, ci, a, bb] * inv_count[a, bb]
                    for i in range(kh):
                        for j in range(kw):
                            dxp[ni, ci, a * sh + i, bb * sw + j] += g
    return dxp
