"""Pure-numpy compute kernels for convolution and pooling.

All functions receive pre-padded inputs and precomputed output geometry from
the dispatch layer in ``kernels/__init__``; they do arithmetic only.  This
module is the fallback path when numba is unavailable (or disabled via
``MFINCEPTION_KERNELS=numpy``) and the reference the numba path is checked
against.
"""

import numpy as np


def _windows(xp, kh, kw, sh, sw, ho, wo):
    """Strided (N, C, ho, wo, kh, kw) view over a padded NCHW array."""
    n, c, _, _ = xp.shape
    sn, sc, srow, scol = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, ho, wo, kh, kw),
        strides=(sn, sc, srow * sh, scol * sw, srow, scol),
        writeable=False,
    )


def conv2d_forward(xp, w, b, sh, sw, ho, wo):
    _, _, kh, kw = w.shape
    win = _windows(xp, kh, kw, sh, sw, ho, wo)
    y = np.einsum("nchwkl,ockl->nohw", win, w, optimize=True)
    y += b[None, :, None, None]
    return np.ascontiguousarray(y)


def conv2d_backward(xp, w, dy, sh, sw):
    n, c, hp, wp = xp.shape
    _, _, kh, kw = w.shape
    ho, wo = dy.shape[2], dy.shape[3]

    db = dy.sum(axis=(0, 2, 3))
    win = _windows(xp, kh, kw, sh, sw, ho, wo)
    dw = np.einsum("nchwkl,nohw->ockl", win, dy, optimize=True)

    # Scatter into the padded input one kernel offset at a time; the strided
    # destination slices of a fixed (i, j) are disjoint, so += is safe.
    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += np.einsum(
                "nohw,oc->nchw", dy, w[:, :, i, j], optimize=True
            )
    return dxp, np.ascontiguousarray(dw), db


def maxpool2d_forward(xp, kh, kw, sh, sw, ho, wo):
    n, c, _, wp = xp.shape
    win = _windows(xp, kh, kw, sh, sw, ho, wo)
    flat = win.reshape(n, c, ho, wo, kh * kw)
    k = flat.argmax(axis=-1)  # first maximum in row-major window order
    y = np.take_along_axis(flat, k[..., None], axis=-1)[..., 0]

    rows = (np.arange(ho) * sh)[None, None, :, None] + k // kw
    cols = (np.arange(wo) * sw)[None, None, None, :] + k % kw
    idx = (rows * wp + cols).astype(np.int64)
    return np.ascontiguousarray(y), idx


def maxpool2d_backward(dy, idx, n, c, hp, wp):
    dxp = np.zeros((n, c, hp, wp), dtype=dy.dtype)
    base = (np.arange(n * c) * (hp * wp)).reshape(n, c, 1, 1)
    np.add.at(dxp.ravel(), (idx + base).ravel(), dy.ravel())
    return dxp


def avgpool2d_forward(xp, kh, kw, sh, sw, ho, wo, inv_count):
    win = _windows(xp, kh, kw, sh, sw, ho, wo)
    y = win.sum(axis=(4, 5)) * inv_count[None, None, :, :]
    return np.ascontiguousarray(y)


def avgpool2d_backward(dy, kh, kw, sh, sw, n, c, hp, wp, inv_count):
    dxp = np.zeros((n, c, hp, wp), dtype=dy.dtype)
    g = dy * inv_count[None, None, :, :]
    ho, wo = dy.shape[2], dy.shape[3]
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += g
    return dxp
