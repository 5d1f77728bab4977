"""Backend-dispatched convolution and pooling kernels.

Two interchangeable implementations live here: numba-jitted loops
(``numba_backend``) and a pure-numpy strided/einsum path
(``numpy_backend``).  The active one is chosen at import time from the
``MFINCEPTION_KERNELS`` environment variable (``numba``, ``numpy`` or
``auto``; default auto = numba when importable) and can be switched at
runtime with :func:`set_backend`.

This layer owns everything the two backends must agree on: shape
validation, output geometry, padding (zeros for conv/avg, -inf for max)
and the average-pool divisor, which counts only non-padding cells so a
constant input stays constant through a padded average pool.

Conventions: NCHW layout, cross-correlation (no kernel flip), max-pool
ties resolved to the first element in row-major window order.
"""

import os

import numpy as np

from ..errors import StructuralError
from . import numpy_backend

_BACKENDS = {"numpy": numpy_backend}

try:
    from . import numba_backend

    _BACKENDS["numba"] = numba_backend
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_backend = None

_active_name = None
_active = None


def set_backend(name):
    """Select the kernel backend ('numpy' or 'numba') for subsequent calls."""
    global _active_name, _active
    if name not in _BACKENDS:
        raise StructuralError(
            f"unknown kernel backend {name!r}; available: {sorted(_BACKENDS)}"
        )
    _active_name = name
    _active = _BACKENDS[name]


def get_backend():
    return _active_name


def available_backends():
    return sorted(_BACKENDS)


_env = os.environ.get("MFINCEPTION_KERNELS", "auto").strip().lower()
if _env in ("", "auto"):
    set_backend("numba" if "numba" in _BACKENDS else "numpy")
else:
    set_backend(_env)


def _pair(v, name):
    if isinstance(v, int):
        v = (v, v)
    a, b = int(v[0]), int(v[1])
    if name != "padding" and (a < 1 or b < 1):
        raise StructuralError(f"{name} must be >= 1, got {(a, b)}")
    if name == "padding" and (a < 0 or b < 0):
        raise StructuralError(f"padding must be >= 0, got {(a, b)}")
    return a, b


def _out_extent(size, k, s, p, what):
    padded = size + 2 * p
    if padded < k:
        raise StructuralError(
            f"{what}: padded extent {padded} smaller than kernel extent {k}"
        )
    out = (padded - k) // s + 1
    if out < 1:
        raise StructuralError(f"{what}: non-positive output extent")
    return out


def _pad_nchw(x, ph, pw, value=0.0):
    if ph == 0 and pw == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=value)


def conv2d_forward(x, w, b, stride, padding):
    """Cross-correlate NCHW ``x`` with OIHW ``w`` plus per-channel bias."""
    sh, sw = _pair(stride, "stride")
    ph, pw = _pair(padding, "padding")
    if x.ndim != 4 or w.ndim != 4:
        raise StructuralError("conv2d expects 4-d input and weights")
    if x.shape[1] != w.shape[1]:
        raise StructuralError(
            f"conv2d channel mismatch: input has {x.shape[1]}, weights expect {w.shape[1]}"
        )
    if b.shape != (w.shape[0],):
        raise StructuralError("conv2d bias must have one entry per output channel")
    ho = _out_extent(x.shape[2], w.shape[2], sh, ph, "conv2d height")
    wo = _out_extent(x.shape[3], w.shape[3], sw, pw, "conv2d width")
    xp = _pad_nchw(x, ph, pw)
    return _active.conv2d_forward(xp, np.ascontiguousarray(w), b, sh, sw, ho, wo)


def conv2d_backward(x, w, dy, stride, padding):
    """Gradients (dx, dw, db) of conv2d for upstream gradient ``dy``."""
    sh, sw = _pair(stride, "stride")
    ph, pw = _pair(padding, "padding")
    xp = _pad_nchw(x, ph, pw)
    dxp, dw, db = _active.conv2d_backward(
        xp, np.ascontiguousarray(w), np.ascontiguousarray(dy), sh, sw
    )
    h, wd = x.shape[2], x.shape[3]
    return np.ascontiguousarray(dxp[:, :, ph : ph + h, pw : pw + wd]), dw, db


def maxpool2d_forward(x, window, stride, padding=0):
    """Window maxima plus the padded flat index of each winning element."""
    kh, kw = _pair(window, "window")
    sh, sw = _pair(stride, "stride")
    ph, pw = _pair(padding, "padding")
    ho = _out_extent(x.shape[2], kh, sh, ph, "maxpool2d height")
    wo = _out_extent(x.shape[3], kw, sw, pw, "maxpool2d width")
    xp = _pad_nchw(x, ph, pw, value=-np.inf)
    return _active.maxpool2d_forward(xp, kh, kw, sh, sw, ho, wo)


def maxpool2d_backward(dy, idx, x_shape, window, stride, padding=0):
    kh, kw = _pair(window, "window")
    ph, pw = _pair(padding, "padding")
    n, c, h, w = x_shape
    hp, wp = h + 2 * ph, w + 2 * pw
    dxp = _active.maxpool2d_backward(
        np.ascontiguousarray(dy), idx, n, c, hp, wp
    )
    return np.ascontiguousarray(dxp[:, :, ph : ph + h, pw : pw + w])


def _avg_inv_count(h, w, kh, kw, sh, sw, ph, pw, ho, wo, dtype):
    # Number of real (non-padding) cells under each window position.
    mask = np.zeros((h + 2 * ph, w + 2 * pw), dtype=np.float64)
    mask[ph : ph + h, pw : pw + w] = 1.0
    sr, sc = mask.strides
    win = np.lib.stride_tricks.as_strided(
        mask, (ho, wo, kh, kw), (sr * sh, sc * sw, sr, sc), writeable=False
    )
    counts = win.sum(axis=(2, 3))
    return np.ascontiguousarray((1.0 / counts).astype(dtype))


def avgpool2d_forward(x, window, stride, padding=0):
    """Window means; padding cells are excluded from each window's divisor."""
    kh, kw = _pair(window, "window")
    sh, sw = _pair(stride, "stride")
    ph, pw = _pair(padding, "padding")
    ho = _out_extent(x.shape[2], kh, sh, ph, "avgpool2d height")
    wo = _out_extent(x.shape[3], kw, sw, pw, "avgpool2d width")
    inv = _avg_inv_count(x.shape[2], x.shape[3], kh, kw, sh, sw, ph, pw, ho, wo, x.dtype)
    xp = _pad_nchw(x, ph, pw)
    return _active.avgpool2d_forward(xp, kh, kw, sh, sw, ho, wo, inv)


def avgpool2d_backward(dy, x_shape, window, stride, padding=0):
    kh, kw = _pair(window, "window")
    sh, sw = _pair(stride, "stride")
    ph, pw = _pair(padding, "padding")
    n, c, h, w = x_shape
    ho, wo = dy.shape[2], dy.shape[3]
    inv = _avg_inv_count(h, w, kh, kw, sh, sw, ph, pw, ho, wo, dy.dtype)
    dxp = _active.avgpool2d_backward(
        np.ascontiguousarray(dy), kh, kw, sh, sw, n, c, h + 2 * ph, w + 2 * pw, inv
    )
    return np.ascontiguousarray(dxp[:, :, ph : ph + h, pw : pw + w])
