"""Separable bilinear/bicubic resampling with exactly specified kernels.

Resizing along one axis is a fixed linear map, materialized as an
(out_size x in_size) weight matrix: triangle kernel for bilinear, Keys cubic
(parameter a, default -0.5) for bicubic. When downsampling with antialias the
kernel support is stretched by the scale factor (the usual prefilter).
Out-of-frame taps are clamped to the border and each row is normalized to
sum 1. The same matrices drive dataset degradation, the interpolation
baseline, and the network's non-learned upsampling paths, so all of them
agree to the last bit.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, InputError

MODES = ("bilinear", "bicubic")


def _triangle(t: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.abs(t))


def _keys_cubic(t: np.ndarray, a: float) -> np.ndarray:
    at = np.abs(t)
    inner = (a + 2.0) * at**3 - (a + 3.0) * at**2 + 1.0
    outer = a * at**3 - 5.0 * a * at**2 + 8.0 * a * at - 4.0 * a
    return np.where(at <= 1.0, inner, np.where(at < 2.0, outer, 0.0))


def resample_matrix(
    n_in: int,
    n_out: int,
    mode: str = "bilinear",
    a: float = -0.5,
    antialias: bool = True,
) -> np.ndarray:
    """Weight matrix mapping a length-n_in axis to length n_out."""
    if mode not in MODES:
        raise ConfigError(f"unknown resampling mode {mode!r}")
    if n_in < 1 or n_out < 1:
        raise InputError("axis sizes must be >= 1")
    support = 1.0 if mode == "bilinear" else 2.0
    kernel = _triangle if mode == "bilinear" else (lambda t: _keys_cubic(t, a))

    scale = n_in / n_out
    fscale = scale if (antialias and scale > 1.0) else 1.0
    reach = support * fscale

    mat = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        center = (i + 0.5) * scale - 0.5
        lo = int(np.floor(center - reach)) + 1
        hi = int(np.ceil(center + reach))
        taps = np.arange(lo, hi)
        w = kernel((taps - center) / fscale)
        np.add.at(mat[i], np.clip(taps, 0, n_in - 1), w)
        mat[i] /= mat[i].sum()
    return mat


def resample(
    image: np.ndarray,
    out_h: int,
    out_w: int,
    mode: str = "bilinear",
    a: float = -0.5,
    antialias: bool = True,
) -> np.ndarray:
    """Resize the trailing two axes of `image` (any leading axes allowed)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim < 2:
        raise InputError("resample expects at least a 2-D array")
    h, w = img.shape[-2], img.shape[-1]
    ah = resample_matrix(h, out_h, mode, a, antialias)
    aw = resample_matrix(w, out_w, mode, a, antialias)
    out = np.einsum("ij,...jk,lk->...il", ah, img, aw)
    return out
