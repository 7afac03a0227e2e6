"""
Label algebra for matting: compositing, boundary extraction and
matte label blending.

Mattes and masks are 2-D grids (or batches of them). The elementwise
functions accept numpy arrays and torch tensors alike; `composite` works
on HxWx3 numpy images with an HxW matte.
"""

import numpy as np
import torch

from utils.errors import InvalidInputError

# Boundary band used both for boundary labels and for evaluation regions.
BOUNDARY_LOW = 0.05
BOUNDARY_HIGH = 0.95

BINARIZE_THRESHOLD = 0.5


def _is_tensor(x):
    return isinstance(x, torch.Tensor)


def _to_float_like(mask, like):
    """Cast a boolean mask to the floating dtype of `like`"""
    if _is_tensor(mask):
        dtype = like.dtype if like.is_floating_point() else torch.float32
        return mask.to(dtype)
    dtype = like.dtype if np.issubdtype(like.dtype, np.floating) else np.float32
    return mask.astype(dtype)


def _check_same_shape(**arrays):
    shapes = {name: tuple(a.shape) for name, a in arrays.items()}
    if len(set(shapes.values())) != 1:
        raise InvalidInputError(f"dimension mismatch: {shapes}")


def _check_range(name, x, low=0.0, high=1.0):
    size = x.numel() if _is_tensor(x) else x.size
    if size == 0:
        return
    lo = float(x.min())
    hi = float(x.max())
    if lo < low or hi > high:
        raise InvalidInputError(f"{name} values must lie in [{low}, {high}], got [{lo:.4g}, {hi:.4g}]")


def composite(fg, bg, matte):
    """
    Alpha-composite a foreground over a background.

    fg, bg: HxWx3 arrays in [0, 1]; matte: HxW array in [0, 1].
    Returns matte * fg + (1 - matte) * bg per pixel and channel.
    """
    fg = np.asarray(fg)
    bg = np.asarray(bg)
    matte = np.asarray(matte)

    if fg.shape != bg.shape or fg.ndim != 3 or fg.shape[:2] != matte.shape:
        raise InvalidInputError(
            f"dimension mismatch: fg {fg.shape}, bg {bg.shape}, matte {matte.shape}")

    a = matte[..., None]
    out = a * fg + (1.0 - a) * bg
    return np.clip(out, 0.0, 1.0)


def extract_boundary(matte):
    """Boundary label: 1 where 0.05 < matte < 0.95 (strict), else 0"""
    band = (matte > BOUNDARY_LOW) & (matte < BOUNDARY_HIGH)
    return _to_float_like(band, matte)


def binarize_boundary(raw_boundary):
    """Turn a continuous boundary-head output into a binary mask (ties go to 1)"""
    _check_range("raw boundary", raw_boundary)
    return _to_float_like(raw_boundary >= BINARIZE_THRESHOLD, raw_boundary)


def blend_matte(pseudo_matte, pseudo_boundary, seg):
    """
    Matte label blending: boundary * pseudo_matte + (1 - boundary) * seg.

    The boundary may be soft (values in [0, 1]); the training pipeline
    always passes a binarized mask.
    """
    _check_same_shape(pseudo_matte=pseudo_matte, pseudo_boundary=pseudo_boundary, seg=seg)
    return pseudo_boundary * pseudo_matte + (1 - pseudo_boundary) * seg
