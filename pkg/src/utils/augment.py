"""
Weak / strong augmentation.

The weak view is a geometric transform only (scale, crop, flip); the
strong view is the same geometric transform followed by colour jitter,
so any label map computed on the weak view lines up pixel for pixel with
the strong view.
"""

from dataclasses import dataclass, field

import cv2
import numpy as np

from utils.errors import InvalidInputError

LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)

# RGB <-> YIQ, used for hue rotation
_RGB2YIQ = np.array([[0.299, 0.587, 0.114],
                     [0.596, -0.274, -0.322],
                     [0.211, -0.523, 0.312]], dtype=np.float64)
_YIQ2RGB = np.linalg.inv(_RGB2YIQ)


@dataclass
class AugmentConfig:
    crop_min: int = 96
    crop_max: int = 128
    out_size: int = 96
    scale_min: float = 0.75
    scale_max: float = 1.25
    hflip_prob: float = 0.5
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1


@dataclass(frozen=True)
class GeoTransform:
    scale: float
    crop_origin: tuple  # (x, y) in the scaled, padded image
    crop_size: int
    hflip: bool
    out_size: int

    @classmethod
    def identity(cls, size):
        return cls(scale=1.0, crop_origin=(0, 0), crop_size=size, hflip=False, out_size=size)


@dataclass(frozen=True)
class PhotoJitter:
    brightness: float = 0.0
    contrast: float = 0.0
    saturation: float = 0.0
    hue: float = 0.0

    def is_identity(self):
        return not (self.brightness or self.contrast or self.saturation or self.hue)


def _scaled_dims(dims, scale):
    h, w = dims
    return max(1, int(round(h * scale))), max(1, int(round(w * scale)))


def sample_geo(rng, image_dims, crop_range, scale_range=(0.75, 1.25), hflip_prob=0.5, out_size=None):
    """
    Draw a geometric transform from `rng` (a numpy Generator).

    The crop side is uniform over the integers in crop_range; images smaller
    than the crop after scaling are reflection-padded by apply_geo.
    """
    crop_min, crop_max = crop_range
    side = int(rng.integers(crop_min, crop_max + 1))
    scale = float(rng.uniform(scale_range[0], scale_range[1]))
    hflip = bool(rng.random() < hflip_prob)

    sh, sw = _scaled_dims(image_dims, scale)
    ph, pw = max(sh, side), max(sw, side)
    y0 = int(rng.integers(0, ph - side + 1))
    x0 = int(rng.integers(0, pw - side + 1))

    return GeoTransform(scale=scale, crop_origin=(x0, y0), crop_size=side,
                        hflip=hflip, out_size=int(out_size or crop_min))


def _geo_one(transform, x, interpolation):
    h, w = x.shape[:2]
    sh, sw = _scaled_dims((h, w), transform.scale)
    if (sh, sw) != (h, w):
        x = cv2.resize(x, (sw, sh), interpolation=interpolation)

    side = transform.crop_size
    pad_h, pad_w = max(0, side - sh), max(0, side - sw)
    if pad_h or pad_w:
        pad = [(0, pad_h), (0, pad_w)] + [(0, 0)] * (x.ndim - 2)
        x = np.pad(x, pad, mode='reflect' if min(sh, sw) > 1 else 'edge')

    x0, y0 = transform.crop_origin
    x = x[y0:y0 + side, x0:x0 + side]

    if side != transform.out_size:
        size = transform.out_size
        x = cv2.resize(x, (size, size), interpolation=interpolation)

    if transform.hflip:
        x = x[:, ::-1]

    return np.ascontiguousarray(x)


def apply_geo(transform, image, labels=()):
    """
    Apply one spatial transform to an image and its label maps.

    labels is a sequence of (array, kind) with kind "matte" (bilinear,
    clamped to [0, 1]) or "mask" (nearest neighbour, stays binary).
    Returns (image, [label arrays]).
    """
    dims = image.shape[:2]
    for arr, kind in labels:
        if arr.shape[:2] != dims:
            raise InvalidInputError(f"dimension mismatch: image {dims}, {kind} {arr.shape[:2]}")
        if kind not in ("matte", "mask"):
            raise InvalidInputError(f"unknown label kind: {kind}")

    out_image = np.clip(_geo_one(transform, image, cv2.INTER_LINEAR), 0.0, 1.0)
    out_labels = []
    for arr, kind in labels:
        if kind == "matte":
            out_labels.append(np.clip(_geo_one(transform, arr, cv2.INTER_LINEAR), 0.0, 1.0))
        else:
            out_labels.append(_geo_one(transform, arr, cv2.INTER_NEAREST))

    return out_image, out_labels


def sample_jitter(rng, cfg):
    """Uniform deltas in [-bound, bound] for each jitter component"""
    return PhotoJitter(
        brightness=float(rng.uniform(-cfg.brightness, cfg.brightness)),
        contrast=float(rng.uniform(-cfg.contrast, cfg.contrast)),
        saturation=float(rng.uniform(-cfg.saturation, cfg.saturation)),
        hue=float(rng.uniform(-cfg.hue, cfg.hue)),
    )


def apply_photo(jitter, image):
    """
    Colour jitter in a fixed order: brightness, contrast, saturation, hue.

    brightness adds its delta; contrast scales around the mean luminance by
    (1 + delta); saturation scales around per-pixel luminance by (1 + delta);
    hue rotates chroma in YIQ space by delta * 360 degrees. Clamped to [0, 1]
    after every step.
    """
    if jitter.is_identity():
        return image

    out = image.astype(np.float32, copy=True)

    if jitter.brightness:
        out = np.clip(out + jitter.brightness, 0.0, 1.0)

    if jitter.contrast:
        mean = float((out @ LUMA).mean())
        out = np.clip((out - mean) * (1.0 + jitter.contrast) + mean, 0.0, 1.0)

    if jitter.saturation:
        gray = (out @ LUMA)[..., None]
        out = np.clip(gray + (out - gray) * (1.0 + jitter.saturation), 0.0, 1.0)

    if jitter.hue:
        theta = jitter.hue * 2.0 * np.pi
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)
        m = (_YIQ2RGB @ rot @ _RGB2YIQ).astype(np.float32)
        out = np.clip(out @ m.T, 0.0, 1.0)

    return out


def weak_strong_views(rng, image, labels, cfg, strong=True):
    """
    Sample one GeoTransform and build both views.

    Returns (weak_image, strong_image, labels). With strong=False the
    strong view is the weak view itself.
    """
    geo = sample_geo(rng, image.shape[:2], (cfg.crop_min, cfg.crop_max),
                     scale_range=(cfg.scale_min, cfg.scale_max),
                     hflip_prob=cfg.hflip_prob, out_size=cfg.out_size)
    weak, out_labels = apply_geo(geo, image, labels)
    if strong:
        strong_image = apply_photo(sample_jitter(rng, cfg), weak)
    else:
        strong_image = weak
    return weak, strong_image, out_labels
