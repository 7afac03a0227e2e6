#!/usr/bin/env python3
"""
Tests for geometric and photometric augmentation
"""

import sys

import numpy as np

from harness import raises, run_tests

from utils.augment import (AugmentConfig, GeoTransform, PhotoJitter, apply_geo, apply_photo,
                           sample_geo, weak_strong_views)
from utils.errors import InvalidInputError


def _image(seed=0, h=40, w=56):
    return np.random.default_rng(seed).random((h, w, 3)).astype(np.float32)


def test_sample_geo_fixed_crop_and_determinism():
    for seed in range(20):
        t = sample_geo(np.random.default_rng(seed), (600, 800), (512, 512), out_size=512)
        assert t.crop_size == 512
    a = sample_geo(np.random.default_rng(5), (600, 800), (512, 768))
    b = sample_geo(np.random.default_rng(5), (600, 800), (512, 768))
    assert a == b


def test_sample_geo_uniform_sides():
    rng = np.random.default_rng(0)
    sides = np.array([sample_geo(rng, (100, 100), (512, 768)).crop_size for _ in range(10_000)])
    counts = np.bincount(sides - 512, minlength=257)
    assert sides.min() >= 512 and sides.max() <= 768
    expected = len(sides) / 257
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    dof = 256
    assert chi2 < dof + 5 * np.sqrt(2 * dof), chi2


def test_apply_geo_identity_and_flip():
    img = _image(h=32, w=32)
    mask = (img[..., 0] > 0.5).astype(np.float32)
    out, (m,) = apply_geo(GeoTransform.identity(32), img, [(mask, "mask")])
    assert np.array_equal(out, img) and np.array_equal(m, mask)

    flip = GeoTransform(scale=1.0, crop_origin=(0, 0), crop_size=32, hflip=True, out_size=32)
    once, _ = apply_geo(flip, img)
    twice, _ = apply_geo(flip, once)
    assert not np.array_equal(once, img)
    assert np.array_equal(twice, img)


def test_apply_geo_keeps_masks_binary():
    img = _image(1)
    mask = (img[..., 1] > 0.3).astype(np.float32)
    matte = img[..., 2]
    rng = np.random.default_rng(2)
    for _ in range(10):
        t = sample_geo(rng, img.shape[:2], (48, 72), out_size=36)
        out, (m, a) = apply_geo(t, img, [(mask, "mask"), (matte, "matte")])
        assert out.shape == (36, 36, 3) and m.shape == (36, 36) and a.shape == (36, 36)
        assert set(np.unique(m).tolist()) <= {0.0, 1.0}
        assert a.min() >= 0.0 and a.max() <= 1.0


def test_apply_geo_rejects_mismatch():
    img = _image()
    assert raises(InvalidInputError, apply_geo, GeoTransform.identity(16), img, [(np.zeros((3, 3)), "mask")])


def test_apply_photo():
    img = _image(3)
    assert apply_photo(PhotoJitter(), img) is img

    out = apply_photo(PhotoJitter(brightness=0.1, contrast=0.2, saturation=-0.3, hue=0.05), img)
    assert out.shape == img.shape
    assert out.min() >= 0.0 and out.max() <= 1.0

    flat = np.full((4, 4, 3), 0.5, dtype=np.float32)
    assert np.allclose(apply_photo(PhotoJitter(brightness=0.1), flat), 0.6, atol=1e-6)


def test_weak_strong_alignment():
    img = _image(4, 64, 64)
    mask = (img[..., 0] > 0.5).astype(np.float32)
    cfg = AugmentConfig(crop_min=40, crop_max=56, out_size=32)

    weak, strong, (m,) = weak_strong_views(np.random.default_rng(9), img, [(mask, "mask")], cfg)
    weak2, same, (m2,) = weak_strong_views(np.random.default_rng(9), img, [(mask, "mask")], cfg, strong=False)
    # both draws use the same geometry, so the weak views and masks agree
    assert np.array_equal(weak, weak2) and np.array_equal(m, m2)
    assert same is weak2
    assert strong.shape == weak.shape == (32, 32, 3)


def main():
    return run_tests("AUGMENTATION TESTS", [
        ("sample_geo fixed crop + determinism", test_sample_geo_fixed_crop_and_determinism),
        ("sample_geo uniform sides", test_sample_geo_uniform_sides),
        ("apply_geo identity and flip", test_apply_geo_identity_and_flip),
        ("apply_geo masks stay binary", test_apply_geo_keeps_masks_binary),
        ("apply_geo mismatch", test_apply_geo_rejects_mismatch),
        ("apply_photo", test_apply_photo),
        ("weak/strong alignment", test_weak_strong_alignment),
    ])


if __name__ == "__main__":
    sys.exit(main())
