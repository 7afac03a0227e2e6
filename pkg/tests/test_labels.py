#!/usr/bin/env python3
"""
Tests for compositing, boundary extraction, binarization and label blending
"""

import sys

import numpy as np
import torch

from harness import raises, run_tests

from utils.errors import InvalidInputError
from utils.labels import binarize_boundary, blend_matte, composite, extract_boundary


def _rng_images(seed=0, size=8):
    rng = np.random.default_rng(seed)
    return rng.random((size, size, 3)), rng.random((size, size, 3)), rng.random((size, size))


def test_composite_extremes():
    fg, bg, _ = _rng_images()
    ones = np.ones(fg.shape[:2])
    assert np.array_equal(composite(fg, bg, ones), fg)
    assert np.array_equal(composite(fg, bg, np.zeros_like(ones)), bg)


def test_composite_single_pixel():
    fg = np.full((1, 1, 3), 0.8)
    bg = np.full((1, 1, 3), 0.4)
    out = composite(fg, bg, np.full((1, 1), 0.5))
    assert np.allclose(out, 0.6)


def test_composite_rejects_mismatch():
    fg, bg, matte = _rng_images()
    assert raises(InvalidInputError, composite, fg, bg[:4], matte)
    assert raises(InvalidInputError, composite, fg, bg, matte[:4])


def test_extract_boundary_thresholds():
    m = np.array([[0.5, 0.05], [0.95, 0.0500001]])
    b = extract_boundary(m)
    assert b.tolist() == [[1.0, 0.0], [0.0, 1.0]]
    binary = (np.random.default_rng(1).random((16, 16)) > 0.5).astype(np.float32)
    assert not extract_boundary(binary).any()


def test_extract_boundary_torch():
    m = torch.tensor([[0.0, 0.3], [0.96, 1.0]])
    b = extract_boundary(m)
    assert b.dtype == torch.float32
    assert b.tolist() == [[0.0, 1.0], [0.0, 0.0]]


def test_binarize_boundary():
    assert binarize_boundary(np.full((3, 3), 0.7)).all()
    assert binarize_boundary(np.full((3, 3), 0.5)).all()
    assert not binarize_boundary(np.full((3, 3), 0.49)).any()
    assert raises(InvalidInputError, binarize_boundary, np.full((2, 2), 1.2))
    out = binarize_boundary(torch.rand(2, 1, 4, 4))
    assert set(out.unique().tolist()) <= {0.0, 1.0}


def test_blend_matte_identities():
    _, _, m = _rng_images(2)
    seg = (m > 0.5).astype(np.float64)
    assert np.array_equal(blend_matte(m, np.zeros_like(m), seg), seg)
    assert np.array_equal(blend_matte(m, np.ones_like(m), seg), m)

    pm = np.array([[0.3, 0.9]])
    pb = np.array([[1.0, 0.0]])
    s = np.array([[1.0, 0.0]])
    assert blend_matte(pm, pb, s).tolist() == [[0.3, 0.0]]


def test_blend_matte_range_and_mismatch():
    rng = np.random.default_rng(3)
    for _ in range(20):
        pm, pb = rng.random((8, 8)), (rng.random((8, 8)) > 0.5).astype(float)
        s = (rng.random((8, 8)) > 0.5).astype(float)
        out = blend_matte(pm, pb, s)
        assert out.min() >= 0.0 and out.max() <= 1.0
    assert raises(InvalidInputError, blend_matte, np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))


def _random_instance(rng):
    h, w = rng.integers(1, 65, size=2)
    fg, bg = rng.random((h, w, 3)), rng.random((h, w, 3))
    matte = rng.random((h, w))
    # exact band edges and binary values must appear too
    picks = rng.random((h, w))
    matte[picks < 0.05] = 0.05
    matte[(picks >= 0.05) & (picks < 0.1)] = 0.95
    matte[(picks >= 0.1) & (picks < 0.2)] = rng.integers(0, 2, size=int(((picks >= 0.1) & (picks < 0.2)).sum()))
    seg = (rng.random((h, w)) > 0.5).astype(np.float64)
    hard = (rng.random((h, w)) > 0.5).astype(np.float64)
    soft = rng.random((h, w))
    return fg, bg, matte, seg, hard, soft


def test_label_algebra_randomized():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        fg, bg, matte, seg, hard, soft = _random_instance(rng)
        ones, zeros = np.ones_like(matte), np.zeros_like(matte)

        assert np.array_equal(composite(fg, bg, ones), fg)
        assert np.array_equal(composite(fg, bg, zeros), bg)
        expected = matte[..., None] * fg + (1.0 - matte[..., None]) * bg
        assert np.abs(composite(fg, bg, matte) - expected).max() <= 1e-12

        assert np.array_equal(blend_matte(matte, zeros, seg), seg)
        assert np.array_equal(blend_matte(matte, ones, seg), matte)

        for alpha in (hard, soft):
            out = blend_matte(matte, alpha, seg)
            assert (out >= np.minimum(matte, seg) - 1e-12).all()
            assert (out <= np.maximum(matte, seg) + 1e-12).all()
            assert out.min() >= 0.0 and out.max() <= 1.0

        inside = hard == 1.0
        blended = blend_matte(matte, hard, seg)
        assert np.array_equal(extract_boundary(blended)[inside], extract_boundary(matte)[inside])
        outside = ~inside
        assert np.array_equal(blended[outside], seg[outside])

        assert not extract_boundary(seg).any()


def main():
    return run_tests("LABEL ALGEBRA TESTS", [
        ("composite extremes", test_composite_extremes),
        ("composite single pixel", test_composite_single_pixel),
        ("composite mismatch", test_composite_rejects_mismatch),
        ("boundary thresholds", test_extract_boundary_thresholds),
        ("boundary on tensors", test_extract_boundary_torch),
        ("binarize boundary", test_binarize_boundary),
        ("blend identities", test_blend_matte_identities),
        ("blend range and mismatch", test_blend_matte_range_and_mismatch),
        ("randomized label algebra", test_label_algebra_randomized),
    ])


if __name__ == "__main__":
    sys.exit(main())
