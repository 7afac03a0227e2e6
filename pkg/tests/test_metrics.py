#!/usr/bin/env python3
"""
Tests for matte evaluation metrics and dataset evaluation
"""

import sys

import numpy as np
import torch
import torch.nn as nn

from harness import cleanup, raises, run_tests, scratch_dir

from analysis.metrics import (EvalProtocol, aggregate, append_summary_rows, eval_region_mask,
                              evaluate_dataset, image_metrics, read_report, write_report)
from model.network import NetworkConfig
from utils.datasets import load_manifest, write_image, write_label
from utils.errors import EmptyDatasetError, InvalidInputError


def _loop_oracle(pred, gt):
    """Per-pixel scalar loop over the same definitions"""
    sq = ab = sq_b = ab_b = 0.0
    n = n_b = 0
    for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist()):
        d = p - g
        sq += d * d
        ab += abs(d)
        n += 1
        if 0.05 < g < 0.95:
            sq_b += d * d
            ab_b += abs(d)
            n_b += 1
    return sq / n * 1e3, ab * 1e-3, (sq_b / n_b * 1e3 if n_b else None), (ab_b * 1e-3 if n_b else None)


def test_region_mask():
    assert not eval_region_mask(np.array([[0.0, 1.0], [1.0, 0.0]])).any()
    assert eval_region_mask(np.full((3, 3), 0.5)).all()
    assert eval_region_mask(np.array([[0.95, 0.94]])).tolist() == [[0.0, 1.0]]


def test_golden_2x2():
    m = image_metrics(np.zeros((2, 2)), np.array([[1.0, 1.0], [0.5, 0.0]]))
    assert np.isclose(m.mse_whole, 562.5)
    assert np.isclose(m.sad_whole, 0.0025)
    assert np.isclose(m.mse_boundary, 250.0)
    assert np.isclose(m.sad_boundary, 0.0005)

    same = image_metrics(np.full((4, 4), 0.3), np.full((4, 4), 0.3))
    assert same.mse_whole == same.sad_whole == same.mse_boundary == same.sad_boundary == 0.0


def test_matches_loop_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        pred, gt = rng.random((16, 16)), rng.random((16, 16))
        m = image_metrics(pred, gt)
        oracle = _loop_oracle(pred, gt)
        got = (m.mse_whole, m.sad_whole, m.mse_boundary, m.sad_boundary)
        assert all(abs(a - b) <= 1e-9 for a, b in zip(got, oracle)), (got, oracle)


def test_full_band_whole_equals_boundary():
    rng = np.random.default_rng(4)
    gt = np.full((16, 16), 0.5)
    for _ in range(20):
        m = image_metrics(rng.random((16, 16)), gt)
        assert np.isclose(m.mse_whole, m.mse_boundary, rtol=1e-12, atol=0.0)
        assert np.isclose(m.sad_whole, m.sad_boundary, rtol=1e-12, atol=0.0)


def test_monotone_under_error_domination():
    rng = np.random.default_rng(5)
    for _ in range(100):
        gt = rng.random((16, 16))
        big = rng.uniform(-0.5, 0.5, (16, 16))
        small = big * rng.random((16, 16))
        lo, hi = image_metrics(gt + small, gt), image_metrics(gt + big, gt)
        for key in ("mse_whole", "sad_whole", "mse_boundary", "sad_boundary"):
            a, b = getattr(lo, key), getattr(hi, key)
            if a is not None:
                assert a <= b + 1e-12, (key, a, b)


def test_sad_linearity_and_mismatch():
    rng = np.random.default_rng(1)
    gt = rng.random((8, 8))
    err = rng.random((8, 8)) * 0.2
    one = image_metrics(gt + err, gt)
    two = image_metrics(gt + 2 * err, gt)
    assert np.isclose(two.sad_whole, 2 * one.sad_whole)
    assert raises(InvalidInputError, image_metrics, np.zeros((2, 2)), np.zeros((3, 3)))


def test_aggregate_ignores_image_order():
    rng = np.random.default_rng(6)
    per_image = [image_metrics(rng.random((8, 8)), rng.random((8, 8)), f"img{i:02d}") for i in range(12)]
    reference = aggregate("set", per_image).to_dict()
    for _ in range(5):
        shuffled = [per_image[k] for k in rng.permutation(len(per_image))]
        assert aggregate("set", shuffled).to_dict() == reference


def test_aggregate_means_and_skips():
    a = image_metrics(np.zeros((2, 2)), np.array([[1.0, 1.0], [0.5, 0.0]]), "a")
    b = image_metrics(np.zeros((2, 2)), np.array([[1.0, 0.0], [0.0, 0.0]]), "b")
    report = aggregate("set", [b, a])
    assert report.n_images == 2 and report.n_boundary_skipped == 1
    assert np.isclose(report.mse_whole, (a.mse_whole + b.mse_whole) / 2)
    assert np.isclose(report.mse_boundary, a.mse_boundary)
    assert [p["image_id"] for p in report.per_image] == ["a", "b"]
    assert raises(EmptyDatasetError, aggregate, "set", [])


class _OracleNet(nn.Module):
    """Returns the red channel as the matte; the eval images store the gt there"""

    config = NetworkConfig()

    def __init__(self):
        super().__init__()
        self.anchor = nn.Parameter(torch.zeros(1))

    def forward(self, x):
        m = x[:, :1]
        return m, m


def test_evaluate_dataset_oracle():
    root = scratch_dir("evalset_")
    try:
        rng = np.random.default_rng(2)
        for i in range(3):
            gt = np.round(rng.random((24, 32)) * 255) / 255
            image = np.stack([gt, rng.random((24, 32)), rng.random((24, 32))], axis=-1)
            write_image(root / "images" / f"e{i}.png", image)
            write_label(root / "labels" / f"e{i}.png", gt)
        manifest = load_manifest(root, "matte")

        protocol = EvalProtocol(edge=24, loader_threads=2)
        report = evaluate_dataset(_OracleNet(), manifest, protocol, "oracle")
        assert report.n_images == 3
        assert report.mse_whole < 1e-9 and report.sad_whole < 1e-9
        again = evaluate_dataset(_OracleNet(), manifest, protocol, "oracle")
        assert report.to_dict() == again.to_dict()

        path = write_report(report, root / "report.json")
        assert read_report(path).summary_row() == report.summary_row()
        csv_path = append_summary_rows([report, again], root / "summary.csv", {"network": "oracle"})
        assert len(csv_path.read_text().strip().splitlines()) == 3
    finally:
        cleanup(root)


def main():
    return run_tests("METRIC TESTS", [
        ("boundary region", test_region_mask),
        ("golden 2x2", test_golden_2x2),
        ("loop oracle", test_matches_loop_oracle),
        ("full band whole = boundary", test_full_band_whole_equals_boundary),
        ("error domination", test_monotone_under_error_domination),
        ("SAD linearity", test_sad_linearity_and_mismatch),
        ("aggregate", test_aggregate_means_and_skips),
        ("aggregate order", test_aggregate_ignores_image_order),
        ("evaluate dataset oracle", test_evaluate_dataset_oracle),
    ])


if __name__ == "__main__":
    sys.exit(main())
