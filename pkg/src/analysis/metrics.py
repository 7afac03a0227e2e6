#!/usr/bin/env python3
"""
Matte evaluation: MSE and SAD over the whole image and over the boundary
region (ground truth strictly between 0.05 and 0.95).

Reported scales: MSE x 1e3, SAD / 1e3.
"""

import concurrent.futures
import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import cv2
import numpy as np
import torch

from model.network import forward
from utils.datasets import read_image, read_label
from utils.errors import EmptyDatasetError, InvalidInputError
from utils.labels import extract_boundary

MSE_SCALE = 1e3
SAD_SCALE = 1e-3

METRIC_FIELDS = ("mse_whole", "sad_whole", "mse_boundary", "sad_boundary")
CSV_FIELDS = ("dataset_id", "n_images") + METRIC_FIELDS + ("n_boundary_skipped", "n_unreadable")


@dataclass
class EvalProtocol:
    edge: int = 128
    evaluate_intermediate: bool = False
    loader_threads: int = 4


@dataclass
class ImageMetrics:
    image_id: str
    mse_whole: float
    sad_whole: float
    mse_boundary: float = None
    sad_boundary: float = None


@dataclass
class MetricReport:
    dataset_id: str
    n_images: int
    mse_whole: float
    sad_whole: float
    mse_boundary: float
    sad_boundary: float
    n_boundary_skipped: int = 0
    n_unreadable: int = 0
    per_image: list = field(default_factory=list)

    def summary_row(self):
        d = asdict(self)
        return {k: d[k] for k in CSV_FIELDS}

    def to_dict(self):
        d = asdict(self)
        d["scales"] = {"mse": MSE_SCALE, "sad": SAD_SCALE}
        return d


def eval_region_mask(gt):
    """Boundary region of a ground-truth matte; same rule as the boundary labels"""
    return extract_boundary(gt)


def image_metrics(pred, gt, image_id=""):
    """Whole and boundary MSE/SAD for one matte; boundary values are None when the region is empty"""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise InvalidInputError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")

    diff = pred - gt
    sq = diff * diff
    ab = np.abs(diff)

    region = eval_region_mask(gt) > 0
    n_region = int(region.sum())

    result = ImageMetrics(
        image_id=image_id,
        mse_whole=float(sq.mean() * MSE_SCALE),
        sad_whole=float(ab.sum() * SAD_SCALE),
    )
    if n_region:
        result.mse_boundary = float(sq[region].sum() / n_region * MSE_SCALE)
        result.sad_boundary = float(ab[region].sum() * SAD_SCALE)
    return result


def aggregate(dataset_id, per_image, n_unreadable=0):
    """Mean of per-image values; images without a boundary region are left out of the boundary means"""
    if not per_image:
        raise EmptyDatasetError(f"no evaluated images for {dataset_id}")

    per_image = sorted(per_image, key=lambda m: m.image_id)
    with_boundary = [m for m in per_image if m.mse_boundary is not None]

    def mean(values):
        return float(np.mean(values)) if values else None

    return MetricReport(
        dataset_id=dataset_id,
        n_images=len(per_image),
        mse_whole=mean([m.mse_whole for m in per_image]),
        sad_whole=mean([m.sad_whole for m in per_image]),
        mse_boundary=mean([m.mse_boundary for m in with_boundary]),
        sad_boundary=mean([m.sad_boundary for m in with_boundary]),
        n_boundary_skipped=len(per_image) - len(with_boundary),
        n_unreadable=n_unreadable,
        per_image=[asdict(m) for m in per_image],
    )


def _resize_shorter_edge(image, edge):
    h, w = image.shape[:2]
    if min(h, w) == edge:
        return image
    scale = edge / min(h, w)
    size = (max(1, int(round(w * scale))), max(1, int(round(h * scale))))
    return cv2.resize(image, size, interpolation=cv2.INTER_LINEAR)


def predict_matte(net, image, protocol, device="cpu"):
    """Shorter edge to protocol.edge, forward in eval mode, back to native size"""
    h, w = image.shape[:2]
    x = _resize_shorter_edge(image, protocol.edge)
    batch = torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1)))[None].to(device)
    param = next(net.parameters(), None)
    if param is not None:
        batch = batch.to(param.dtype)

    was_training = net.training
    net.eval()
    with torch.no_grad():
        matte, _ = forward(net, batch)
    if was_training:
        net.train()

    pred = matte[0, 0].detach().cpu().numpy().astype(np.float32)
    if pred.shape != (h, w):
        pred = cv2.resize(pred, (w, h), interpolation=cv2.INTER_LINEAR)
    return np.clip(pred, 0.0, 1.0)


def _load_pair(entry):
    try:
        return entry, read_image(entry.image), read_label(entry.label), None
    except Exception as e:
        return entry, None, None, e


def evaluate_dataset(net, manifest, protocol=None, dataset_id=None, device="cpu", log=print):
    protocol = protocol or EvalProtocol()
    dataset_id = dataset_id or Path(manifest.root_path).name
    if len(manifest) == 0:
        raise EmptyDatasetError(f"eval set {dataset_id} is empty")

    per_image = []
    unreadable = 0
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, protocol.loader_threads)) as executor:
        for entry, image, gt, error in executor.map(_load_pair, manifest.entries):
            if error is not None or image.shape[:2] != gt.shape:
                unreadable += 1
                log(f"⚠️ skipping unreadable eval image {entry.image}: {error or 'size mismatch'}")
                continue
            pred = predict_matte(net, image, protocol, device)
            per_image.append(image_metrics(pred, gt, entry.source_id))

    return aggregate(dataset_id, per_image, unreadable)


def write_report(report, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2)
    return path


def read_report(path):
    with open(path) as f:
        d = json.load(f)
    d.pop("scales", None)
    return MetricReport(**d)


def append_summary_rows(reports, csv_path, extra=None):
    """One CSV summary row per report; `extra` columns are prepended"""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    extra = extra or {}
    fieldnames = list(extra) + list(CSV_FIELDS)
    new_file = not csv_path.exists()
    with open(csv_path, "a", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        if new_file:
            writer.writeheader()
        for report in reports:
            writer.writerow({**extra, **report.summary_row()})
    return csv_path
