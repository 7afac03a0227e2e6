"""
Dataset ingestion, synthetic composition and the subset protocol.

Layout of a dataset directory:

    <root>/images/<id>.png   RGB image (a bare foreground for kind matte_fg)
    <root>/labels/<id>.png   8-bit single channel label (alpha, or 0/255 seg)
"""

import json
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

from utils import augment
from utils.errors import EmptyDatasetError, InvalidInputError, ManifestError
from utils.labels import composite

KINDS = ("seg", "matte_fg", "matte")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class ManifestEntry:
    source_id: str
    image: str
    label: str
    kind: str


@dataclass(frozen=True)
class DatasetManifest:
    root_path: str
    entries: tuple
    seed: int = 0

    def __len__(self):
        return len(self.entries)

    def ids(self):
        return [e.source_id for e in self.entries]


@dataclass
class MatteSample:
    fg: np.ndarray
    matte: np.ndarray
    source_id: str


@dataclass
class SegSample:
    image: np.ndarray
    seg: np.ndarray
    source_id: str


# ---------------------------------------------------------------- image IO

def read_image(path):
    """RGB image as float32 HxWx3 in [0, 1]"""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def read_label(path):
    """Single-channel label as float32 HxW in [0, 1]"""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32) / 255.0


def _to_uint8(x):
    return np.clip(np.round(np.asarray(x, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_image(path, image):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_uint8(image), mode="RGB").save(path)


def write_label(path, label):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_uint8(label), mode="L").save(path)


# ---------------------------------------------------------------- manifests

def load_manifest(root, kind, seed=0):
    """List every (image, label) pair under `root`, sorted by id"""
    if kind not in KINDS:
        raise InvalidInputError(f"unknown dataset kind: {kind}")

    root = Path(root)
    images_dir = root / "images"
    labels_dir = root / "labels"
    if root.is_dir() and not any(root.iterdir()):
        raise EmptyDatasetError(f"dataset directory {root} is empty")
    if not images_dir.is_dir():
        raise ManifestError("missing images directory", images_dir)

    images = sorted(p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not images:
        raise EmptyDatasetError(f"no images found in {images_dir}")

    entries = []
    for image_path in images:
        label_path = labels_dir / f"{image_path.stem}.png"
        if not label_path.exists():
            raise ManifestError("image has no label", image_path)
        entries.append(ManifestEntry(image_path.stem, str(image_path), str(label_path), kind))

    entries.sort(key=lambda e: e.source_id)
    return DatasetManifest(str(root), tuple(entries), seed)


def write_manifest_cache(manifest, path):
    """JSON-lines cache: one {id, image, label, kind} object per entry"""
    with open(path, "w") as f:
        for e in manifest.entries:
            f.write(json.dumps({"id": e.source_id, "image": e.image,
                                "label": e.label, "kind": e.kind}) + "\n")


def read_manifest_cache(path, root=None, seed=0):
    entries = []
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                entry = ManifestEntry(row["id"], row["image"], row["label"], row["kind"])
            except (ValueError, KeyError) as e:
                raise ManifestError(f"bad manifest cache line {line_no} ({e})", path)
            for p in (entry.image, entry.label):
                if not Path(p).exists():
                    raise ManifestError("listed file does not exist", p)
            entries.append(entry)
    entries.sort(key=lambda e: e.source_id)
    return DatasetManifest(str(root or Path(path).parent), tuple(entries), seed)


def sample_subset(manifest, count, seed):
    """
    Seeded subset of exactly `count` entries.

    Subsets are prefixes of one seeded permutation, so subset(n1) is
    contained in subset(n2) for n1 < n2 under the same seed. Entry order
    of the original manifest is preserved.
    """
    n = len(manifest)
    if count < 0 or count > n:
        raise InvalidInputError(f"subset count {count} outside [0, {n}]")
    if count == n:
        return manifest

    order = np.random.default_rng(seed).permutation(n)
    keep = sorted(order[:count].tolist())
    entries = tuple(manifest.entries[i] for i in keep)
    return replace(manifest, entries=entries, seed=seed)


def load_matte_sample(entry):
    fg = read_image(entry.image)
    matte = read_label(entry.label)
    if fg.shape[:2] != matte.shape:
        raise ManifestError("image and label sizes differ", entry.image)
    return MatteSample(fg, matte, entry.source_id)


def load_seg_sample(entry):
    image = read_image(entry.image)
    seg = (read_label(entry.label) >= 0.5).astype(np.float32)
    if image.shape[:2] != seg.shape:
        raise ManifestError("image and label sizes differ", entry.image)
    return SegSample(image, seg, entry.source_id)


def load_backgrounds(root):
    root = Path(root)
    paths = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES) if root.is_dir() else []
    if not paths:
        raise EmptyDatasetError(f"no background images in {root}")
    return [read_image(p) for p in paths]


# ---------------------------------------------------------------- composition

def fit_background(bg, size):
    """Scale the shortest side to cover `size` (h, w), then center-crop"""
    h, w = size
    bh, bw = bg.shape[:2]
    ratio = max(h / bh, w / bw)
    if ratio != 1.0:
        nh, nw = max(h, int(np.ceil(bh * ratio))), max(w, int(np.ceil(bw * ratio)))
        bg = cv2.resize(bg, (nw, nh), interpolation=cv2.INTER_LINEAR)
        bh, bw = nh, nw
    y0 = (bh - h) // 2
    x0 = (bw - w) // 2
    return np.ascontiguousarray(bg[y0:y0 + h, x0:x0 + w])


def background_index(seed, index, n_backgrounds):
    """Seeded background choice for sample `index`"""
    return int(np.random.default_rng([seed, index]).integers(n_backgrounds))


def compose_matte_batch(matte_samples, backgrounds, seed):
    """Composite every matte sample over a seeded choice of background"""
    if not backgrounds:
        raise EmptyDatasetError("background pool is empty")

    out = []
    for i, sample in enumerate(matte_samples):
        bg = backgrounds[background_index(seed, i, len(backgrounds))]
        bg = fit_background(bg, sample.fg.shape[:2])
        out.append((composite(sample.fg, bg, sample.matte), sample.matte))
    return out


def local_variance(image, window=5):
    """Mean over pixels of the local (box-window) luminance variance"""
    gray = image @ augment.LUMA if image.ndim == 3 else image
    gray = gray.astype(np.float64)
    mean = cv2.blur(gray, (window, window))
    mean_sq = cv2.blur(gray * gray, (window, window))
    return float(np.clip(mean_sq - mean * mean, 0.0, None).mean())


# ---------------------------------------------------------------- training sets

def _to_chw(image):
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1)))


def _to_1hw(label):
    return torch.from_numpy(np.ascontiguousarray(label))[None]


class _IndexedTrainingSet(Dataset):
    """
    Dataset indexed by global sample number `i` over a fixed step budget.

    Entry choice and augmentation randomness depend only on (seed, i),
    so batches are identical whatever the DataLoader worker count.
    """

    def __init__(self, entries, loader, n_samples, seed, offset=0):
        if not entries:
            raise EmptyDatasetError("training set is empty")
        self.entries = list(entries)
        self.loader = loader
        self.n_samples = int(n_samples)
        self.seed = int(seed)
        self.offset = int(offset)
        self._cache = {}

    def __len__(self):
        return max(0, self.n_samples - self.offset)

    def entry_index(self, i):
        n = len(self.entries)
        epoch, pos = divmod(i, n)
        return int(np.random.default_rng([self.seed, epoch]).permutation(n)[pos])

    def sample(self, k):
        if k not in self._cache:
            self._cache[k] = self.loader(self.entries[k])
        return self._cache[k]

    def rng(self, i):
        return np.random.default_rng([self.seed, 1, i])


class SegTrainingSet(_IndexedTrainingSet):
    """Natural images with coarse masks: returns weak view, strong view and mask"""

    def __init__(self, manifest, aug_cfg, n_samples, seed, strong=True, offset=0):
        super().__init__(manifest.entries, load_seg_sample, n_samples, seed, offset)
        self.aug_cfg = aug_cfg
        self.strong = strong

    def __getitem__(self, idx):
        i = idx + self.offset
        s = self.sample(self.entry_index(i))
        weak, strong, (seg,) = augment.weak_strong_views(
            self.rng(i), s.image, [(s.seg, "mask")], self.aug_cfg, strong=self.strong)
        return {"weak": _to_chw(weak), "strong": _to_chw(strong), "seg": _to_1hw(seg)}


class MatteTrainingSet(_IndexedTrainingSet):
    """
    Foreground + alpha samples composited over the background pool.

    With recompose=True every draw picks a fresh seeded background; with
    recompose=False the background is tied to the entry index.
    """

    def __init__(self, manifest, backgrounds, aug_cfg, n_samples, seed, recompose=True, offset=0):
        super().__init__(manifest.entries, load_matte_sample, n_samples, seed, offset)
        if not backgrounds:
            raise EmptyDatasetError("background pool is empty")
        self.backgrounds = backgrounds
        self.aug_cfg = aug_cfg
        self.recompose = recompose

    def __getitem__(self, idx):
        i = idx + self.offset
        k = self.entry_index(i)
        s = self.sample(k)
        bg_key = i if self.recompose else k
        bg = self.backgrounds[background_index(self.seed, bg_key, len(self.backgrounds))]
        image = composite(s.fg, fit_background(bg, s.fg.shape[:2]), s.matte)
        weak, _, (matte,) = augment.weak_strong_views(
            self.rng(i), image.astype(np.float32), [(s.matte, "matte")], self.aug_cfg, strong=False)
        return {"image": _to_chw(weak), "matte": _to_1hw(matte)}
