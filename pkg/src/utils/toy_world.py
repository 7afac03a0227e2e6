#!/usr/bin/env python3
"""
Procedural two-domain toy world for desk-scale experiments.

Writes four dataset directories under the output root:

    matte/         bare foregrounds + exact alpha, plus backgrounds/ (flat colours
                   and gradients: the synthetic-looking domain)
    natural/       the same kind of foregrounds over high-frequency textures,
                   labelled only with coarsened binary masks
    eval_matte/    held-out composites over flat backgrounds + exact alpha
    eval_natural/  held-out composites over textures + exact alpha
"""

import json
import shutil
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import cv2
import numpy as np
from tqdm import tqdm

from utils.datasets import local_variance, write_image, write_label
from utils.errors import InvalidInputError, OutputExistsError
from utils.labels import BOUNDARY_HIGH, BOUNDARY_LOW, composite
from utils.run_log import RunLogger

SUPERSAMPLE = 4

DOMAIN_DIRS = ("matte", "natural", "eval_matte", "eval_natural")

# stream ids for per-sample seeding
_FG, _BG_A, _BG_B, _COARSEN = 1, 2, 3, 4
_SPLIT = {"matte": 10, "natural": 20, "eval_matte": 30, "eval_natural": 40, "backgrounds": 50}


@dataclass
class ToyConfig:
    n_matte: int = 64
    n_seg: int = 256
    n_eval: int = 32
    n_backgrounds: int = 32
    image_size: int = 128
    seed: int = 0
    strands_min: int = 8
    strands_max: int = 24
    coarsen_min: int = 1
    coarsen_max: int = 3
    texture_margin: float = 0.005


@dataclass
class ToyWorld:
    root: str
    matte_dir: str
    backgrounds_dir: str
    natural_dir: str
    eval_matte_dir: str
    eval_natural_dir: str

    @classmethod
    def at(cls, root):
        root = Path(root)
        return cls(root=str(root),
                   matte_dir=str(root / "matte"),
                   backgrounds_dir=str(root / "matte" / "backgrounds"),
                   natural_dir=str(root / "natural"),
                   eval_matte_dir=str(root / "eval_matte"),
                   eval_natural_dir=str(root / "eval_natural"))

    def eval_sets(self):
        return {"eval_matte": self.eval_matte_dir, "eval_natural": self.eval_natural_dir}


# ---------------------------------------------------------------- rendering

def render_foreground(rng, size, strands=(8, 24)):
    """
    One toy 'person': head and shoulders with anti-aliased edges and thin
    semi-transparent hair strands. Returns (fg HxWx3, alpha HxW), float32.
    """
    big = size * SUPERSAMPLE
    body = np.zeros((big, big), np.uint8)

    cx = rng.uniform(0.35, 0.65) * big
    head_r = rng.uniform(0.11, 0.17) * big
    cy = rng.uniform(0.30, 0.45) * big
    aspect = rng.uniform(0.85, 1.1)
    cv2.ellipse(body, (int(cx), int(cy)), (int(head_r), int(head_r * 1.15 * aspect)),
                0, 0, 360, 255, -1, cv2.LINE_AA)

    # neck and torso run off the bottom edge
    neck_w = head_r * rng.uniform(0.4, 0.6)
    cv2.rectangle(body, (int(cx - neck_w), int(cy)), (int(cx + neck_w), int(cy + head_r * 1.8)), 255, -1)
    shoulder_y = cy + head_r * rng.uniform(1.5, 1.9)
    torso_w = head_r * rng.uniform(2.0, 2.8)
    cv2.ellipse(body, (int(cx), int(shoulder_y + big * 0.35)), (int(torso_w), int(big * 0.4)),
                0, 180, 360, 255, -1, cv2.LINE_AA)
    cv2.rectangle(body, (int(cx - torso_w), int(shoulder_y + big * 0.35)), (int(cx + torso_w), big), 255, -1)

    hair = np.zeros((big, big), np.float32)
    for _ in range(int(rng.integers(strands[0], strands[1] + 1))):
        angle = rng.uniform(-np.pi * 0.95, -np.pi * 0.05)
        x, y = cx + head_r * np.cos(angle), cy + head_r * 1.1 * np.sin(angle)
        heading = angle + rng.normal(0.0, 0.3)
        length = rng.uniform(0.08, 0.25) * big
        steps = 12
        pts = [(x, y)]
        for _ in range(steps):
            heading += rng.normal(0.0, 0.25)
            x += np.cos(heading) * length / steps
            y += np.sin(heading) * length / steps
            pts.append((x, y))
        poly = np.round(np.array(pts)).astype(np.int32).reshape(-1, 1, 2)
        strand = np.zeros((big, big), np.uint8)
        cv2.polylines(strand, [poly], False, 255, int(rng.integers(1, 3)), cv2.LINE_AA)
        hair = np.maximum(hair, strand.astype(np.float32) / 255.0 * rng.uniform(0.4, 0.9))

    alpha_big = np.maximum(body.astype(np.float32) / 255.0, hair)
    alpha = cv2.resize(alpha_big, (size, size), interpolation=cv2.INTER_AREA)
    alpha = cv2.GaussianBlur(alpha, (0, 0), 0.6)
    alpha = np.clip(alpha, 0.0, 1.0)

    # colours: clothing gradient, skin on the head, hair colour on strands
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / size
    cloth_a, cloth_b = rng.uniform(0.1, 0.9, 3), rng.uniform(0.1, 0.9, 3)
    fg = cloth_a + (cloth_b - cloth_a) * yy[..., None]
    head_big = np.zeros((big, big), np.uint8)
    cv2.ellipse(head_big, (int(cx), int(cy)), (int(head_r), int(head_r * 1.15 * aspect)),
                0, 0, 360, 255, -1, cv2.LINE_AA)
    head = cv2.resize(head_big.astype(np.float32) / 255.0, (size, size), interpolation=cv2.INTER_AREA)[..., None]
    skin = rng.uniform(0.45, 0.95) * np.array([1.0, 0.8, 0.65])
    fg = fg * (1 - head) + skin * head
    hair_small = cv2.resize(hair, (size, size), interpolation=cv2.INTER_AREA)[..., None]
    hair_colour = rng.uniform(0.05, 0.6) * np.array([1.0, 0.85, 0.7])
    fg = fg * (1 - np.clip(hair_small * 2, 0, 1)) + hair_colour * np.clip(hair_small * 2, 0, 1)
    fg = fg + 0.03 * np.sin(xx * 20 + yy * 13)[..., None]

    return np.clip(fg, 0.0, 1.0).astype(np.float32), alpha.astype(np.float32)


def render_flat_background(rng, size):
    """Flat colour or a smooth two-colour linear gradient"""
    c0 = rng.uniform(0.0, 1.0, 3)
    if rng.random() < 0.5:
        return np.broadcast_to(c0, (size, size, 3)).astype(np.float32).copy()
    c1 = rng.uniform(0.0, 1.0, 3)
    theta = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / max(size - 1, 1)
    t = np.clip(0.5 + (xx - 0.5) * np.cos(theta) + (yy - 0.5) * np.sin(theta), 0, 1)[..., None]
    return (c0 * (1 - t) + c1 * t).astype(np.float32)


def render_texture_background(rng, size):
    """High-frequency gratings plus noise; never contains figure-like shapes"""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    base = rng.uniform(0.2, 0.8, 3)
    out = np.broadcast_to(base, (size, size, 3)).astype(np.float32).copy()
    for _ in range(int(rng.integers(3, 6))):
        period = rng.uniform(2.0, 8.0)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period + phase)
        out += rng.uniform(0.08, 0.2) * wave[..., None] * rng.uniform(-1.0, 1.0, 3)
    out += rng.normal(0.0, 0.08, (size, size, 3))
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def coarsen_mask(rng, alpha, radius_range=(1, 3)):
    """Binarize at 0.5 then dilate or erode by a random radius"""
    mask = (alpha >= 0.5).astype(np.uint8)
    r = int(rng.integers(radius_range[0], radius_range[1] + 1))
    kernel = cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (2 * r + 1, 2 * r + 1))
    if rng.random() < 0.5:
        mask = cv2.dilate(mask, kernel)
    else:
        mask = cv2.erode(mask, kernel)
    return mask.astype(np.float32)


def has_boundary(alpha):
    return bool(((alpha > BOUNDARY_LOW) & (alpha < BOUNDARY_HIGH)).any())


# ---------------------------------------------------------------- generator

class ToyWorldGenerator:
    def __init__(self, output_dir, config=None, overwrite=False, quiet=False):
        self.output_dir = Path(output_dir)
        self.config = config or ToyConfig()
        self.overwrite = overwrite
        self.quiet = quiet
        self.world = ToyWorld.at(self.output_dir)

        self._validate()
        self._prepare_output()
        self.logger = RunLogger(self.output_dir / "logs", "toy_world", quiet=quiet)
        self.log = self.logger.log

    def _validate(self):
        cfg = self.config
        for name in ("n_matte", "n_seg", "n_eval", "n_backgrounds", "image_size"):
            if getattr(cfg, name) <= 0:
                raise InvalidInputError(f"toy config {name} must be positive, got {getattr(cfg, name)}")
        if cfg.image_size < 16:
            raise InvalidInputError("toy image_size must be at least 16")

    def _prepare_output(self):
        if self.output_dir.exists() and any(self.output_dir.iterdir()):
            if not self.overwrite:
                raise OutputExistsError(f"output directory is not empty: {self.output_dir} (use overwrite)")
            for name in DOMAIN_DIRS + ("logs",):
                shutil.rmtree(self.output_dir / name, ignore_errors=True)
            (self.output_dir / "toy_world.json").unlink(missing_ok=True)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _rng(self, split, stream, i):
        return np.random.default_rng([self.config.seed, _SPLIT[split], stream, i])

    def _foreground(self, split, i):
        cfg = self.config
        for attempt in range(16):
            fg, alpha = render_foreground(self._rng(split, _FG, i * 16 + attempt), cfg.image_size,
                                          (cfg.strands_min, cfg.strands_max))
            if has_boundary(alpha):
                return fg, alpha
        raise RuntimeError(f"could not render a foreground with a boundary band ({split} #{i})")

    def _texture(self, split, i):
        cfg = self.config
        for attempt in range(16):
            bg = render_texture_background(self._rng(split, _BG_B, i * 16 + attempt), cfg.image_size)
            if local_variance(bg) >= cfg.texture_margin:
                return bg
        raise RuntimeError(f"texture background below variance margin ({split} #{i})")

    def generate(self):
        """Render every split and return the ToyWorld paths"""
        cfg = self.config
        start = time.time()
        self.log(f"🚀 Generating toy world in {self.output_dir}")
        self.log(f"   seed={cfg.seed} size={cfg.image_size} matte={cfg.n_matte} "
                 f"seg={cfg.n_seg} eval={cfg.n_eval} backgrounds={cfg.n_backgrounds}")

        var_a, var_b = [], []
        world = self.world
        bg_dir = Path(world.backgrounds_dir)

        for i in tqdm(range(cfg.n_backgrounds), desc="backgrounds", disable=self.quiet):
            bg = render_flat_background(self._rng("backgrounds", _BG_A, i), cfg.image_size)
            var_a.append(local_variance(bg))
            write_image(bg_dir / f"bg_{i:05d}.png", bg)

        for i in tqdm(range(cfg.n_matte), desc="matte", disable=self.quiet):
            fg, alpha = self._foreground("matte", i)
            write_image(Path(world.matte_dir) / "images" / f"matte_{i:05d}.png", fg)
            write_label(Path(world.matte_dir) / "labels" / f"matte_{i:05d}.png", alpha)

        for i in tqdm(range(cfg.n_seg), desc="natural", disable=self.quiet):
            fg, alpha = self._foreground("natural", i)
            bg = self._texture("natural", i)
            var_b.append(local_variance(bg))
            seg = coarsen_mask(self._rng("natural", _COARSEN, i), alpha, (cfg.coarsen_min, cfg.coarsen_max))
            write_image(Path(world.natural_dir) / "images" / f"natural_{i:05d}.png", composite(fg, bg, alpha))
            write_label(Path(world.natural_dir) / "labels" / f"natural_{i:05d}.png", seg)

        for split, out_dir in (("eval_matte", world.eval_matte_dir), ("eval_natural", world.eval_natural_dir)):
            for i in tqdm(range(cfg.n_eval), desc=split, disable=self.quiet):
                fg, alpha = self._foreground(split, i)
                if split == "eval_matte":
                    bg = render_flat_background(self._rng(split, _BG_A, i), cfg.image_size)
                else:
                    bg = self._texture(split, i)
                write_image(Path(out_dir) / "images" / f"{split}_{i:05d}.png", composite(fg, bg, alpha))
                write_label(Path(out_dir) / "labels" / f"{split}_{i:05d}.png", alpha)

        gap = float(np.mean(var_b) - np.mean(var_a))
        if gap < cfg.texture_margin:
            raise RuntimeError(f"background variance gap {gap:.5f} below margin {cfg.texture_margin}")

        summary = {
            "config": asdict(cfg),
            "paths": asdict(world),
            "counts": {"matte": cfg.n_matte, "natural": cfg.n_seg, "eval_matte": cfg.n_eval,
                       "eval_natural": cfg.n_eval, "backgrounds": cfg.n_backgrounds},
            "background_variance": {"flat": float(np.mean(var_a)), "texture": float(np.mean(var_b)),
                                    "gap": gap},
        }
        with open(self.output_dir / "toy_world.json", "w") as f:
            json.dump(summary, f, indent=2)

        self.log(f"✅ Toy world written in {time.time() - start:.1f}s "
                 f"(background variance gap {gap:.4f})")
        return world


def generate_toy_world(config, output_dir, overwrite=False, quiet=False):
    return ToyWorldGenerator(output_dir, config, overwrite=overwrite, quiet=quiet).generate()
