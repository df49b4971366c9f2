"""Procedural narrow-road tiles for desk-scale training runs.

Each tile is a textured background crossed by a few thin, smoothly curved
strokes. The three things that make real narrow roads hard are modelled
directly: sub-5-pixel widths, occluders painted over the image (never the
labels), and a contrast knob that pulls the road intensity toward the local
background.
"""

import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .data import IMAGE_DIR, MASK_DIR, DatasetManifest, RasterSample


@dataclass(frozen=True)
class SynthConfig:
    size: int = 96                 # tile side, multiple of 32
    roads_min: int = 1
    roads_max: int = 3
    width_min: int = 1
    width_max: int = 5
    occlusion_rate: float = 0.15   # fraction of road length hidden by blobs
    contrast: float = 0.75         # 0 = road blends into background, 1 = full gap
    noise_amp: float = 0.05        # per-pixel noise amplitude in [0, 1] intensity
    seed: int = 0

    def __post_init__(self):
        if self.size < 32 or self.size % 32:
            raise ValueError(f"size must be a positive multiple of 32, got {self.size}")
        if not 0 <= self.roads_min <= self.roads_max:
            raise ValueError("need 0 <= roads_min <= roads_max")
        if not 1 <= self.width_min <= self.width_max:
            raise ValueError("need 1 <= width_min <= width_max")
        if not 0.0 <= self.occlusion_rate <= 1.0:
            raise ValueError("occlusion_rate must be in [0, 1]")
        if not 0.0 <= self.contrast <= 1.0:
            raise ValueError("contrast must be in [0, 1]")
        if self.noise_amp < 0:
            raise ValueError("noise_amp must be nonnegative")


POINT_SPACING = 0.3  # arc-length step when rasterizing strokes, in pixels


def smooth_polyline(control, samples_per_unit=1.0 / POINT_SPACING):
    """Densely sample a C1 curve through the control points.

    Interior corners are rounded with quadratic Bezier arcs between segment
    midpoints; the first and last control points stay on the curve.
    """
    control = np.asarray(control, dtype=np.float64)
    if len(control) < 2:
        return control
    mids = (control[:-1] + control[1:]) / 2.0
    pieces = [np.linspace(control[0], mids[0], max(
        2, int(np.linalg.norm(mids[0] - control[0]) * samples_per_unit)))]
    for i in range(1, len(control) - 1):
        a, b, c = mids[i - 1], control[i], mids[i]
        n = max(3, int((np.linalg.norm(b - a) + np.linalg.norm(c - b)) * samples_per_unit))
        t = np.linspace(0.0, 1.0, n)[:, None]
        pieces.append((1 - t) ** 2 * a + 2 * t * (1 - t) * b + t ** 2 * c)
    pieces.append(np.linspace(mids[-1], control[-1], max(
        2, int(np.linalg.norm(control[-1] - mids[-1]) * samples_per_unit))))
    return np.concatenate(pieces)


def stroke_points(shape, points, width):
    """Mark every pixel whose center lies within width/2 of the sampled curve."""
    h, w = shape
    mask = np.zeros((h, w), dtype=bool)
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return mask
    radius = width / 2.0
    reach = int(np.ceil(radius + 0.5))
    dy, dx = np.mgrid[-reach:reach + 1, -reach:reach + 1]
    offsets = np.stack([dy.ravel(), dx.ravel()], axis=1)
    centers = np.round(points).astype(np.int64)
    cells = centers[:, None, :] + offsets[None, :, :]
    dist2 = ((cells - points[:, None, :]) ** 2).sum(axis=2)
    hit = dist2 <= radius * radius
    ys, xs = cells[hit, 0], cells[hit, 1]
    keep = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
    mask[ys[keep], xs[keep]] = True
    return mask


def _wander(rng, size):
    """Control points of a random walk that enters from one border."""
    side = rng.integers(0, 4)
    pos = rng.uniform(0, size - 1)
    start = {0: (0.0, pos), 1: (size - 1.0, pos), 2: (pos, 0.0), 3: (pos, size - 1.0)}[int(side)]
    heading = {0: np.pi / 2, 1: -np.pi / 2, 2: 0.0, 3: np.pi}[int(side)]
    heading += rng.uniform(-0.6, 0.6)
    step = size / rng.uniform(4.0, 7.0)
    points = [np.array(start)]
    for _ in range(int(rng.integers(4, 9))):
        heading += rng.normal(0.0, 0.55)
        delta = step * np.array([np.sin(heading), np.cos(heading)])
        points.append(points[-1] + delta)
    return np.asarray(points)


def _smooth_field(rng, size, cells=6, amplitude=18.0):
    """Low-frequency intensity texture from a bilinearly upsampled coarse grid."""
    coarse = rng.normal(0.0, 1.0, size=(cells + 1, cells + 1))
    u = np.linspace(0, cells, size)
    i0 = np.clip(u.astype(int), 0, cells - 1)
    f = u - i0
    rows = coarse[i0][:, i0] * np.outer(1 - f, 1 - f) \
        + coarse[i0 + 1][:, i0] * np.outer(f, 1 - f) \
        + coarse[i0][:, i0 + 1] * np.outer(1 - f, f) \
        + coarse[i0 + 1][:, i0 + 1] * np.outer(f, f)
    return amplitude * rows


def generate_sample(cfg, index):
    """Deterministic tile for (cfg, index).

    The mask is the union of the road strokes and is fixed before occluders
    are painted, so labels stay continuous across occlusions.
    """
    rng = np.random.default_rng([int(cfg.seed), int(index)])
    size = cfg.size

    base = rng.uniform(90.0, 170.0)
    tint = rng.uniform(-12.0, 12.0, size=3)
    field = base + _smooth_field(rng, size)

    mask = np.zeros((size, size), dtype=bool)
    road_paint = []  # (stroke mask, dense points, intensity gap)
    n_roads = int(rng.integers(cfg.roads_min, cfg.roads_max + 1))
    for _ in range(n_roads):
        width = int(rng.integers(cfg.width_min, cfg.width_max + 1))
        points = smooth_polyline(_wander(rng, size))
        stroke = stroke_points((size, size), points, width)
        gap = rng.uniform(45.0, 80.0) * (1.0 if rng.random() < 0.5 else -1.0)
        road_paint.append((stroke, points, gap))
        mask |= stroke

    image = np.repeat(field[:, :, None], 3, axis=2) + tint
    for stroke, _, gap in road_paint:
        local = field[stroke]
        level = local + cfg.contrast * gap
        image[stroke] = level[:, None] + tint

    image = image + rng.normal(0.0, cfg.noise_amp * 255.0, size=(size, size, 3))

    # Occluders are drawn after every mask-affecting draw, so the labels of a
    # tile do not depend on occlusion_rate.
    if cfg.occlusion_rate > 0:
        yy, xx = np.mgrid[0:size, 0:size]
        for _, points, _ in road_paint:
            length = len(points) * POINT_SPACING
            count = int(np.ceil(cfg.occlusion_rate * length / 6.5))
            for _ in range(count):
                center = points[int(rng.integers(0, len(points)))]
                r = rng.uniform(2.0, 4.5)
                blob = (yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= r * r
                if blob.any():
                    patch = field[blob][:, None] + tint
                    image[blob] = patch + rng.normal(0.0, cfg.noise_amp * 255.0,
                                                     size=(int(blob.sum()), 3))

    image = np.clip(image, 0, 255).astype(np.uint8)
    return RasterSample(image=image, mask=mask.astype(np.uint8), id=f"synth_{index:06d}")


def generate_split(cfg, n, out_root, split="train", start_index=0):
    """Write n samples in the standard tile layout and return the manifest."""
    out_root = Path(out_root)
    (out_root / IMAGE_DIR).mkdir(parents=True, exist_ok=True)
    (out_root / MASK_DIR).mkdir(parents=True, exist_ok=True)
    ids = []
    for index in range(start_index, start_index + n):
        sample = generate_sample(cfg, index)
        Image.fromarray(sample.image).save(out_root / IMAGE_DIR / f"{sample.id}.png")
        Image.fromarray(sample.mask * np.uint8(255)).save(out_root / MASK_DIR / f"{sample.id}.png")
        ids.append(sample.id)
    (out_root / f"{split}.txt").write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")
    config_blob = dict(asdict(cfg), split=split, n=n, start_index=start_index)
    with open(out_root / f"synth_config_{split}.json", "w", encoding="utf-8") as fh:
        json.dump(config_blob, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return DatasetManifest(root=out_root, split=split, ids=tuple(sorted(ids)))


def dataset_digest(out_root):
    """SHA-256 over every file in a dataset tree (stable order)."""
    out_root = Path(out_root)
    digest = hashlib.sha256()
    for path in sorted(p for p in out_root.rglob("*") if p.is_file()):
        digest.update(path.relative_to(out_root).as_posix().encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()
