"""Tile dataset handling: on-disk layout, loading, augmentation, batching.

Layout expected under a dataset root:

    <root>/images/<id>.png|.tif     RGB tiles
    <root>/masks/<id>.png           single-channel 8-bit masks ({0,255})
    <root>/<split>.txt              one id per line (UTF-8, LF)
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

log = logging.getLogger(__name__)

IMAGE_DIR = "images"
MASK_DIR = "masks"
IMAGE_EXTENSIONS = (".png", ".tif", ".tiff")

DEFAULT_MEAN = (0.5, 0.5, 0.5)
DEFAULT_STD = (0.5, 0.5, 0.5)

FLIP_MODES = ("none", "h", "v", "diag")


@dataclass
class RasterSample:
    """An RGB tile paired with its binary road mask."""

    image: np.ndarray  # H x W x 3, uint8
    mask: np.ndarray   # H x W, values in {0, 1}
    id: str = ""

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"sample {self.id!r}: image must be HxWx3, got {self.image.shape}")
        if self.mask.shape != self.image.shape[:2]:
            raise ValueError(
                f"sample {self.id!r}: image/mask size mismatch "
                f"{self.image.shape[:2]} vs {self.mask.shape}")
        h, w = self.mask.shape
        if h < 32 or w < 32:
            raise ValueError(f"sample {self.id!r}: tiles must be at least 32x32, got {h}x{w}")
        bad = (self.mask != 0) & (self.mask != 1)
        if bad.any():
            raise ValueError(f"sample {self.id!r}: mask values must be 0 or 1")

    @property
    def shape(self):
        return self.mask.shape


@dataclass(frozen=True)
class DatasetManifest:
    """Resolved list of sample ids for one split of a dataset root."""

    root: Path
    split: str
    ids: tuple
    image_dir: str = IMAGE_DIR
    mask_dir: str = MASK_DIR

    def __len__(self):
        return len(self.ids)

    def image_path(self, sample_id):
        base = Path(self.root) / self.image_dir
        for ext in IMAGE_EXTENSIONS:
            p = base / f"{sample_id}{ext}"
            if p.exists():
                return p
        raise FileNotFoundError(f"no image file for id {sample_id!r} under {base}")

    def mask_path(self, sample_id):
        p = Path(self.root) / self.mask_dir / f"{sample_id}.png"
        if not p.exists():
            raise FileNotFoundError(f"no mask file for id {sample_id!r} under {p.parent}")
        return p


def load_manifest(root, split):
    """Read `<root>/<split>.txt` and verify every id resolves to an image and a mask.

    Ids are returned in lexicographic order regardless of file order.
    """
    root = Path(root)
    for sub in (IMAGE_DIR, MASK_DIR):
        if not (root / sub).is_dir():
            raise FileNotFoundError(f"dataset root {root} is missing the {sub}/ directory")
    list_file = root / f"{split}.txt"
    if not list_file.exists():
        raise FileNotFoundError(f"missing split file {list_file}")
    ids = sorted({line.strip() for line in list_file.read_text(encoding="utf-8").splitlines()
                  if line.strip()})
    manifest = DatasetManifest(root=root, split=split, ids=tuple(ids))
    for sample_id in ids:
        manifest.image_path(sample_id)
        manifest.mask_path(sample_id)
    return manifest


def load_sample(manifest, sample_id):
    """Load one image/mask pair; nonzero mask values are treated as road."""
    image = np.asarray(Image.open(manifest.image_path(sample_id)).convert("RGB"), dtype=np.uint8)
    raw_mask = np.asarray(Image.open(manifest.mask_path(sample_id)).convert("L"))
    odd = np.setdiff1d(np.unique(raw_mask), [0, 255])
    if odd.size:
        log.warning("mask for id %r has values outside {0,255} (e.g. %d); "
                    "treating all nonzero pixels as road", sample_id, int(odd[0]))
    mask = (raw_mask > 0).astype(np.uint8)
    if mask.shape != image.shape[:2]:
        raise ValueError(f"sample {sample_id!r}: image {image.shape[:2]} and mask "
                         f"{mask.shape} sizes differ")
    return RasterSample(image=image, mask=mask, id=sample_id)


class TileDataset:
    """Manifest-backed random access with an optional in-memory cache."""

    def __init__(self, manifest, cache=True):
        self.manifest = manifest
        self._cache = {} if cache else None

    def __len__(self):
        return len(self.manifest)

    def __getitem__(self, index):
        if self._cache is not None and index in self._cache:
            return self._cache[index]
        sample = load_sample(self.manifest, self.manifest.ids[index])
        if self._cache is not None:
            self._cache[index] = sample
        return sample


def random_crop(sample, size, rng):
    """Crop a size x size window, the same window on image and mask."""
    h, w = sample.shape
    if size > min(h, w):
        raise ValueError(f"crop size {size} exceeds tile extent {h}x{w}")
    if size % 32 != 0:
        raise ValueError(f"crop size must be a multiple of 32, got {size}")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return RasterSample(
        image=sample.image[top:top + size, left:left + size].copy(),
        mask=sample.mask[top:top + size, left:left + size].copy(),
        id=sample.id)


def augment_flip(sample, mode, rng=None):
    """Apply one flip to image and mask alike.

    `diag` is the transpose about the main diagonal and needs a square tile.
    """
    if mode not in FLIP_MODES:
        raise ValueError(f"unknown flip mode {mode!r}")
    if mode == "none":
        return sample
    if mode == "h":
        image, mask = sample.image[:, ::-1], sample.mask[:, ::-1]
    elif mode == "v":
        image, mask = sample.image[::-1], sample.mask[::-1]
    else:
        h, w = sample.shape
        if h != w:
            raise ValueError(f"diagonal flip needs a square tile, got {h}x{w}")
        image, mask = sample.image.transpose(1, 0, 2), sample.mask.T
    return RasterSample(image=np.ascontiguousarray(image),
                        mask=np.ascontiguousarray(mask), id=sample.id)


def random_flips(sample, rng, p=0.5):
    """Each flip applied independently with probability p (diag only when square)."""
    for mode in ("h", "v", "diag"):
        if mode == "diag" and sample.shape[0] != sample.shape[1]:
            continue
        if rng.random() < p:
            sample = augment_flip(sample, mode)
    return sample


@dataclass
class NormalizedBatch:
    """Batch of normalized image tensors with their masks."""

    images: torch.Tensor           # B x 3 x h x w, float32
    masks: torch.Tensor            # B x 1 x h x w, float32 in {0, 1}
    seed_state: object = None      # opaque provenance (seed, epoch, ids)


def normalize(samples, mean=DEFAULT_MEAN, std=DEFAULT_STD, seed_state=None):
    """Per-channel (raw/255 - mean) / std; masks cast to float unchanged."""
    mean = np.asarray(mean, dtype=np.float32)
    std = np.asarray(std, dtype=np.float32)
    if mean.shape != (3,) or std.shape != (3,):
        raise ValueError("mean and std must each have 3 entries")
    if (std <= 0).any():
        raise ValueError("std entries must be positive")
    if not samples:
        raise ValueError("cannot normalize an empty batch")
    shape = samples[0].shape
    if any(s.shape != shape for s in samples):
        raise ValueError("all samples in a batch must share the same size")
    h, w = shape
    if h % 32 or w % 32:
        raise ValueError(f"batch tiles must be multiples of 32, got {h}x{w}")
    images = np.stack([s.image for s in samples]).astype(np.float32) / 255.0
    images = (images - mean) / std
    images = np.ascontiguousarray(images.transpose(0, 3, 1, 2))
    masks = np.stack([s.mask for s in samples]).astype(np.float32)[:, None]
    return NormalizedBatch(images=torch.from_numpy(images),
                           masks=torch.from_numpy(masks),
                           seed_state=seed_state)


def sample_rng(seed, epoch, index):
    """Per-sample generator; identical streams no matter how work is sharded."""
    return np.random.default_rng([int(seed), int(epoch), int(index)])


def iter_batches(dataset, *, batch_size, seed, epoch, shuffle=True, crop=None,
                 augment=True, mean=DEFAULT_MEAN, std=DEFAULT_STD):
    """Yield NormalizedBatch objects for one epoch.

    The emitted sequence is a pure function of (seed, epoch, dataset order):
    shuffling uses rng(seed, epoch) and each sample's crop/flip draws come
    from rng(seed, epoch, dataset index).
    """
    n = len(dataset)
    if shuffle:
        order = np.random.default_rng([int(seed), int(epoch)]).permutation(n)
    else:
        order = np.arange(n)
    for start in range(0, n, batch_size):
        chunk = order[start:start + batch_size]
        batch = []
        for index in chunk:
            sample = dataset[int(index)]
            rng = sample_rng(seed, epoch, int(index))
            if crop is not None:
                sample = random_crop(sample, crop, rng)
            if augment:
                sample = random_flips(sample, rng)
            batch.append(sample)
        ids = tuple(s.id for s in batch)
        yield normalize(batch, mean, std, seed_state=(seed, epoch, ids))
