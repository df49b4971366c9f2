import numpy as np
import pytest
import torch
from PIL import Image

from thinroads.data import IMAGE_DIR, MASK_DIR


def write_pair(root, sample_id, image, mask, mask_values=(0, 255)):
    """Write one image/mask pair in the on-disk layout."""
    (root / IMAGE_DIR).mkdir(parents=True, exist_ok=True)
    (root / MASK_DIR).mkdir(parents=True, exist_ok=True)
    Image.fromarray(image).save(root / IMAGE_DIR / f"{sample_id}.png")
    lo, hi = mask_values
    encoded = np.where(mask > 0, np.uint8(hi), np.uint8(lo))
    Image.fromarray(encoded).save(root / MASK_DIR / f"{sample_id}.png")


def make_dataset(root, ids, size=32, split="train", seed=0):
    rng = np.random.default_rng(seed)
    for sample_id in ids:
        image = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
        mask = (rng.random((size, size)) < 0.2).astype(np.uint8)
        write_pair(root, sample_id, image, mask)
    (root / f"{split}.txt").write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")
    return root


@pytest.fixture
def tiny_dataset(tmp_path):
    return make_dataset(tmp_path / "data", ["a", "b", "c"], size=32)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
