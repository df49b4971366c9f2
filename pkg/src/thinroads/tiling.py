"""Sliding-window inference over rasters far larger than one network window.

The raster is reflect-padded so square windows tile it completely, each
window is predicted independently, and overlapping probabilities are blended
by arithmetic mean. Windows larger than the raster are shrunk (with the
stride rescaled proportionally) so any raster of at least 32x32 works with
the defaults.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import data, metrics

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 1024
DEFAULT_STRIDE = 768


def _ceil32(n):
    return ((int(n) + 31) // 32) * 32


@dataclass
class WindowPlan:
    window: int               # effective square window side
    stride: int               # effective stride
    height: int               # source raster size
    width: int
    padded_h: int
    padded_w: int
    origins: tuple            # (top, left) per window, in the padded frame


def _axis_origins(extent, window, stride):
    xs = list(range(0, extent - window + 1, stride))
    if xs[-1] + window < extent:
        xs.append(extent - window)
    return xs


def plan_windows(height, width, window=DEFAULT_WINDOW, stride=DEFAULT_STRIDE):
    """Window origins covering every pixel at least once."""
    if window < 32 or window % 32:
        raise ValueError(f"window must be a multiple of 32 and >= 32, got {window}")
    if not 0 < stride <= window:
        raise ValueError(f"stride must be in (0, window], got {stride}")
    if height < 32 or width < 32:
        raise ValueError(f"raster must be at least 32x32, got {height}x{width}")
    effective = min(window, _ceil32(min(height, width)))
    if effective != window:
        stride = max(1, min(effective, round(stride * effective / window)))
        window = effective
    padded_h = max(height, window)
    padded_w = max(width, window)
    origins = tuple((top, left)
                    for top in _axis_origins(padded_h, window, stride)
                    for left in _axis_origins(padded_w, window, stride))
    return WindowPlan(window=window, stride=stride, height=height, width=width,
                      padded_h=padded_h, padded_w=padded_w, origins=origins)


@dataclass
class ProbabilityMosaic:
    accum: np.ndarray   # float32 probability sums
    count: np.ndarray   # float32 visit counts

    @property
    def prob(self):
        return self.accum / self.count


@torch.no_grad()
def predict_window(model, window_px, mean=data.DEFAULT_MEAN, std=data.DEFAULT_STD):
    """Sigmoid(d0) for one uint8 HxWx3 window (sides multiples of 32)."""
    model.eval()
    sample = data.RasterSample(image=window_px,
                               mask=np.zeros(window_px.shape[:2], dtype=np.uint8))
    batch = data.normalize([sample], mean, std)
    return torch.sigmoid(model(batch.images).d0).numpy()[0, 0]


def predict_mosaic(raster, model, plan=None, mean=data.DEFAULT_MEAN,
                   std=data.DEFAULT_STD, window=DEFAULT_WINDOW, stride=DEFAULT_STRIDE):
    """Slide the model over a uint8 HxWx3 raster and blend the probabilities."""
    raster = np.asarray(raster)
    if raster.ndim != 3 or raster.shape[2] != 3:
        raise ValueError(f"raster must be HxWx3, got {raster.shape}")
    h, w = raster.shape[:2]
    if plan is None:
        plan = plan_windows(h, w, window, stride)
    elif (plan.height, plan.width) != (h, w):
        raise ValueError(f"plan is for {plan.height}x{plan.width}, raster is {h}x{w}")
    pad_h, pad_w = plan.padded_h - h, plan.padded_w - w
    padded = np.pad(raster, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect") \
        if (pad_h or pad_w) else raster
    accum = np.zeros((plan.padded_h, plan.padded_w), dtype=np.float32)
    count = np.zeros((plan.padded_h, plan.padded_w), dtype=np.float32)
    for top, left in plan.origins:
        tile = padded[top:top + plan.window, left:left + plan.window]
        prob = predict_window(model, tile, mean, std)
        accum[top:top + plan.window, left:left + plan.window] += prob
        count[top:top + plan.window, left:left + plan.window] += 1.0
    return ProbabilityMosaic(accum=accum[:h, :w], count=count[:h, :w])


def evaluate_mosaic(prob, gt_mask, n_thresholds=256):
    """Threshold at 0.5 for the pixel metrics; ROC/AUC from the raw probabilities."""
    prob = np.asarray(prob)
    gt = np.asarray(gt_mask)
    if prob.shape != gt.shape:
        raise ValueError(f"probability {prob.shape} and ground truth {gt.shape} differ")
    pred = (prob >= metrics.THRESHOLD).astype(np.uint8)
    counts = metrics.accumulate(pred, gt)
    curve = metrics.roc_auc(prob, gt, n_thresholds=n_thresholds)
    values = metrics.scores(counts)
    values["auc"] = curve.auc
    return values, curve


def load_raster(path):
    """uint8 HxWx3 raster from an image file or a tile directory.

    A directory needs an `index.csv` with columns file,row,col giving each
    tile's top-left corner.
    """
    path = Path(path)
    if path.is_dir():
        index = path / "index.csv"
        if not index.exists():
            raise FileNotFoundError(f"tile directory {path} has no index.csv")
        tiles = []
        with open(index, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                tile = np.asarray(Image.open(path / row["file"]).convert("RGB"),
                                  dtype=np.uint8)
                tiles.append((int(row["row"]), int(row["col"]), tile))
        if not tiles:
            raise ValueError(f"{index} lists no tiles")
        height = max(r + t.shape[0] for r, _, t in tiles)
        width = max(c + t.shape[1] for _, c, t in tiles)
        raster = np.zeros((height, width, 3), dtype=np.uint8)
        for r, c, tile in tiles:
            raster[r:r + tile.shape[0], c:c + tile.shape[1]] = tile
        return raster
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def load_mask_raster(path):
    raw = np.asarray(Image.open(path).convert("L"))
    return (raw > 0).astype(np.uint8)


def save_probability_png(prob, path):
    """Probabilities quantized to 8-bit grayscale (round(prob * 255))."""
    img = np.rint(np.clip(prob, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(img).save(path)
    return Path(path)


def save_mask_png(mask, path):
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * np.uint8(255)).save(path)
    return Path(path)
