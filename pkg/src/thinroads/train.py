"""Training loop: adaptive-moment optimization with stepped lr, deep
supervision, per-epoch validation, checkpointing and a CSV/figure report.

Everything that draws randomness is keyed off the config seed, so two runs
with the same seed produce identical trajectories and masks.
"""

import csv
import logging
from dataclasses import dataclass, asdict, field, replace
from pathlib import Path

import numpy as np
import torch

from . import data, metrics
from .config import TrainConfig
from .losses import deep_supervised_loss
from .model import NarrowRoadNet

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Raised when a step produces a non-finite loss."""


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val_iou: float
    val_f1: float


@dataclass
class FitResult:
    history: list
    checkpoint: Path
    steps: int

    @property
    def final(self):
        return self.history[-1] if self.history else None


def lr_at(epoch, cfg):
    """Piecewise-constant schedule; drops apply from the listed epoch onward."""
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    drops = sum(1 for boundary in cfg.lr_drop_epochs if epoch >= boundary)
    return cfg.lr * cfg.lr_drop_factor ** drops


def build_model(cfg):
    return NarrowRoadNet(encoder=cfg.encoder, use_acam=cfg.use_acam,
                         use_gam=cfg.use_gam, use_ram=cfg.use_ram)


def build_optimizer(model, cfg):
    # Moment coefficients (0.9, 0.999), eps 1e-8, no weight decay.
    return torch.optim.Adam(model.parameters(), lr=cfg.lr,
                            betas=(0.9, 0.999), eps=1e-8)


def train_step(model, optimizer, batch, weights):
    """One forward/backward/update; aborts with diagnostics on non-finite loss."""
    model.train()
    sides = model(batch.images)
    total, report = deep_supervised_loss(sides, batch.masks, weights)
    if not np.isfinite(report.total):
        raise TrainingDiverged(
            f"non-finite loss on batch {batch.seed_state!r}: {report}")
    optimizer.zero_grad(set_to_none=True)
    total.backward()
    optimizer.step()
    return report


@dataclass
class EvalResult:
    counts: metrics.ConfusionCounts
    per_image: list
    iou: float
    f1: float
    probs: list = field(default_factory=list)
    gts: list = field(default_factory=list)


@torch.no_grad()
def evaluate_tiles(model, dataset, batch_size=8, mean=data.DEFAULT_MEAN,
                   std=data.DEFAULT_STD, collect_probs=False):
    """Threshold sigmoid(d0) at 0.5 and pool confusion counts over a split."""
    model.eval()
    total = metrics.ConfusionCounts()
    per_image = []
    probs, gts = [], []
    for batch in data.iter_batches(dataset, batch_size=batch_size, seed=0, epoch=0,
                                   shuffle=False, crop=None, augment=False,
                                   mean=mean, std=std):
        prob = torch.sigmoid(model(batch.images).d0).numpy()[:, 0]
        gt = batch.masks.numpy()[:, 0].astype(np.uint8)
        pred = (prob >= metrics.THRESHOLD).astype(np.uint8)
        for i in range(prob.shape[0]):
            counts = metrics.accumulate(pred[i], gt[i])
            per_image.append(counts)
            total = total + counts
            if collect_probs:
                probs.append(prob[i])
                gts.append(gt[i])
    return EvalResult(counts=total, per_image=per_image, iou=metrics.iou(total),
                      f1=metrics.f1(total), probs=probs, gts=gts)


def save_checkpoint(path, model, optimizer, cfg, epoch):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    spec = model.spec
    torch.save({
        "version": CHECKPOINT_VERSION,
        "encoder_variant": spec.variant,
        "encoder_channels": tuple(spec.channels),
        "encoder_blocks": tuple(spec.blocks),
        "config": asdict(cfg),
        "epoch": epoch,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "torch_rng_state": torch.get_rng_state(),
    }, path)
    return path


def load_checkpoint(path):
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if "version" not in blob:
        raise ValueError(f"checkpoint {path} has no version field")
    if blob["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint {path} has version {blob['version']}, "
                         f"expected {CHECKPOINT_VERSION}")
    return blob


def restore_model(blob):
    cfg = TrainConfig(**blob["config"]).validate()
    model = build_model(cfg)
    model.load_state_dict(blob["model_state"])
    return model, cfg


def fit(cfg, data_root, out_dir, train_split="train", val_split="val", resume=None):
    """Run the full optimization loop; returns history plus checkpoint path.

    Writes `metrics.csv` (epoch, lr, train_loss, val_iou, val_f1), checkpoints
    `ckpt_<epoch>.pt` and a training-curve figure under out_dir.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set = data.TileDataset(data.load_manifest(data_root, train_split))
    val_set = data.TileDataset(data.load_manifest(data_root, val_split))

    torch.manual_seed(cfg.seed)
    model = build_model(cfg)
    optimizer = build_optimizer(model, cfg)
    start_epoch = 0
    history = []
    if resume is not None:
        blob = load_checkpoint(resume)
        model.load_state_dict(blob["model_state"])
        optimizer.load_state_dict(blob["optimizer_state"])
        start_epoch = blob["epoch"] + 1
        log.info("resumed from %s at epoch %d", resume, start_epoch)

    csv_path = out_dir / "metrics.csv"
    new_log = start_epoch == 0 or not csv_path.exists()
    csv_file = open(csv_path, "w" if new_log else "a", newline="", encoding="utf-8")
    writer = csv.writer(csv_file)
    if new_log:
        writer.writerow(["epoch", "lr", "train_loss", "val_iou", "val_f1"])

    steps = 0
    ckpt_path = None
    try:
        for epoch in range(start_epoch, cfg.epochs):
            lr = lr_at(epoch, cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            losses = []
            for batch in data.iter_batches(
                    train_set, batch_size=cfg.batch_size, seed=cfg.seed, epoch=epoch,
                    shuffle=True, crop=cfg.crop, augment=cfg.augment,
                    mean=cfg.mean, std=cfg.std):
                report = train_step(model, optimizer, batch, cfg.loss_weights)
                losses.append(report.total)
                steps += 1
                if cfg.max_steps and steps >= cfg.max_steps:
                    break
            result = evaluate_tiles(model, val_set, batch_size=cfg.batch_size,
                                    mean=cfg.mean, std=cfg.std)
            stats = EpochStats(epoch=epoch, lr=lr, train_loss=float(np.mean(losses)),
                               val_iou=result.iou, val_f1=result.f1)
            history.append(stats)
            writer.writerow([stats.epoch, f"{stats.lr:.8g}", f"{stats.train_loss:.8f}",
                             f"{stats.val_iou:.8f}", f"{stats.val_f1:.8f}"])
            csv_file.flush()
            log.info("epoch %3d lr %.2e loss %.4f val_iou %.4f val_f1 %.4f",
                     stats.epoch, stats.lr, stats.train_loss, stats.val_iou, stats.val_f1)
            if cfg.save_every and (epoch + 1) % cfg.save_every == 0:
                ckpt_path = save_checkpoint(out_dir / f"ckpt_{epoch}.pt",
                                            model, optimizer, cfg, epoch)
            done = (cfg.max_steps and steps >= cfg.max_steps) or \
                (cfg.early_stop_iou and result.iou >= cfg.early_stop_iou)
            if done:
                break
        final_epoch = history[-1].epoch if history else start_epoch
        ckpt_path = save_checkpoint(out_dir / f"ckpt_{final_epoch}.pt",
                                    model, optimizer, cfg, final_epoch)
    finally:
        csv_file.close()

    try:
        from .plots import save_training_curves
        save_training_curves(history, out_dir / "training_curves.png")
    except Exception as exc:  # figures never block a finished run
        log.warning("could not render training curves: %s", exc)
    return FitResult(history=history, checkpoint=ckpt_path, steps=steps)


# Ablation rows: incremental module toggles mirroring the usual study layout.
ABLATION_ROWS = (
    {"use_acam": False, "use_gam": False, "use_ram": False},
    {"use_acam": True, "use_gam": False, "use_ram": False},
    {"use_acam": True, "use_gam": True, "use_ram": False},
    {"use_acam": True, "use_gam": False, "use_ram": True},
    {"use_acam": True, "use_gam": True, "use_ram": True},
)


def run_ablation(cfg, data_root, out_dir, train_split="train", val_split="val"):
    """Train and evaluate every toggle row; returns rows and writes a CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for index, toggles in enumerate(ABLATION_ROWS):
        row_cfg = replace(cfg, **toggles).validate()
        suffix = "".join(name.split("_")[1][0] for name, on in toggles.items() if on)
        run_dir = out_dir / f"row{index}_{suffix or 'base'}"
        result = fit(row_cfg, data_root, run_dir, train_split, val_split)
        final = result.final
        rows.append(dict(toggles, val_iou=final.val_iou, val_f1=final.val_f1,
                         epochs_run=len(result.history)))
        log.info("ablation row %d %s -> iou %.4f f1 %.4f", index, toggles,
                 final.val_iou, final.val_f1)
    csv_path = out_dir / "ablation.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["use_acam", "use_gam", "use_ram",
                                                "val_iou", "val_f1", "epochs_run"])
        writer.writeheader()
        writer.writerows(rows)
    try:
        from .plots import save_ablation_figure
        save_ablation_figure(rows, out_dir / "ablation.png")
    except Exception as exc:
        log.warning("could not render ablation figure: %s", exc)
    return rows
