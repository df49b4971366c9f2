"""Report figures rendered to files next to the CSV outputs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_roc_figure(curve, path, title="ROC"):
    fig, ax = plt.subplots(figsize=(4.5, 4.2))
    ax.plot(curve.fpr, curve.tpr, lw=1.6, label=f"AUC = {curve.auc:.4f}")
    ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="gray", label="chance")
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_training_curves(history, path):
    epochs = [h.epoch for h in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.5, 3.4))
    ax1.plot(epochs, [h.train_loss for h in history], lw=1.4)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    ax2.plot(epochs, [h.val_iou for h in history], lw=1.4, label="val IoU")
    ax2.plot(epochs, [h.val_f1 for h in history], lw=1.4, label="val F1")
    ax2.set_xlabel("epoch")
    ax2.set_ylim(0, 1)
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_ablation_figure(rows, path):
    labels = []
    for row in rows:
        on = [name.split("_")[1] for name in ("use_acam", "use_gam", "use_ram")
              if row[name]]
        labels.append("+".join(on) if on else "baseline")
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    ax.bar(x - 0.18, [r["val_iou"] for r in rows], width=0.36, label="val IoU")
    ax.bar(x + 0.18, [r["val_f1"] for r in rows], width=0.36, label="val F1")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_prediction_panel(image, prob, mask, path, gt_mask=None):
    """Side-by-side input / probability / mask (and ground truth when given)."""
    panels = [("input", image, None), ("probability", prob, "magma"),
              ("mask", mask, "gray")]
    if gt_mask is not None:
        panels.append(("ground truth", gt_mask, "gray"))
    fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 3.4))
    for ax, (name, panel, cmap) in zip(np.atleast_1d(axes), panels):
        ax.imshow(panel, cmap=cmap, vmin=None if cmap is None else 0,
                  vmax=None if cmap is None else (1 if name == "probability" else None))
        ax.set_title(name, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
