"""Pixel losses and the weighted deep-supervision objective.

Per side output the loss is BCE + soft Dice on sigmoid probabilities; the
total is a weighted sum over the five side outputs (fused map first). BCE is
averaged over pixels so the magnitude is invariant to the crop size.
"""

from dataclasses import dataclass

import torch

PROB_EPS = 1e-7       # clamp for probabilities entering the logs
DICE_EPS = 1.0        # soft Dice smoothing term
DEFAULT_LOSS_WEIGHTS = (1.3, 1.0, 0.7, 0.7, 1.0)  # (d0, d1, d2, d3, d4)


def validate_weights(weights):
    weights = tuple(float(w) for w in weights)
    if len(weights) != 5:
        raise ValueError(f"need 5 side-output weights, got {len(weights)}")
    if any(w < 0 or not torch.isfinite(torch.tensor(w)) for w in weights):
        raise ValueError(f"weights must be finite and nonnegative, got {weights}")
    if all(w == 0 for w in weights):
        raise ValueError("weights must not all be zero")
    return weights


def _check_pair(probs, targets):
    if probs.shape != targets.shape:
        raise ValueError(f"prediction {tuple(probs.shape)} and target "
                         f"{tuple(targets.shape)} shapes differ")


def bce_loss(probs, targets):
    """Mean binary cross-entropy over every pixel of the batch."""
    _check_pair(probs, targets)
    p = probs.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -(targets * p.log() + (1.0 - targets) * (1.0 - p).log()).mean()


def dice_loss(probs, targets):
    """Soft Dice, computed per sample and averaged over the batch."""
    _check_pair(probs, targets)
    p = probs.reshape(probs.shape[0], -1)
    y = targets.reshape(targets.shape[0], -1)
    inter = (p * y).sum(dim=1)
    dice = (2.0 * inter + DICE_EPS) / (p.sum(dim=1) + y.sum(dim=1) + DICE_EPS)
    return (1.0 - dice).mean()


def combined_loss(probs, targets):
    return bce_loss(probs, targets) + dice_loss(probs, targets)


@dataclass
class LossReport:
    """Scalar view of one deep-supervision evaluation."""

    total: float
    weights: tuple
    bce: tuple       # per side output, fused map first
    dice: tuple
    combined: tuple

    def __str__(self):
        parts = ", ".join(f"d{i}={v:.4f}" for i, v in enumerate(self.combined))
        return f"loss={self.total:.4f} ({parts})"


def deep_supervised_loss(sides, targets, weights=DEFAULT_LOSS_WEIGHTS):
    """Weighted BCE+Dice over the five side-output logit maps.

    Returns the differentiable total plus a float report of every component.
    """
    weights = validate_weights(weights)
    sides = tuple(sides)
    if len(sides) != 5:
        raise ValueError(f"need 5 side outputs, got {len(sides)}")
    for logits in sides:
        if logits.shape != targets.shape:
            raise ValueError(f"side output {tuple(logits.shape)} does not match "
                             f"targets {tuple(targets.shape)}")
    total = None
    bces, dices, combineds = [], [], []
    for w, logits in zip(weights, sides):
        probs = torch.sigmoid(logits)
        b = bce_loss(probs, targets)
        d = dice_loss(probs, targets)
        c = b + d
        total = w * c if total is None else total + w * c
        bces.append(b.detach().item())
        dices.append(d.detach().item())
        combineds.append(c.detach().item())
    report = LossReport(total=total.detach().item(), weights=weights, bce=tuple(bces),
                        dice=tuple(dices), combined=tuple(combineds))
    return total, report
