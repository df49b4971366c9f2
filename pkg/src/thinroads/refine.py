"""Reverse-aware refinement stages and the side-output decoder.

Each stage receives a 64-channel feature map and a single-channel guidance
logit map at the same resolution. A foreground path fuses the two directly;
a background path first erases the currently predicted roads by weighting
the features with (1 - sigmoid(guidance)), forcing the stage to mine what
the running estimate missed:

    fg  = conv(stack(cat(feature, guidance)))
    bg  = conv(stack((1 - sigmoid(guidance)) * feature))
    out = fg + bg

The stage's side logits refine the guidance residually, so a freshly built
stage (zero side head) passes the guidance through unchanged and the cascade
degrades gracefully to the global map.
"""

from typing import NamedTuple

import torch
import torch.nn as nn

from .blocks import ConvBNReLU, bconv_stack, init_parameters, resize_to


class SideOutputs(NamedTuple):
    """Full-resolution logit maps under deep supervision; d0 fuses d1..d4."""

    d0: torch.Tensor
    d1: torch.Tensor
    d2: torch.Tensor
    d3: torch.Tensor
    d4: torch.Tensor


def _check_stage_inputs(feature, guidance):
    if guidance.shape[1] != 1:
        raise ValueError(f"guidance must be single-channel, got {guidance.shape[1]}")
    if guidance.shape[-2:] != feature.shape[-2:] or guidance.shape[0] != feature.shape[0]:
        raise ValueError(f"guidance {tuple(guidance.shape)} is not aligned with "
                         f"feature {tuple(feature.shape)}")


class ReverseAwareStage(nn.Module):
    def __init__(self, channels=64):
        super().__init__()
        self.fg = nn.Sequential(bconv_stack(channels + 1, channels),
                                nn.Conv2d(channels, channels, 3, padding=1))
        self.bg = nn.Sequential(bconv_stack(channels, channels),
                                nn.Conv2d(channels, channels, 3, padding=1))
        self.side = nn.Conv2d(channels, 1, 1)
        init_parameters(self)
        nn.init.zeros_(self.side.weight)
        nn.init.zeros_(self.side.bias)

    def forward(self, feature, guidance):
        _check_stage_inputs(feature, guidance)
        fg = self.fg(torch.cat([feature, guidance], dim=1))
        bg = self.bg((1.0 - torch.sigmoid(guidance)) * feature)
        refined = fg + bg
        side = self.side(refined) + guidance
        return refined, side


class PlainFusionStage(nn.Module):
    """Plain Conv-BN-ReLU fusion of (feature, guidance); the ablation stand-in."""

    def __init__(self, channels=64):
        super().__init__()
        self.fuse = ConvBNReLU(channels + 1, channels)
        self.side = nn.Conv2d(channels, 1, 1)
        init_parameters(self)
        nn.init.zeros_(self.side.weight)
        nn.init.zeros_(self.side.bias)

    def forward(self, feature, guidance):
        _check_stage_inputs(feature, guidance)
        refined = self.fuse(torch.cat([feature, guidance], dim=1))
        side = self.side(refined) + guidance
        return refined, side


class RefinementDecoder(nn.Module):
    """Cascade over levels 4, 3, 2 emitting side outputs d0..d4.

    Level 2 enters through a 1x1 projection of the raw encoder feature; the
    guidance map chains downward: the global map steers level 4, each stage's
    side logits steer the next finer stage.
    """

    def __init__(self, f2_channels, channels=64, use_ram=True):
        super().__init__()
        stage = ReverseAwareStage if use_ram else PlainFusionStage
        self.project2 = nn.Conv2d(f2_channels, channels, 1)
        self.stage4 = stage(channels)
        self.stage3 = stage(channels)
        self.stage2 = stage(channels)
        self.fuse_sides = nn.Conv2d(4, 1, 1)
        init_parameters(self.project2)
        init_parameters(self.fuse_sides)

    def forward(self, f2, p3, p4, global_map, out_hw):
        out_hw = tuple(int(v) for v in out_hw)
        h2, w2 = f2.shape[-2:]
        if out_hw != (4 * h2, 4 * w2):
            raise ValueError(f"output size {out_hw} inconsistent with the pyramid "
                             f"(level 2 is {h2}x{w2})")
        if out_hw[0] % 32 or out_hw[1] % 32:
            raise ValueError(f"output sides must be multiples of 32, got {out_hw}")

        r4 = resize_to(global_map, p4.shape[-2:])
        _, s4 = self.stage4(p4, r4)
        r3 = resize_to(s4, p3.shape[-2:])
        _, s3 = self.stage3(p3, r3)
        p2 = self.project2(f2)
        r2 = resize_to(s3, p2.shape[-2:])
        _, s2 = self.stage2(p2, r2)

        d4 = resize_to(global_map, out_hw)
        d3 = resize_to(s4, out_hw)
        d2 = resize_to(s3, out_hw)
        d1 = resize_to(s2, out_hw)
        d0 = self.fuse_sides(torch.cat([d1, d2, d3, d4], dim=1))
        return SideOutputs(d0=d0, d1=d1, d2=d2, d3=d3, d4=d4)
