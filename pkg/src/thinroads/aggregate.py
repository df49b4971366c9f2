"""Global aggregation of the three positioned pyramid levels.

Two dense multiplicative connections tie the levels together before an
upsample-concatenate fusion produces a single-channel road logit map at the
resolution of the finest input level:

    d4 = stack(p4 * up2(p5))
    d3 = stack(p3 * up4(p5)) * up2(p4)
    global = head(stack(cat(d3, up2(cat(d4, up2(p5))))))

where * is element-wise multiplication and stack is a pair of 3x3
Conv-BN-ReLU layers.
"""

from typing import NamedTuple

import torch
import torch.nn as nn

from .blocks import ConvBNReLU, bconv_stack, init_parameters, resize_to


class AggregationIntermediates(NamedTuple):
    d4: torch.Tensor  # first dense connection, level-4 resolution
    d3: torch.Tensor  # second dense connection, level-3 resolution


def check_pyramid_levels(p3, p4, p5):
    h3, w3 = p3.shape[-2:]
    h4, w4 = p4.shape[-2:]
    h5, w5 = p5.shape[-2:]
    if (h3, w3) != (2 * h4, 2 * w4) or (h4, w4) != (2 * h5, 2 * w5):
        raise ValueError(
            f"levels must halve in size: got {h3}x{w3}, {h4}x{w4}, {h5}x{w5}")


class GlobalAggregation(nn.Module):
    def __init__(self, channels=64):
        super().__init__()
        self.dense4 = bconv_stack(channels, channels)
        self.dense3 = bconv_stack(channels, channels)
        self.fuse = bconv_stack(3 * channels, channels)
        self.head = nn.Conv2d(channels, 1, 3, padding=1)
        init_parameters(self.head)

    def forward(self, p3, p4, p5):
        check_pyramid_levels(p3, p4, p5)
        up2_p5 = resize_to(p5, p4.shape[-2:])
        up4_p5 = resize_to(p5, p3.shape[-2:])
        d4 = self.dense4(p4 * up2_p5)
        d3 = self.dense3(p3 * up4_p5) * resize_to(p4, p3.shape[-2:])
        inner = torch.cat([d4, up2_p5], dim=1)
        outer = torch.cat([d3, resize_to(inner, p3.shape[-2:])], dim=1)
        global_map = self.head(self.fuse(outer))
        return global_map, AggregationIntermediates(d4=d4, d3=d3)


class SimpleAggregation(nn.Module):
    """Upsample-concat-conv fusion; the minimal ablation stand-in."""

    def __init__(self, channels=64):
        super().__init__()
        self.fuse = ConvBNReLU(3 * channels, channels)
        self.head = nn.Conv2d(channels, 1, 3, padding=1)
        init_parameters(self.head)

    def forward(self, p3, p4, p5):
        check_pyramid_levels(p3, p4, p5)
        size = p3.shape[-2:]
        merged = torch.cat([p3, resize_to(p4, size), resize_to(p5, size)], dim=1)
        return self.head(self.fuse(merged))
