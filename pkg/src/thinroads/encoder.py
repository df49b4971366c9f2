"""Five-level feature pyramid encoder behind a pluggable width/stride contract.

The default "tiny" variant is a small residual net for desk-scale runs; the
"resnest50-compatible" variant exposes the channel widths (64, 256, 512,
1024, 2048) so an externally trained heavyweight backbone can be dropped in
behind the same contract.
"""

from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn as nn

from .blocks import ConvBNReLU

STRIDES = (2, 4, 8, 16, 32)


class FeaturePyramid(NamedTuple):
    """Feature maps at strides 2/4/8/16/32 of the input."""

    f1: torch.Tensor
    f2: torch.Tensor
    f3: torch.Tensor
    f4: torch.Tensor
    f5: torch.Tensor


@dataclass(frozen=True)
class EncoderSpec:
    channels: tuple          # (C1..C5)
    blocks: tuple            # residual blocks per stage producing f2..f5
    variant: str

    def __post_init__(self):
        if len(self.channels) != 5 or any(c <= 0 for c in self.channels):
            raise ValueError(f"channels must be 5 positive widths, got {self.channels}")
        if len(self.blocks) != 4 or any(b <= 0 for b in self.blocks):
            raise ValueError(f"blocks must be 4 positive counts, got {self.blocks}")


TINY_SPEC = EncoderSpec(channels=(16, 32, 64, 128, 256), blocks=(1, 1, 1, 1), variant="tiny")
RESNEST50_COMPAT_SPEC = EncoderSpec(channels=(64, 256, 512, 1024, 2048),
                                    blocks=(3, 4, 6, 3), variant="resnest50-compatible")

_VARIANTS = {spec.variant: spec for spec in (TINY_SPEC, RESNEST50_COMPAT_SPEC)}


def encoder_spec(variant):
    if isinstance(variant, EncoderSpec):
        return variant
    try:
        return _VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown encoder variant {variant!r}; "
                         f"known: {sorted(_VARIANTS)}") from None


class ResidualBlock(nn.Module):
    def __init__(self, in_channels, out_channels, stride=1):
        super().__init__()
        self.body = nn.Sequential(
            ConvBNReLU(in_channels, out_channels, stride=stride),
            ConvBNReLU(out_channels, out_channels, relu=False))
        if stride != 1 or in_channels != out_channels:
            self.shortcut = ConvBNReLU(in_channels, out_channels, kernel=1,
                                       stride=stride, relu=False)
        else:
            self.shortcut = nn.Identity()
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.relu(self.body(x) + self.shortcut(x))


class ResidualEncoder(nn.Module):
    """Stem at stride 2 (f1) plus four stride-2 residual stages (f2..f5)."""

    def __init__(self, spec=TINY_SPEC):
        super().__init__()
        spec = encoder_spec(spec)
        self.spec = spec
        c = spec.channels
        self.stem = ConvBNReLU(3, c[0], stride=2)
        stages = []
        for i, count in enumerate(spec.blocks):
            blocks = [ResidualBlock(c[i], c[i + 1], stride=2)]
            blocks += [ResidualBlock(c[i + 1], c[i + 1]) for _ in range(count - 1)]
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.ModuleList(stages)

    def forward(self, images):
        h, w = images.shape[-2:]
        if h % 32 or w % 32:
            raise ValueError(f"encoder input sides must be multiples of 32, got {h}x{w}")
        f1 = self.stem(images)
        f2 = self.stages[0](f1)
        f3 = self.stages[1](f2)
        f4 = self.stages[2](f3)
        f5 = self.stages[3](f4)
        return FeaturePyramid(f1, f2, f3, f4, f5)


def validate_pyramid(pyramid, input_hw, channels):
    """Check the stride/channel contract of a pyramid against its input size."""
    h, w = input_hw
    for level, (feat, c, s) in enumerate(zip(pyramid, channels, STRIDES), start=1):
        expect = (c, h // s, w // s)
        got = tuple(feat.shape[-3:])
        if got != expect:
            raise ValueError(f"pyramid level f{level}: expected {expect}, got {got}")
