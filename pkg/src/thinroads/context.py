"""Axis-aware context module for the road positioning stage.

Five parallel branches see the input at growing receptive fields: branch 1
is a plain 1x1 reduction, branch k > 1 factorizes a (2k-1)x(2k-1) kernel
into (2k-1)x1 and 1x(2k-1) convolutions and follows with a 3x3 dilated
convolution. Every branch ends in an axial attention block. Branches are
concatenated, reduced back to the working width and residual-connected to
a projected shortcut of the input.
"""

import torch
import torch.nn as nn

from .axial import AxialAttention
from .blocks import ConvBNReLU

BRANCH_COUNT = 5
INNER_CHANNELS = 64
DILATIONS = (1, 3, 5, 7, 9)


class ContextBranch(nn.Module):
    """One branch: 1x1 reduce [-> asym pair -> dilated 3x3] -> axial attention."""

    def __init__(self, in_channels, k, channels=INNER_CHANNELS, dilation=None, qk_channels=None):
        super().__init__()
        if not 1 <= k <= BRANCH_COUNT:
            raise ValueError(f"branch index must be in 1..{BRANCH_COUNT}, got {k}")
        dilation = (2 * k - 1) if dilation is None else dilation
        layers = [ConvBNReLU(in_channels, channels, kernel=1)]
        if k > 1:
            extent = 2 * k - 1
            layers += [
                ConvBNReLU(channels, channels, kernel=(extent, 1)),
                ConvBNReLU(channels, channels, kernel=(1, extent)),
                ConvBNReLU(channels, channels, kernel=3, dilation=dilation),
            ]
        self.convs = nn.Sequential(*layers)
        self.attend = AxialAttention(channels, qk_channels)

    def forward(self, x):
        return self.attend(self.convs(x))


class AxisContextModule(nn.Module):
    """Five-branch context extractor applied to the high pyramid levels."""

    def __init__(self, in_channels, channels=INNER_CHANNELS, dilations=DILATIONS,
                 qk_channels=None):
        super().__init__()
        if len(dilations) != BRANCH_COUNT:
            raise ValueError(f"need {BRANCH_COUNT} dilation rates, got {len(dilations)}")
        if dilations[0] != 1:
            raise ValueError("the first branch must use dilation 1")
        self.branches = nn.ModuleList(
            ContextBranch(in_channels, k, channels, dilation=d, qk_channels=qk_channels)
            for k, d in enumerate(dilations, start=1))
        self.fuse = ConvBNReLU(BRANCH_COUNT * channels, channels, kernel=1, relu=False)
        self.shortcut = ConvBNReLU(in_channels, channels, kernel=1, relu=False)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        merged = torch.cat([branch(x) for branch in self.branches], dim=1)
        return self.relu(self.fuse(merged) + self.shortcut(x))
