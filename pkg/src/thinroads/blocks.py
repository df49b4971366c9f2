"""Shared convolution blocks and small tensor helpers."""

import torch.nn as nn
import torch.nn.functional as F


class ConvBNReLU(nn.Sequential):
    """Conv2d + BatchNorm (+ ReLU), padded so the spatial size is preserved."""

    def __init__(self, in_channels, out_channels, kernel=3, stride=1, dilation=1, relu=True):
        kh, kw = kernel if isinstance(kernel, tuple) else (kernel, kernel)
        padding = (dilation * (kh - 1) // 2, dilation * (kw - 1) // 2)
        layers = [
            nn.Conv2d(in_channels, out_channels, (kh, kw), stride=stride,
                      padding=padding, dilation=dilation, bias=False),
            nn.BatchNorm2d(out_channels),
        ]
        if relu:
            layers.append(nn.ReLU(inplace=True))
        super().__init__(*layers)
        init_parameters(self)


def bconv_stack(in_channels, out_channels, depth=2):
    """Stack of `depth` 3x3 Conv-BN-ReLU layers (first one changes the width)."""
    layers = [ConvBNReLU(in_channels, out_channels)]
    for _ in range(depth - 1):
        layers.append(ConvBNReLU(out_channels, out_channels))
    return nn.Sequential(*layers)


def resize_to(x, size):
    """Bilinear resize (up or down) to an explicit (h, w)."""
    size = tuple(int(s) for s in size)
    if x.shape[-2:] == size:
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def init_parameters(module):
    """Fan-in scaled normal init for convolutions, unit scale / zero shift for norms."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
