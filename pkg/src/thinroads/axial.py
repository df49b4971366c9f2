"""Axial self-attention: non-local mixing restricted to rows and columns.

Cost is O(HW(H+W)) instead of the O((HW)^2) of dense non-local attention.
Both axes read the same input and their attended values are summed:

    out = x + gamma * (attend_cols(x) + attend_rows(x))

gamma starts at zero, so a freshly built block is the identity.
"""

import torch
import torch.nn as nn

from .blocks import init_parameters


class AxialAttention(nn.Module):
    def __init__(self, channels, qk_channels=None):
        super().__init__()
        if channels < 8:
            raise ValueError(f"axial attention needs at least 8 channels, got {channels}")
        qk = qk_channels or max(channels // 8, 8)
        self.query = nn.Conv2d(channels, qk, 1)
        self.key = nn.Conv2d(channels, qk, 1)
        self.value = nn.Conv2d(channels, channels, 1)
        init_parameters(self)
        self.gamma = nn.Parameter(torch.zeros(1))

    def forward(self, x):
        q = self.query(x)
        k = self.key(x)
        v = self.value(x)
        # attention over the H positions of each column
        energy_h = torch.einsum("bciw,bcjw->bwij", q, k)
        out_h = torch.einsum("bwij,bcjw->bciw", energy_h.softmax(dim=-1), v)
        # attention over the W positions of each row
        energy_w = torch.einsum("bchi,bchj->bhij", q, k)
        out_w = torch.einsum("bhij,bchj->bchi", energy_w.softmax(dim=-1), v)
        return x + self.gamma * (out_h + out_w)
