"""Full three-stage network: extract, position, refine.

Module toggles swap each stage for a minimal stand-in so ablation rows train
through identical plumbing:

    use_acam: axis-context positioning blocks (off -> plain 1x1 projections)
    use_gam:  dense multiplicative aggregation (off -> upsample-concat-conv)
    use_ram:  reverse-aware dual-path stages   (off -> plain fusion stages)
"""

import torch.nn as nn

from .aggregate import GlobalAggregation, SimpleAggregation
from .blocks import init_parameters
from .context import AxisContextModule
from .encoder import ResidualEncoder, encoder_spec
from .refine import RefinementDecoder


class NarrowRoadNet(nn.Module):
    def __init__(self, encoder="tiny", use_acam=True, use_gam=True, use_ram=True,
                 channels=64):
        super().__init__()
        spec = encoder_spec(encoder)
        self.encoder = ResidualEncoder(spec)
        self.use_acam = use_acam
        self.use_gam = use_gam
        self.use_ram = use_ram
        c = spec.channels
        if use_acam:
            self.position3 = AxisContextModule(c[2], channels)
            self.position4 = AxisContextModule(c[3], channels)
            self.position5 = AxisContextModule(c[4], channels)
        else:
            self.position3 = nn.Conv2d(c[2], channels, 1)
            self.position4 = nn.Conv2d(c[3], channels, 1)
            self.position5 = nn.Conv2d(c[4], channels, 1)
            init_parameters(self.position3)
            init_parameters(self.position4)
            init_parameters(self.position5)
        self.aggregate = (GlobalAggregation if use_gam else SimpleAggregation)(channels)
        self.decoder = RefinementDecoder(c[1], channels, use_ram=use_ram)

    @property
    def spec(self):
        return self.encoder.spec

    def forward(self, images):
        pyramid = self.encoder(images)
        p3 = self.position3(pyramid.f3)
        p4 = self.position4(pyramid.f4)
        p5 = self.position5(pyramid.f5)
        aggregated = self.aggregate(p3, p4, p5)
        global_map = aggregated[0] if self.use_gam else aggregated
        return self.decoder(pyramid.f2, p3, p4, global_map,
                            out_hw=images.shape[-2:])


def build_model(encoder="tiny", use_acam=True, use_gam=True, use_ram=True):
    return NarrowRoadNet(encoder=encoder, use_acam=use_acam, use_gam=use_gam,
                         use_ram=use_ram)
