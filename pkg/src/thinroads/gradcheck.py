"""Central finite-difference verification of analytic gradients.

Every differentiable building block is reduced to a scalar through a fixed
random weighting, autograd gradients are compared entry-by-entry against
central differences in 64-bit precision, and the maximum relative error is
reported. Large tensors are subsampled (deterministically) to keep the whole
suite fast on a CPU.
"""

import numpy as np
import torch

from .aggregate import GlobalAggregation
from .axial import AxialAttention
from .context import AxisContextModule
from .encoder import ResidualEncoder, TINY_SPEC
from .losses import bce_loss, combined_loss, deep_supervised_loss, dice_loss
from .refine import RefinementDecoder, ReverseAwareStage

TOLERANCE = 1e-4
STEP = 1e-5
ERROR_FLOOR = 1e-6  # scale below which absolute agreement counts as exact


def relative_gradient_error(fn, tensors, max_entries=256, step=STEP, seed=0):
    """Max relative error between autograd and central differences.

    fn() must return a scalar recomputed from the current tensor values.
    Up to max_entries entries per tensor are probed (all when small).
    """
    for t in tensors:
        t.requires_grad_(True)
    out = fn()
    grads = torch.autograd.grad(out, tensors, allow_unused=True)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for tensor, grad in zip(tensors, grads):
        flat = tensor.detach().view(-1)  # shares storage; perturbations hit fn()
        n = flat.numel()
        if n <= max_entries:
            entries = np.arange(n)
        else:
            entries = rng.choice(n, size=max_entries, replace=False)
        gflat = torch.zeros_like(flat) if grad is None else grad.reshape(-1)
        for i in entries:
            original = flat[i].item()
            with torch.no_grad():
                flat[i] = original + step
                plus = float(fn())
                flat[i] = original - step
                minus = float(fn())
                flat[i] = original
            numeric = (plus - minus) / (2.0 * step)
            analytic = float(gflat[i])
            scale = max(abs(numeric), abs(analytic), ERROR_FLOOR)
            worst = max(worst, abs(numeric - analytic) / scale)
    return worst


def _scalarize(output, seed=0):
    """Deterministic random-weighted mean; O(1) scale keeps FD noise small."""
    gen = torch.Generator().manual_seed(seed)
    weights = torch.randn(output.shape, generator=gen, dtype=output.dtype)
    return (output * weights).sum() / output.numel()


def _module_error(module, inputs, seed=0, max_entries=96, output_pick=None):
    module = module.double().train()
    inputs = [t.double() for t in inputs]
    params = [p for p in module.parameters() if p.requires_grad]

    def fn():
        out = module(*inputs)
        if output_pick is not None:
            out = output_pick(out)
        return _scalarize(out, seed=seed)

    return relative_gradient_error(fn, inputs + params, max_entries=max_entries,
                                   seed=seed)


def _randn(*shape, seed=0):
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=gen, dtype=torch.float64)


def check_encoder(size=64, seed=0):
    # 64x64 keeps the top level at 2x2: batch statistics over a single 1x1
    # cell degenerate to exactly +/-1 and park the residual sums on the
    # ReLU kink, where finite differences are undefined
    torch.manual_seed(seed)
    module = ResidualEncoder(TINY_SPEC)
    x = _randn(1, 3, max(size, 64), max(size, 64), seed=seed + 1)
    return _module_error(module, [x], seed=seed, max_entries=12,
                         output_pick=lambda pyr: pyr.f5)


def check_axial(size=8, channels=16, seed=0):
    torch.manual_seed(seed)
    module = AxialAttention(channels)
    with torch.no_grad():
        module.gamma.fill_(0.7)  # move off the identity point
    x = _randn(1, channels, size, size, seed=seed + 1)
    return _module_error(module, [x], seed=seed)


def check_acam(size=8, channels=16, seed=0):
    torch.manual_seed(seed)
    module = AxisContextModule(channels)
    for branch in module.branches:
        with torch.no_grad():
            branch.attend.gamma.fill_(0.5)
    x = _randn(1, channels, size, size, seed=seed + 1)
    return _module_error(module, [x], seed=seed, max_entries=24)


def check_gam(size=8, seed=0):
    torch.manual_seed(seed)
    module = GlobalAggregation()
    p3 = _randn(1, 64, size, size, seed=seed + 1)
    p4 = _randn(1, 64, size // 2, size // 2, seed=seed + 2)
    p5 = _randn(1, 64, size // 4, size // 4, seed=seed + 3)
    return _module_error(module, [p3, p4, p5], seed=seed, max_entries=24,
                         output_pick=lambda out: out[0])


def check_ram(size=8, seed=0):
    torch.manual_seed(seed)
    module = ReverseAwareStage()
    with torch.no_grad():
        torch.nn.init.normal_(module.side.weight, std=0.1)
    feature = _randn(1, 64, size, size, seed=seed + 1)
    guidance = _randn(1, 1, size, size, seed=seed + 2)
    return _module_error(
        module, [feature, guidance], seed=seed, max_entries=24,
        output_pick=lambda out: torch.cat([out[0].reshape(-1), out[1].reshape(-1)]))


def check_decode(size=32, seed=0):
    torch.manual_seed(seed)
    module = RefinementDecoder(f2_channels=8)
    for stage in (module.stage4, module.stage3, module.stage2):
        with torch.no_grad():
            torch.nn.init.normal_(stage.side.weight, std=0.1)
    f2 = _randn(1, 8, size // 4, size // 4, seed=seed + 1)
    p3 = _randn(1, 64, size // 8, size // 8, seed=seed + 2)
    p4 = _randn(1, 64, size // 16, size // 16, seed=seed + 3)
    fg = _randn(1, 1, size // 8, size // 8, seed=seed + 4)
    module = module.double().train()
    inputs = [t.double() for t in (f2, p3, p4, fg)]
    params = [p for p in module.parameters() if p.requires_grad]

    def fn():
        sides = module(*inputs, out_hw=(size, size))
        return sum(_scalarize(s, seed=seed + i) for i, s in enumerate(sides))

    return relative_gradient_error(fn, inputs + params, max_entries=12, seed=seed)


def _loss_error(kind, seed=0):
    logits = _randn(2, 1, 4, 4, seed=seed + 1) * 1.5
    gen = torch.Generator().manual_seed(seed + 2)
    targets = (torch.rand(2, 1, 4, 4, generator=gen) > 0.5).double()

    if kind == "deep":
        sides = [_randn(2, 1, 4, 4, seed=seed + 3 + i) * 1.5 for i in range(5)]

        def fn():
            total, _ = deep_supervised_loss(sides, targets)
            return total
        return relative_gradient_error(fn, sides, seed=seed)

    loss = {"bce": bce_loss, "dice": dice_loss, "combined": combined_loss}[kind]

    def fn():
        return loss(torch.sigmoid(logits), targets)

    return relative_gradient_error(fn, [logits], seed=seed)


CHECKS = {
    "encoder": lambda size, seed: check_encoder(max(size, 64), seed),
    "axial": lambda size, seed: check_axial(size, seed=seed),
    "acam": lambda size, seed: check_acam(size, seed=seed),
    "gam": lambda size, seed: check_gam(size, seed=seed),
    "ram": lambda size, seed: check_ram(size, seed=seed),
    "decode": lambda size, seed: check_decode(max(4 * size, 32), seed),
    "loss_bce": lambda size, seed: _loss_error("bce", seed),
    "loss_dice": lambda size, seed: _loss_error("dice", seed),
    "loss_combined": lambda size, seed: _loss_error("combined", seed),
    "loss_deep": lambda size, seed: _loss_error("deep", seed),
}


def run_gradcheck(module="all", size=8, seed=0):
    """Return {check name: max relative error} for one module or all of them."""
    if module == "all":
        names = list(CHECKS)
    elif module == "loss":
        names = [n for n in CHECKS if n.startswith("loss")]
    elif module in CHECKS:
        names = [module]
    else:
        raise ValueError(f"unknown gradcheck module {module!r}; "
                         f"known: all, loss, {', '.join(CHECKS)}")
    size = int(size)
    if size < 4 or size % 4:
        raise ValueError(f"size must be a multiple of 4 and >= 4, got {size}")
    return {name: CHECKS[name](size, seed) for name in names}
