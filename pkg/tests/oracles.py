"""Independent numpy re-implementations used as test oracles.

Everything here is written the slow, obvious way (explicit index arithmetic,
per-pixel loops where feasible) and never calls back into the package's
forward paths.
"""

import numpy as np


def np_conv2d(x, weight, bias=None, dilation=1):
    """'Same'-padded convolution; x is (C_in, H, W), weight (C_out, C_in, kh, kw)."""
    c_out, c_in, kh, kw = weight.shape
    ph, pw = dilation * (kh - 1) // 2, dilation * (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    _, h, w = x.shape
    out = np.zeros((c_out, h, w), dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            patch = xp[:, u * dilation:u * dilation + h, v * dilation:v * dilation + w]
            out += np.einsum("oc,chw->ohw", weight[:, :, u, v], patch)
    if bias is not None:
        out += bias[:, None, None]
    return out


def np_batchnorm_train(x, gamma, beta, eps=1e-5):
    """Batch-statistics normalization of a single (C, H, W) map."""
    mean = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)  # biased, as used for normalization
    xn = (x - mean) / np.sqrt(var + eps)
    return gamma[:, None, None] * xn + beta[:, None, None]


def np_relu(x):
    return np.maximum(x, 0.0)


def np_sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def np_bilinear(x, size):
    """Bilinear resize of (C, H, W) matching align_corners=False semantics."""
    c, h, w = x.shape
    oh, ow = size

    def axis_coords(n_in, n_out):
        scale = n_in / n_out
        src = (np.arange(n_out) + 0.5) * scale - 0.5
        src = np.clip(src, 0.0, None)
        i0 = np.minimum(src.astype(np.int64), n_in - 1)
        i1 = np.minimum(i0 + 1, n_in - 1)
        frac = src - i0
        return i0, i1, frac

    y0, y1, fy = axis_coords(h, oh)
    x0, x1, fx = axis_coords(w, ow)
    out = np.zeros((c, oh, ow), dtype=np.float64)
    for i in range(oh):
        row0 = x[:, y0[i], :]
        row1 = x[:, y1[i], :]
        for j in range(ow):
            top = row0[:, x0[j]] * (1 - fx[j]) + row0[:, x1[j]] * fx[j]
            bot = row1[:, x0[j]] * (1 - fx[j]) + row1[:, x1[j]] * fx[j]
            out[:, i, j] = top * (1 - fy[i]) + bot * fy[i]
    return out


def conv_params(conv):
    weight = conv.weight.detach().double().numpy()
    bias = None if conv.bias is None else conv.bias.detach().double().numpy()
    return weight, bias


def run_conv_bn_relu(block, x):
    """Oracle for one ConvBNReLU applied to a (C, H, W) array in train mode."""
    layers = list(block)
    conv = layers[0]
    bn = layers[1]
    weight, bias = conv_params(conv)
    dilation = conv.dilation[0]
    out = np_conv2d(x, weight, bias, dilation=dilation)
    out = np_batchnorm_train(out, bn.weight.detach().double().numpy(),
                             bn.bias.detach().double().numpy(), eps=bn.eps)
    if len(layers) > 2:
        out = np_relu(out)
    return out


def run_bconv_stack(stack, x):
    out = x
    for block in stack:
        out = run_conv_bn_relu(block, out)
    return out


def naive_axial_attention(module, x):
    """O(HW(H+W)) loop computation of the axial attention block.

    x is (C, H, W); returns the block output including the residual and gamma.
    """
    wq, bq = conv_params(module.query)
    wk, bk = conv_params(module.key)
    wv, bv = conv_params(module.value)
    q = np.einsum("oc,chw->ohw", wq[:, :, 0, 0], x) + bq[:, None, None]
    k = np.einsum("oc,chw->ohw", wk[:, :, 0, 0], x) + bk[:, None, None]
    v = np.einsum("oc,chw->ohw", wv[:, :, 0, 0], x) + bv[:, None, None]
    _, h, w = x.shape
    out_h = np.zeros_like(v)
    for col in range(w):
        for i in range(h):
            scores = np.array([np.dot(q[:, i, col], k[:, j, col]) for j in range(h)])
            scores = np.exp(scores - scores.max())
            attn = scores / scores.sum()
            out_h[:, i, col] = sum(attn[j] * v[:, j, col] for j in range(h))
    out_w = np.zeros_like(v)
    for row in range(h):
        for i in range(w):
            scores = np.array([np.dot(q[:, row, i], k[:, row, j]) for j in range(w)])
            scores = np.exp(scores - scores.max())
            attn = scores / scores.sum()
            out_w[:, row, i] = sum(attn[j] * v[:, row, j] for j in range(w))
    gamma = float(module.gamma.detach())
    return x + gamma * (out_h + out_w)


def aggregation_oracle(module, p3, p4, p5):
    """Step-by-step composition of the dense-connection aggregation equations."""
    up2_p5 = np_bilinear(p5, p4.shape[1:])
    up4_p5 = np_bilinear(p5, p3.shape[1:])
    d4 = run_bconv_stack(module.dense4, p4 * up2_p5)
    d3 = run_bconv_stack(module.dense3, p3 * up4_p5) * np_bilinear(p4, p3.shape[1:])
    inner = np.concatenate([d4, up2_p5], axis=0)
    outer = np.concatenate([d3, np_bilinear(inner, p3.shape[1:])], axis=0)
    fused = run_bconv_stack(module.fuse, outer)
    weight, bias = conv_params(module.head)
    return np_conv2d(fused, weight, bias), (d4, d3)


def reverse_stage_oracle(module, feature, guidance):
    """Step-by-step composition of the dual-path refinement equations."""
    fg_in = np.concatenate([feature, guidance], axis=0)
    fg = run_bconv_stack(module.fg[0], fg_in)
    w, b = conv_params(module.fg[1])
    fg = np_conv2d(fg, w, b)
    bg_in = (1.0 - np_sigmoid(guidance)) * feature
    bg = run_bconv_stack(module.bg[0], bg_in)
    w, b = conv_params(module.bg[1])
    bg = np_conv2d(bg, w, b)
    refined = fg + bg
    w, b = conv_params(module.side)
    side = np_conv2d(refined, w, b) + guidance
    return refined, side


def brute_force_counts(pred, gt):
    """Per-pixel loop counting of TP/FP/FN/TN."""
    tp = fp = fn = tn = 0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            p, g = int(pred[i, j]), int(gt[i, j])
            if p == 1 and g == 1:
                tp += 1
            elif p == 1 and g == 0:
                fp += 1
            elif p == 0 and g == 1:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def mann_whitney_auc(prob, gt):
    """Rank-statistic AUC: P(pos > neg) + 0.5 P(pos == neg)."""
    prob = np.asarray(prob, dtype=np.float64).ravel()
    gt = np.asarray(gt).ravel().astype(bool)
    pos = prob[gt]
    neg = prob[~gt]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (len(pos) * len(neg))
