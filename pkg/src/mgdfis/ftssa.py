"""Attention stage: DyT transform, token-statistics self-attention, Mona
bottleneck adapters, spectral feed-forward, composed as two serial stages.

Each op exposes a forward function and a `*_vjp` returning (input gradient,
parameter gradients) for a scalar loss, with parameter gradients packed into
the same record type as the parameters.  `_*_parts` helpers compute the
forward intermediates once so the VJPs do not drift from the forwards.
"""

import math

import dataclasses
import numpy as np

from . import ops
from .errors import ShapeError
from .ops import conv2d, conv2d_vjp, same_spec
from .params import (DyTParams, FtssaParams, MonaParams, SeffParams,
                     TssaParams, zeros_like_params)
from .tensor import as_feature_map, from_tokens, require_channels, to_tokens


# ---------------------------------------------------------------------------
# DyT
# ---------------------------------------------------------------------------

def dyt(x, p: DyTParams):
    """Per-channel gamma * tanh(alpha * x) + beta."""
    x = as_feature_map(x, "dyt")
    require_channels(x, p.gamma.shape[0], "dyt")
    t = np.tanh(p.alpha * x)
    return p.gamma[None, :, None, None] * t + p.beta[None, :, None, None]


def dyt_vjp(x, p: DyTParams, gy):
    t = np.tanh(p.alpha * x)
    sech2 = 1.0 - t * t
    gx = gy * p.gamma[None, :, None, None] * p.alpha * sech2
    g_alpha = float(np.sum(gy * p.gamma[None, :, None, None] * x * sech2))
    g_gamma = np.sum(gy * t, axis=(0, 2, 3))
    g_beta = np.sum(gy, axis=(0, 2, 3))
    return gx, DyTParams(alpha=g_alpha, gamma=g_gamma, beta=g_beta)


# ---------------------------------------------------------------------------
# token-statistics attention
# ---------------------------------------------------------------------------

def _tssa_parts(t, p: TssaParams):
    b, n, c = t.shape
    h, d = p.heads, p.head_dim
    proj = t.reshape(b * n, c) @ p.qkv_weight          # (b*n, h*d)
    f = proj.reshape(b, n, h, d).transpose(0, 2, 1, 3)  # stats (b, h, n, d)
    r = np.sqrt(np.sum(f * f, axis=3, keepdims=True))
    v = f / (r + p.eps)
    soms = v * v
    s = soms.sum(axis=3)                               # (b, h, n)
    pi = ops.softmax(s, axis=1)                        # distribution over heads
    denom = d * pi + p.eps
    ratio = pi / denom
    dots = ratio[..., None] * f * f
    attn = 1.0 / (1.0 + dots)
    if p.pi_mode == "constant":
        pre = -f * math.pi * attn
    else:
        pre = -f * pi[..., None] * attn
    pre2 = pre.transpose(0, 2, 1, 3).reshape(b * n, h * d)
    out = (pre2 @ p.out_weight + p.out_bias).reshape(b, n, c)
    return {"t": t, "f": f, "r": r, "v": v, "s": s, "pi": pi, "denom": denom,
            "ratio": ratio, "attn": attn, "pre2": pre2, "out": out}


def tssa_tokens(t, p: TssaParams):
    """Attention over a token sequence (batch, tokens, channels)."""
    if t.ndim != 3:
        raise ShapeError("tssa", "rank", 3, t.ndim)
    if t.shape[2] != p.qkv_weight.shape[0]:
        raise ShapeError("tssa", "channel", p.qkv_weight.shape[0], t.shape[2])
    return _tssa_parts(np.ascontiguousarray(t, dtype=np.float64), p)["out"]


def tssa_tokens_vjp(t, p: TssaParams, gy):
    parts = _tssa_parts(t, p)
    b, n, c = t.shape
    h, d = p.heads, p.head_dim
    f, r, v = parts["f"], parts["r"], parts["v"]
    pi, denom, ratio, attn = parts["pi"], parts["denom"], parts["ratio"], parts["attn"]

    gy2 = gy.reshape(b * n, c)
    g_out_w = parts["pre2"].T @ gy2
    g_out_b = gy2.sum(axis=0)
    g_pre = (gy2 @ p.out_weight.T).reshape(b, n, h, d).transpose(0, 2, 1, 3)

    if p.pi_mode == "constant":
        gf = -math.pi * attn * g_pre
        g_attn = -math.pi * f * g_pre
        g_pi_direct = 0.0
    else:
        gf = -pi[..., None] * attn * g_pre
        g_attn = -pi[..., None] * f * g_pre
        g_pi_direct = np.sum(-f * attn * g_pre, axis=3)

    g_dots = -g_attn * attn * attn
    g_ratio = np.sum(g_dots * f * f, axis=3)
    gf += g_dots * ratio[..., None] * 2.0 * f

    # d(ratio)/d(pi) collapses to eps / denom^2
    g_pi = g_ratio * p.eps / (denom * denom) + g_pi_direct
    g_s = ops.softmax_vjp(parts["s"], 1, g_pi)

    g_soms = g_s[..., None]
    g_v = 2.0 * v * g_soms
    # L2-normalize backward; guard the radius for exactly-zero token rows
    rr = np.where(r > 0, r, 1.0)
    proj = np.sum(g_v * f, axis=3, keepdims=True)
    gf += g_v / (r + p.eps) - f * proj / (rr * (r + p.eps) ** 2)

    g_proj = gf.transpose(0, 2, 1, 3).reshape(b * n, h * d)
    g_qkv_w = t.reshape(b * n, c).T @ g_proj
    gt = (g_proj @ p.qkv_weight.T).reshape(b, n, c)
    gp = dataclasses.replace(p, qkv_weight=g_qkv_w, out_weight=g_out_w,
                             out_bias=g_out_b)
    return gt, gp


def tssa(x, p: TssaParams):
    """Feature-map wrapper: flatten to tokens, attend, restore the layout."""
    x = as_feature_map(x, "tssa")
    require_channels(x, p.qkv_weight.shape[0], "tssa")
    _, _, h, w = x.shape
    return from_tokens(tssa_tokens(to_tokens(x), p), h, w)


def tssa_vjp(x, p: TssaParams, gy):
    _, _, h, w = x.shape
    gt, gp = tssa_tokens_vjp(to_tokens(x), p, to_tokens(gy))
    return from_tokens(gt, h, w), gp


# ---------------------------------------------------------------------------
# Mona adapter
# ---------------------------------------------------------------------------

def _mona_specs(p: MonaParams):
    c = p.down_weight.shape[1]
    cr = p.down_weight.shape[0]
    return {
        "down": same_spec(c, 1, 1, out_channels=cr),
        "dw3": same_spec(cr, 3, 3, groups=cr),
        "dw5": same_spec(cr, 5, 5, groups=cr),
        "dw7": same_spec(cr, 7, 7, groups=cr),
        "mix": same_spec(cr, 1, 1),
        "up": same_spec(cr, 1, 1, out_channels=c),
    }


def mona_op(z, p: MonaParams):
    """Residual multi-scale mix on the reduced channel count."""
    z = as_feature_map(z, "mona_op")
    cr = p.down_weight.shape[0]
    require_channels(z, cr, "mona_op")
    sp = _mona_specs(p)
    avg = (conv2d(z, p.dw3_weight, p.dw3_bias, sp["dw3"])
           + conv2d(z, p.dw5_weight, p.dw5_bias, sp["dw5"])
           + conv2d(z, p.dw7_weight, p.dw7_bias, sp["dw7"])) / 3.0
    return z + conv2d(avg + z, p.mix_weight, p.mix_bias, sp["mix"])


def xmona(x, p: MonaParams):
    """Tiny-scaled per-pixel linear skip across the full channel count."""
    x = as_feature_map(x, "xmona")
    require_channels(x, p.skip_weight.shape[1], "xmona")
    return p.skip_scale * np.einsum("ce,nehw->nchw", p.skip_weight, x)


def xmona_vjp(x, p: MonaParams, gy):
    skip_lin = np.einsum("ce,nehw->nchw", p.skip_weight, x)
    gx = p.skip_scale * np.einsum("ce,nchw->nehw", p.skip_weight, gy)
    gp = dataclasses.replace(
        zeros_like_params(p),
        skip_weight=p.skip_scale * np.einsum("nchw,nehw->ce", gy, x),
        skip_scale=float(np.sum(gy * skip_lin)))
    return gx, gp


def mona_op_vjp(z, p: MonaParams, gy):
    sp = _mona_specs(p)
    d3 = conv2d(z, p.dw3_weight, p.dw3_bias, sp["dw3"])
    d5 = conv2d(z, p.dw5_weight, p.dw5_bias, sp["dw5"])
    d7 = conv2d(z, p.dw7_weight, p.dw7_bias, sp["dw7"])
    mix_in = (d3 + d5 + d7) / 3.0 + z
    g_mix_in, g_mix_w, g_mix_b = conv2d_vjp(mix_in, p.mix_weight, p.mix_bias,
                                            sp["mix"], gy)
    gz = gy + g_mix_in
    g_avg = g_mix_in / 3.0
    gz3, g3w, g3b = conv2d_vjp(z, p.dw3_weight, p.dw3_bias, sp["dw3"], g_avg)
    gz5, g5w, g5b = conv2d_vjp(z, p.dw5_weight, p.dw5_bias, sp["dw5"], g_avg)
    gz7, g7w, g7b = conv2d_vjp(z, p.dw7_weight, p.dw7_bias, sp["dw7"], g_avg)
    gp = dataclasses.replace(
        zeros_like_params(p),
        dw3_weight=g3w, dw3_bias=g3b, dw5_weight=g5w, dw5_bias=g5b,
        dw7_weight=g7w, dw7_bias=g7b, mix_weight=g_mix_w, mix_bias=g_mix_b)
    return gz + gz3 + gz5 + gz7, gp


def _mona_parts(x, p: MonaParams):
    sp = _mona_specs(p)
    z = conv2d(x, p.down_weight, p.down_bias, sp["down"])
    d3 = conv2d(z, p.dw3_weight, p.dw3_bias, sp["dw3"])
    d5 = conv2d(z, p.dw5_weight, p.dw5_bias, sp["dw5"])
    d7 = conv2d(z, p.dw7_weight, p.dw7_bias, sp["dw7"])
    mix_in = (d3 + d5 + d7) / 3.0 + z
    mo = z + conv2d(mix_in, p.mix_weight, p.mix_bias, sp["mix"])
    act = ops.gelu(mo)
    up = conv2d(act, p.up_weight, p.up_bias, sp["up"])
    skip_lin = np.einsum("ce,nehw->nchw", p.skip_weight, x)
    out = p.skip_scale * skip_lin + up
    return {"sp": sp, "z": z, "mix_in": mix_in, "mo": mo, "act": act,
            "skip_lin": skip_lin, "out": out}


def mona(x, p: MonaParams):
    x = as_feature_map(x, "mona")
    require_channels(x, p.down_weight.shape[1], "mona")
    return _mona_parts(x, p)["out"]


def mona_vjp(x, p: MonaParams, gy):
    parts = _mona_parts(x, p)
    sp = parts["sp"]
    z, mix_in, mo, act = parts["z"], parts["mix_in"], parts["mo"], parts["act"]

    g_scale = float(np.sum(gy * parts["skip_lin"]))
    g_skip_w = p.skip_scale * np.einsum("nchw,nehw->ce", gy, x)
    gx = p.skip_scale * np.einsum("ce,nchw->nehw", p.skip_weight, gy)

    g_act, g_up_w, g_up_b = conv2d_vjp(act, p.up_weight, p.up_bias, sp["up"], gy)
    g_mo = ops.activation_grad("gelu", mo) * g_act
    g_mix_in, g_mix_w, g_mix_b = conv2d_vjp(mix_in, p.mix_weight, p.mix_bias,
                                            sp["mix"], g_mo)
    gz = g_mo + g_mix_in
    g_avg = g_mix_in / 3.0
    gz3, g_dw3_w, g_dw3_b = conv2d_vjp(z, p.dw3_weight, p.dw3_bias, sp["dw3"], g_avg)
    gz5, g_dw5_w, g_dw5_b = conv2d_vjp(z, p.dw5_weight, p.dw5_bias, sp["dw5"], g_avg)
    gz7, g_dw7_w, g_dw7_b = conv2d_vjp(z, p.dw7_weight, p.dw7_bias, sp["dw7"], g_avg)
    gz += gz3 + gz5 + gz7
    gx_down, g_down_w, g_down_b = conv2d_vjp(x, p.down_weight, p.down_bias,
                                             sp["down"], gz)
    gx += gx_down
    gp = MonaParams(
        down_weight=g_down_w, down_bias=g_down_b,
        dw3_weight=g_dw3_w, dw3_bias=g_dw3_b,
        dw5_weight=g_dw5_w, dw5_bias=g_dw5_b,
        dw7_weight=g_dw7_w, dw7_bias=g_dw7_b,
        mix_weight=g_mix_w, mix_bias=g_mix_b,
        up_weight=g_up_w, up_bias=g_up_b,
        skip_weight=g_skip_w, skip_scale=g_scale,
    )
    return gx, gp


# ---------------------------------------------------------------------------
# spectral feed-forward
# ---------------------------------------------------------------------------

def _seff_specs(c):
    return {
        "split": same_spec(c, 1, 1, out_channels=2 * c),
        "b1": same_spec(c, 3, 3, groups=c),
        "b2": same_spec(c, 3, 3, groups=c, dilation=(2, 2)),
        "merge": same_spec(c, 1, 1),
    }


def _freq_weight(re, im, h, w):
    """Resample a per-channel complex weight plane to the runtime spatial
    dims, real and imaginary parts independently."""
    wr = ops.bilinear_resize(re[None], h, w)[0]
    wi = ops.bilinear_resize(im[None], h, w)[0]
    return wr + 1j * wi


def _seff_parts(x, p: SeffParams):
    c = p.merge_weight.shape[0]
    h, w = x.shape[2], x.shape[3]
    sp = _seff_specs(c)
    split = conv2d(x, p.split_weight, p.split_bias, sp["split"])
    f1, f2 = split[:, :c], split[:, c:]
    f1r = conv2d(f1, p.branch1_weight, p.branch1_bias, sp["b1"])
    f2r = conv2d(f2, p.branch2_weight, p.branch2_bias, sp["b2"])
    x1 = ops.fft2(f1r)
    x2 = ops.fft2(f2r)
    w1 = _freq_weight(p.w1_re, p.w1_im, h, w)[None]
    w2 = _freq_weight(p.w2_re, p.w2_im, h, w)[None]
    z1 = w1 * x1 + p.freq_bias1[None, :, None, None]
    z2 = w2 * x2 + p.freq_bias2[None, :, None, None]
    t1 = ops.ifft2(z1)
    t2 = ops.ifft2(z2)
    gate = ops.silu(t2)
    prod = gate * t1
    out = conv2d(prod, p.merge_weight, p.merge_bias, sp["merge"])
    return {"sp": sp, "c": c, "f1": f1, "f2": f2, "f1r": f1r, "f2r": f2r,
            "x1": x1, "x2": x2, "w1": w1, "w2": w2, "t1": t1, "t2": t2,
            "gate": gate, "prod": prod, "out": out}


def seff(x, p: SeffParams):
    x = as_feature_map(x, "seff")
    require_channels(x, p.split_weight.shape[1], "seff")
    return _seff_parts(x, p)["out"]


def seff_vjp(x, p: SeffParams, gy):
    parts = _seff_parts(x, p)
    sp, c = parts["sp"], parts["c"]
    h, wd = x.shape[2], x.shape[3]
    base_h, base_w = p.w1_re.shape[1], p.w1_re.shape[2]

    g_prod, g_merge_w, g_merge_b = conv2d_vjp(parts["prod"], p.merge_weight,
                                              p.merge_bias, sp["merge"], gy)
    g_t1 = parts["gate"] * g_prod
    g_t2 = ops.activation_grad("silu", parts["t2"]) * parts["t1"] * g_prod

    gz1 = ops.ifft2_vjp(g_t1)
    gz2 = ops.ifft2_vjp(g_t2)
    # complex product rule under the (dL/dRe + i dL/dIm) packing
    gx1 = np.conj(parts["w1"]) * gz1
    gx2 = np.conj(parts["w2"]) * gz2
    gw1_full = (np.conj(parts["x1"]) * gz1).sum(axis=0)
    gw2_full = (np.conj(parts["x2"]) * gz2).sum(axis=0)
    g_fb1 = gz1.real.sum(axis=(0, 2, 3))
    g_fb2 = gz2.real.sum(axis=(0, 2, 3))
    g_w1_re = ops.bilinear_resize_vjp(base_h, base_w, gw1_full.real[None])[0]
    g_w1_im = ops.bilinear_resize_vjp(base_h, base_w, gw1_full.imag[None])[0]
    g_w2_re = ops.bilinear_resize_vjp(base_h, base_w, gw2_full.real[None])[0]
    g_w2_im = ops.bilinear_resize_vjp(base_h, base_w, gw2_full.imag[None])[0]

    g_f1r = ops.fft2_vjp(gx1)
    g_f2r = ops.fft2_vjp(gx2)
    g_f1, g_b1_w, g_b1_b = conv2d_vjp(parts["f1"], p.branch1_weight,
                                      p.branch1_bias, sp["b1"], g_f1r)
    g_f2, g_b2_w, g_b2_b = conv2d_vjp(parts["f2"], p.branch2_weight,
                                      p.branch2_bias, sp["b2"], g_f2r)
    g_split = np.concatenate([g_f1, g_f2], axis=1)
    gx, g_split_w, g_split_b = conv2d_vjp(x, p.split_weight, p.split_bias,
                                          sp["split"], g_split)
    gp = SeffParams(
        split_weight=g_split_w, split_bias=g_split_b,
        branch1_weight=g_b1_w, branch1_bias=g_b1_b,
        branch2_weight=g_b2_w, branch2_bias=g_b2_b,
        w1_re=g_w1_re, w1_im=g_w1_im, w2_re=g_w2_re, w2_im=g_w2_im,
        freq_bias1=g_fb1, freq_bias2=g_fb2,
        merge_weight=g_merge_w, merge_bias=g_merge_b,
    )
    return gx, gp


# ---------------------------------------------------------------------------
# stage compositions
# ---------------------------------------------------------------------------

def daff(x, dyt_p: DyTParams, tssa_p: TssaParams, mona_p: MonaParams):
    """mona(x + attention(dyt(x)))"""
    return mona(x + tssa(dyt(x, dyt_p), tssa_p), mona_p)


def daff_vjp(x, dyt_p, tssa_p, mona_p, gy):
    normed = dyt(x, dyt_p)
    res = x + tssa(normed, tssa_p)
    g_res, g_mona = mona_vjp(res, mona_p, gy)
    g_normed, g_tssa = tssa_vjp(normed, tssa_p, g_res)
    gx, g_dyt = dyt_vjp(x, dyt_p, g_normed)
    return gx + g_res, g_dyt, g_tssa, g_mona


def serr(x, dyt_p: DyTParams, seff_p: SeffParams, mona_p: MonaParams):
    """mona(x + seff(dyt(x)))"""
    return mona(x + seff(dyt(x, dyt_p), seff_p), mona_p)


def serr_vjp(x, dyt_p, seff_p, mona_p, gy):
    normed = dyt(x, dyt_p)
    res = x + seff(normed, seff_p)
    g_res, g_mona = mona_vjp(res, mona_p, gy)
    g_normed, g_seff = seff_vjp(normed, seff_p, g_res)
    gx, g_dyt = dyt_vjp(x, dyt_p, g_normed)
    return gx + g_res, g_dyt, g_seff, g_mona


def ftssa(x, p: FtssaParams):
    """Both stages in series; dims preserved."""
    stage1 = daff(x, p.dyt1, p.tssa, p.mona1)
    return serr(stage1, p.dyt2, p.seff, p.mona2)


def ftssa_vjp(x, p: FtssaParams, gy):
    stage1 = daff(x, p.dyt1, p.tssa, p.mona1)
    g1, g_dyt2, g_seff, g_mona2 = serr_vjp(stage1, p.dyt2, p.seff, p.mona2, gy)
    gx, g_dyt1, g_tssa, g_mona1 = daff_vjp(x, p.dyt1, p.tssa, p.mona1, g1)
    gp = FtssaParams(dyt1=g_dyt1, tssa=g_tssa, mona1=g_mona1,
                     dyt2=g_dyt2, seff=g_seff, mona2=g_mona2)
    return gx, gp
