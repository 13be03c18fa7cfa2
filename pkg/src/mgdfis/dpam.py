"""Pixel attention over the fused features and the final weighted fusion.

The attention map gates the refined features against a weighted sum of the
two (reconciled) input maps; three scalar fusion weights balance the mix.
"""

import numpy as np

from . import ops
from .gdim import _reconcile, aggregate_vjp
from .ops import conv2d, conv2d_vjp, same_spec
from .params import (AggregateParams, DpamParams, FusionWeights,
                     add_params, zeros_like_params)
from .tensor import as_feature_map, require_same_shape


def dpam(f_agg, f_hat, p: DpamParams):
    """Channel-concat, 7x7 convolve down to C, sigmoid: a map in (0,1)."""
    f_agg = as_feature_map(f_agg, "dpam")
    f_hat = as_feature_map(f_hat, "dpam")
    require_same_shape(f_agg, f_hat, "dpam")
    c = f_agg.shape[1]
    cat = np.concatenate([f_agg, f_hat], axis=1)
    local = conv2d(cat, p.conv_weight, p.conv_bias,
                   same_spec(2 * c, 7, 7, out_channels=c))
    return ops.sigmoid(local)


def dpam_vjp(f_agg, f_hat, p: DpamParams, gy):
    c = f_agg.shape[1]
    cat = np.concatenate([f_agg, f_hat], axis=1)
    spec = same_spec(2 * c, 7, 7, out_channels=c)
    local = conv2d(cat, p.conv_weight, p.conv_bias, spec)
    g_local = ops.activation_grad("sigmoid", local) * gy
    g_cat, gw, gb = conv2d_vjp(cat, p.conv_weight, p.conv_bias, spec, g_local)
    return g_cat[:, :c], g_cat[:, c:], DpamParams(conv_weight=gw, conv_bias=gb)


def mgdfis_fuse(amap, f_hat, x1, x2, w: FusionWeights,
                agg_p: AggregateParams = None):
    """w_map * (amap*f_hat + (1-amap)*(w_x1*x1' + w_x2*x2')) where x1, x2
    are reconciled to f_hat dims by the aggregation resampler."""
    amap = as_feature_map(amap, "mgdfis_fuse")
    f_hat = as_feature_map(f_hat, "mgdfis_fuse")
    require_same_shape(amap, f_hat, "mgdfis_fuse")
    x1p = x1 if x1.shape == f_hat.shape else _reconcile(x1, f_hat.shape, agg_p)
    x2p = x2 if x2.shape == f_hat.shape else _reconcile(x2, f_hat.shape, agg_p)
    base = w.w_x1 * x1p + w.w_x2 * x2p
    return w.w_map * (amap * f_hat + (1.0 - amap) * base)


def mgdfis_fuse_vjp(amap, f_hat, x1, x2, w: FusionWeights, agg_p, gy):
    """Returns (g_amap, g_f_hat, g_x1, g_x2, g_w, g_agg)."""
    x1p = x1 if x1.shape == f_hat.shape else _reconcile(x1, f_hat.shape, agg_p)
    x2p = x2 if x2.shape == f_hat.shape else _reconcile(x2, f_hat.shape, agg_p)
    base = w.w_x1 * x1p + w.w_x2 * x2p
    inner = amap * f_hat + (1.0 - amap) * base

    g_w_map = float(np.sum(gy * inner))
    g_inner = w.w_map * gy
    g_amap = g_inner * (f_hat - base)
    g_f_hat = g_inner * amap
    g_base = g_inner * (1.0 - amap)
    g_w_x1 = float(np.sum(g_base * x1p))
    g_w_x2 = float(np.sum(g_base * x2p))
    g_x1p = w.w_x1 * g_base
    g_x2p = w.w_x2 * g_base

    g_agg = zeros_like_params(agg_p) if agg_p is not None else None
    g_x1, g_agg = _reconcile_vjp(x1, f_hat, agg_p, g_x1p, g_agg)
    g_x2, g_agg = _reconcile_vjp(x2, f_hat, agg_p, g_x2p, g_agg)
    gw = FusionWeights(w_map=g_w_map, w_x1=g_w_x1, w_x2=g_w_x2)
    return g_amap, g_f_hat, g_x1, g_x2, gw, g_agg


def _reconcile_vjp(x, f_hat, agg_p, gxp, g_agg_acc):
    if x.shape == f_hat.shape:
        return gxp, g_agg_acc
    # reuse the aggregation backward with a zero primary input
    _, gx, g_agg = aggregate_vjp(f_hat, x, agg_p, gxp)
    if g_agg_acc is not None:
        g_agg = add_params(g_agg_acc, g_agg)
    return gx, g_agg
