"""Dense-tensor primitives: convolution, linear maps, softmax, activations,
pooling, 2-D FFT and bilinear resampling.

Every primitive is a pure function over float64 (or complex128) arrays and
comes with a hand-written vector-Jacobian product (`*_vjp`) so gradients can
be verified against central differences.  There is no tape: composite ops
chain these VJPs explicitly.

conv2d has two paths: a direct nested-loop reference (`method="direct"`) and
an im2col/GEMM path (`method="im2col"`, the default behind "auto").  The two
are validated against each other in the test suite; the FLOP estimator counts
the direct form.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ShapeError

# im2col patch buffers are chunked over output rows above this element count
# so large kernels (7x7 on 80x80 maps) stay within a few hundred MB.
_PATCH_BUDGET = 1 << 25


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 2-D convolution.

    padding is (top, bottom, left, right); asymmetric padding is what keeps
    even kernels (4x6, 6x4) "same"-sized.
    """

    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: tuple = (1, 1)
    padding: tuple = (0, 0, 0, 0)
    dilation: tuple = (1, 1)
    groups: int = 1

    def __post_init__(self):
        for field in ("in_channels", "out_channels", "kernel_h", "kernel_w", "groups"):
            if getattr(self, field) < 1:
                raise ConfigError(f"ConvSpec.{field} must be >= 1, got {getattr(self, field)}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ConfigError(
                f"ConvSpec: groups {self.groups} must divide in_channels "
                f"{self.in_channels} and out_channels {self.out_channels}"
            )
        if any(s < 1 for s in self.stride) or any(d < 1 for d in self.dilation):
            raise ConfigError("ConvSpec: stride and dilation entries must be >= 1")
        if any(p < 0 for p in self.padding):
            raise ConfigError("ConvSpec: padding entries must be >= 0")

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels // self.groups,
                self.kernel_h, self.kernel_w)

    def output_hw(self, h, w):
        eff_h = self.dilation[0] * (self.kernel_h - 1) + 1
        eff_w = self.dilation[1] * (self.kernel_w - 1) + 1
        ho = (h + self.padding[0] + self.padding[1] - eff_h) // self.stride[0] + 1
        wo = (w + self.padding[2] + self.padding[3] - eff_w) // self.stride[1] + 1
        if ho < 1:
            raise ShapeError("conv2d", "height", f">= {eff_h - self.padding[0] - self.padding[1]}", h)
        if wo < 1:
            raise ShapeError("conv2d", "width", f">= {eff_w - self.padding[2] - self.padding[3]}", w)
        return ho, wo


def same_padding(kernel_h, kernel_w, dilation=(1, 1)):
    """Asymmetric "same" padding: floor((k_eff-1)/2) top/left, the rest
    bottom/right, so output spatial dims equal input dims at stride 1."""
    eff_h = dilation[0] * (kernel_h - 1) + 1
    eff_w = dilation[1] * (kernel_w - 1) + 1
    return ((eff_h - 1) // 2, eff_h - 1 - (eff_h - 1) // 2,
            (eff_w - 1) // 2, eff_w - 1 - (eff_w - 1) // 2)


def same_spec(channels, kernel_h, kernel_w, out_channels=None, groups=1, dilation=(1, 1)):
    """Stride-1 "same" ConvSpec helper."""
    return ConvSpec(
        in_channels=channels,
        out_channels=channels if out_channels is None else out_channels,
        kernel_h=kernel_h,
        kernel_w=kernel_w,
        padding=same_padding(kernel_h, kernel_w, dilation),
        dilation=dilation,
        groups=groups,
    )


def _check_conv_args(x, w, b, spec):
    if x.ndim != 4:
        raise ShapeError("conv2d", "rank", 4, x.ndim)
    if x.shape[1] != spec.in_channels:
        raise ShapeError("conv2d", "channel", spec.in_channels, x.shape[1])
    if tuple(w.shape) != spec.weight_shape:
        raise ShapeError("conv2d", "weights", spec.weight_shape, tuple(w.shape))
    if b.shape != (spec.out_channels,):
        raise ShapeError("conv2d", "bias", (spec.out_channels,), tuple(b.shape))


def _row_chunks(ho, wo, kdim):
    rows = max(1, _PATCH_BUDGET // max(1, kdim * wo))
    for r0 in range(0, ho, rows):
        yield r0, min(r0 + rows, ho)


def _gather_patches(xp, spec, r0, r1, wo):
    """Patch tensor (N, C, kh, kw, rows, wo) for output rows [r0, r1)."""
    sh, sw = spec.stride
    dh, dw = spec.dilation
    rows = np.arange(r0, r1) * sh + np.arange(spec.kernel_h)[:, None] * dh
    cols = np.arange(wo) * sw + np.arange(spec.kernel_w)[:, None] * dw
    pat = xp[:, :, rows[:, :, None, None], cols[None, None, :, :]]
    # (N, C, kh, rows, kw, wo) -> (N, C, kh, kw, rows, wo)
    return pat.transpose(0, 1, 2, 4, 3, 5)


def conv2d(x, w, b, spec: ConvSpec, method="auto"):
    """Grouped / dilated 2-D convolution (cross-correlation convention)."""
    _check_conv_args(x, w, b, spec)
    if method == "direct":
        return _conv2d_direct(x, w, b, spec)
    if method not in ("auto", "im2col"):
        raise ConfigError(f"conv2d: unknown method '{method}'")
    return _conv2d_im2col(x, w, b, spec)


def _conv2d_im2col(x, w, b, spec):
    n, _, h, wd = x.shape
    ho, wo = spec.output_hw(h, wd)
    g = spec.groups
    cg = spec.in_channels // g
    og = spec.out_channels // g
    kdim = cg * spec.kernel_h * spec.kernel_w
    pt, pb, pl, pr = spec.padding
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    wm = w.reshape(g, og, kdim)
    out = np.empty((n, spec.out_channels, ho, wo))
    for r0, r1 in _row_chunks(ho, wo, kdim):
        pat = _gather_patches(xp, spec, r0, r1, wo)
        cols = pat.reshape(n, g, kdim, (r1 - r0) * wo)
        res = np.matmul(wm[None], cols)          # (n, g, og, rows*wo)
        out[:, :, r0:r1, :] = res.reshape(n, spec.out_channels, r1 - r0, wo)
    return out + b[None, :, None, None]


def _conv2d_direct(x, w, b, spec):
    """Reference nested-loop convolution; only sensible at tiny sizes."""
    n, _, h, wd = x.shape
    ho, wo = spec.output_hw(h, wd)
    g = spec.groups
    cg = spec.in_channels // g
    og = spec.out_channels // g
    pt, _, pl, _ = spec.padding
    sh, sw = spec.stride
    dh, dw = spec.dilation
    out = np.zeros((n, spec.out_channels, ho, wo))
    for bi in range(n):
        for co in range(spec.out_channels):
            gi = co // og
            for oh in range(ho):
                for ow in range(wo):
                    acc = 0.0
                    for ci in range(cg):
                        for ih in range(spec.kernel_h):
                            yy = oh * sh + ih * dh - pt
                            if yy < 0 or yy >= h:
                                continue
                            for iw in range(spec.kernel_w):
                                xx = ow * sw + iw * dw - pl
                                if xx < 0 or xx >= wd:
                                    continue
                                acc += x[bi, gi * cg + ci, yy, xx] * w[co, ci, ih, iw]
                    out[bi, co, oh, ow] = acc + b[co]
    return out


def conv2d_vjp(x, w, b, spec: ConvSpec, gy):
    """Gradients of sum-style losses through conv2d: returns (gx, gw, gb)."""
    _check_conv_args(x, w, b, spec)
    n, _, h, wd = x.shape
    ho, wo = spec.output_hw(h, wd)
    if gy.shape != (n, spec.out_channels, ho, wo):
        raise ShapeError("conv2d_vjp", "grad", (n, spec.out_channels, ho, wo), gy.shape)
    g = spec.groups
    cg = spec.in_channels // g
    og = spec.out_channels // g
    kh, kw = spec.kernel_h, spec.kernel_w
    kdim = cg * kh * kw
    pt, pb, pl, pr = spec.padding
    sh, sw = spec.stride
    dh, dw = spec.dilation
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    wm = w.reshape(g, og, kdim)
    gxp = np.zeros_like(xp)
    gw = np.zeros((g, og, kdim))
    for r0, r1 in _row_chunks(ho, wo, kdim):
        rows = r1 - r0
        pat = _gather_patches(xp, spec, r0, r1, wo)
        cols = pat.reshape(n, g, kdim, rows * wo)
        gym = gy[:, :, r0:r1, :].reshape(n, g, og, rows * wo)
        gw += np.matmul(gym, cols.transpose(0, 1, 3, 2)).sum(axis=0)
        gcols = np.matmul(wm.transpose(0, 2, 1)[None], gym)
        gpat = gcols.reshape(n, spec.in_channels, kh, kw, rows, wo)
        for ih in range(kh):
            y0 = r0 * sh + ih * dh
            for iw in range(kw):
                gxp[:, :, y0:y0 + sh * rows:sh, iw * dw:iw * dw + sw * wo:sw] += gpat[:, :, ih, iw]
    gx = gxp[:, :, pt:pt + h, pl:pl + wd]
    return gx, gw.reshape(spec.weight_shape), gy.sum(axis=(0, 2, 3))


# ---------------------------------------------------------------------------
# linear / softmax / activations / pooling
# ---------------------------------------------------------------------------

def linear(x, w, b):
    """Row-wise affine map: out = x @ w + b for x (m, n), w (n, p), b (p,)."""
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError("linear", "rank", 2, x.ndim if x.ndim != 2 else w.ndim)
    if x.shape[1] != w.shape[0]:
        raise ShapeError("linear", "inner", w.shape[0], x.shape[1])
    if b.shape != (w.shape[1],):
        raise ShapeError("linear", "bias", (w.shape[1],), tuple(b.shape))
    return x @ w + b


def linear_vjp(x, w, b, gy):
    return gy @ w.T, x.T @ gy, gy.sum(axis=0)


def softmax(x, axis):
    """Numerically stable softmax along one axis (max-subtraction)."""
    axis = int(axis)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError("softmax", "axis", f"in [-{x.ndim}, {x.ndim})", axis)
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_vjp(x, axis, gy):
    y = softmax(x, axis)
    return y * (gy - (gy * y).sum(axis=axis, keepdims=True))


_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x):
    return x * sigmoid(x)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


ACTIVATIONS = ("tanh", "gelu", "silu", "sigmoid")


def activation(kind, x):
    if kind == "tanh":
        return np.tanh(x)
    if kind == "gelu":
        return gelu(x)
    if kind == "silu":
        return silu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ConfigError(f"activation: unknown kind '{kind}'")


def activation_grad(kind, x):
    """Elementwise derivative d act(x) / dx."""
    if kind == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    if kind == "gelu":
        cdf = 0.5 * (1.0 + erf(x / _SQRT2))
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        return cdf + x * pdf
    if kind == "silu":
        s = sigmoid(x)
        return s * (1.0 + x * (1.0 - s))
    if kind == "sigmoid":
        s = sigmoid(x)
        return s * (1.0 - s)
    raise ConfigError(f"activation: unknown kind '{kind}'")


def activation_vjp(kind, x, gy):
    return activation_grad(kind, x) * gy


def global_avg_pool(x):
    """Per (batch, channel) spatial mean; output spatial dims 1x1."""
    if x.ndim != 4:
        raise ShapeError("global_avg_pool", "rank", 4, x.ndim)
    return x.mean(axis=(2, 3), keepdims=True)


def global_avg_pool_vjp(x, gy):
    h, w = x.shape[2], x.shape[3]
    return np.broadcast_to(gy / (h * w), x.shape).copy()


# ---------------------------------------------------------------------------
# 2-D FFT over the spatial axes
# ---------------------------------------------------------------------------
# Convention: forward unnormalized, inverse divides by H*W, so Parseval reads
# sum |x|^2 == sum |X|^2 / (H*W).  Any spatial size is supported (the backing
# transform is mixed-radix with Bluestein for large primes).  ifft2 returns
# the real part; the imaginary residue of non-symmetric spectra is discarded
# by contract.

def fft2(x):
    if x.ndim != 4:
        raise ShapeError("fft2", "rank", 4, x.ndim)
    return np.fft.fft2(x, axes=(-2, -1))


def ifft2(spectrum):
    if spectrum.ndim != 4:
        raise ShapeError("ifft2", "rank", 4, spectrum.ndim)
    return np.fft.ifft2(spectrum, axes=(-2, -1)).real


def fft2_vjp(gy):
    """VJP of fft2 for a real input.  gy is complex with the convention
    gy = dL/dRe(X) + i * dL/dIm(X); returns dL/dx (real)."""
    h, w = gy.shape[-2], gy.shape[-1]
    return h * w * np.fft.ifft2(gy, axes=(-2, -1)).real


def ifft2_vjp(gy):
    """VJP of x -> Re(ifft2(x)) for complex input; gy is real."""
    h, w = gy.shape[-2], gy.shape[-1]
    return np.fft.fft2(gy, axes=(-2, -1)) / (h * w)


# ---------------------------------------------------------------------------
# bilinear resampling (half-pixel centers)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _resize_matrix(n_in, n_out):
    """(n_out, n_in) interpolation matrix; identity when sizes match."""
    if n_in == n_out:
        return np.eye(n_in)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    t = src - i0
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(mat, (rows, i0), 1.0 - t)
    np.add.at(mat, (rows, i1), t)
    return mat


def bilinear_resize(x, out_h, out_w):
    """Resample the spatial axes of (N, C, H, W) to (out_h, out_w)."""
    if x.ndim != 4:
        raise ShapeError("bilinear_resize", "rank", 4, x.ndim)
    ah = _resize_matrix(x.shape[2], out_h)
    aw = _resize_matrix(x.shape[3], out_w)
    tmp = np.matmul(ah[None, None], x)
    return np.matmul(tmp, aw.T[None, None])


def bilinear_resize_vjp(in_h, in_w, gy):
    """Adjoint of bilinear_resize back to spatial dims (in_h, in_w)."""
    ah = _resize_matrix(in_h, gy.shape[2])
    aw = _resize_matrix(in_w, gy.shape[3])
    tmp = np.matmul(ah.T[None, None], gy)
    return np.matmul(tmp, aw[None, None])
