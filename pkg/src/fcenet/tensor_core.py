"""Neural building blocks on (C, H, W) feature tensors.

Convolution, channel layer-norm, pooling, MLP, softmax and the activation, all
as differentiable ops over :class:`~fcenet.autodiff.Var`.  The convolution
forward/backward arithmetic lives in :mod:`fcenet.kernels` (numba or numpy,
selected by FCENET_BACKEND); everything else is thin numpy.
"""

import numpy as np

from . import autodiff as ad
from . import kernels
from .backend import grad_fault_enabled

CONV_KINDS = ("standard", "pointwise", "depthwise", "strided-down")

LAYER_NORM_EPS = 1e-6


class ConvParams:
    """Learnable weights for one convolution.

    kind: standard | pointwise (k=1) | depthwise (cin=cout, per-channel)
          | strided-down (standard with stride 2).
    Weight layout: (cout, cin, k, k); depthwise uses (c, 1, k, k).
    """

    def __init__(self, kind, in_channels, out_channels, kernel, stride, weight, bias):
        if kind not in CONV_KINDS:
            raise ValueError(f"unknown conv kind {kind!r}")
        if kernel % 2 == 0:
            raise ValueError("conv kernel must be odd")
        if kind == "pointwise" and (kernel != 1 or stride != 1):
            raise ValueError("pointwise conv requires kernel=1, stride=1")
        if kind == "strided-down" and stride != 2:
            raise ValueError("strided-down conv requires stride=2")
        if kind == "depthwise" and in_channels != out_channels:
            raise ValueError("depthwise conv requires in_channels == out_channels")
        if stride not in (1, 2):
            raise ValueError("stride must be 1 or 2")
        w_shape = ((out_channels, 1, kernel, kernel) if kind == "depthwise"
                   else (out_channels, in_channels, kernel, kernel))
        if weight.data.shape != w_shape:
            raise ValueError(f"weight shape {weight.data.shape} != {w_shape}")
        if bias.data.shape != (out_channels,):
            raise ValueError("bias length must equal out_channels")
        self.kind = kind
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.weight = weight
        self.bias = bias


def conv_params(kind, in_channels, out_channels, kernel, rng, stride=1,
                dtype=np.float32):
    """He-normal initialized ConvParams."""
    fan_in = kernel * kernel * (1 if kind == "depthwise" else in_channels)
    std = np.sqrt(2.0 / fan_in)
    w_shape = ((out_channels, 1, kernel, kernel) if kind == "depthwise"
               else (out_channels, in_channels, kernel, kernel))
    w = ad.param((rng.standard_normal(w_shape) * std).astype(dtype))
    b = ad.param(np.zeros(out_channels, dtype=dtype))
    return ConvParams(kind, in_channels, out_channels, kernel, stride, w, b)


def conv2d(params, x):
    """2D convolution with zero padding (k-1)//2; stride-1 preserves H, W."""
    cin, H, W = x.data.shape
    if cin != params.in_channels:
        raise ValueError(f"input has {cin} channels, conv expects {params.in_channels}")
    s = params.stride
    if H % s != 0 or W % s != 0:
        raise ValueError("spatial dims must be divisible by stride")
    w, b = params.weight, params.bias
    k = params.kernel
    depthwise = params.kind == "depthwise"
    if depthwise:
        out = kernels.conv2d_dw_fwd(x.data, w.data, b.data, s)
    else:
        out = kernels.conv2d_std_fwd(x.data, w.data, b.data, s)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if depthwise:
            gx = kernels.conv2d_dw_bwd_input(g, w.data, s, H, W)
            gw, gb = kernels.conv2d_dw_bwd_params(g, x.data, k, s)
        else:
            gx = kernels.conv2d_std_bwd_input(g, w.data, s, H, W)
            gw, gb = kernels.conv2d_std_bwd_params(g, x.data, k, s)
        if grad_fault_enabled():
            gw = gw * 2.0  # deliberate corruption; gradcheck must flag it
        return (gx, gw, gb)

    return ad.node(out, (x, w, b), bwd)


def layer_norm(x, gamma, beta, eps=LAYER_NORM_EPS):
    """Normalize over channels at each spatial position, then affine."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    C = x.data.shape[0]
    if gamma.data.shape != (C,) or beta.data.shape != (C,):
        raise ValueError("gamma/beta length must equal channel count")
    mu = x.data.mean(axis=0)
    var = x.data.var(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = gamma.data[:, None, None] * xhat + beta.data[:, None, None]

    def bwd(g):
        gxh = g * gamma.data[:, None, None]
        m1 = gxh.mean(axis=0)
        m2 = (gxh * xhat).mean(axis=0)
        gx = inv * (gxh - m1 - xhat * m2)
        ggamma = (g * xhat).sum(axis=(1, 2))
        gbeta = g.sum(axis=(1, 2))
        return (gx.astype(x.data.dtype), ggamma, gbeta)

    return ad.node(out.astype(x.data.dtype), (x, gamma, beta), bwd)


def global_avg_pool(x):
    """(C, H, W) -> (C,) spatial mean per channel."""
    C, H, W = x.data.shape
    n = H * W

    def bwd(g):
        return (np.broadcast_to(g[:, None, None] / n, (C, H, W)).astype(x.data.dtype),)

    return ad.node(x.data.mean(axis=(1, 2)), (x,), bwd)


class MlpParams:
    """Two affine layers with an activation between."""

    def __init__(self, w1, b1, w2, b2):
        if w1.data.shape[0] != b1.data.shape[0] or w2.data.shape[0] != b2.data.shape[0]:
            raise ValueError("bias length must match layer output width")
        if w2.data.shape[1] != w1.data.shape[0]:
            raise ValueError("layer widths do not chain")
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2


def mlp_params(d_in, hidden, d_out, rng, dtype=np.float32):
    w1 = ad.param((rng.standard_normal((hidden, d_in)) * np.sqrt(2.0 / d_in)).astype(dtype))
    b1 = ad.param(np.zeros(hidden, dtype=dtype))
    w2 = ad.param((rng.standard_normal((d_out, hidden)) * np.sqrt(2.0 / hidden)).astype(dtype))
    b2 = ad.param(np.zeros(d_out, dtype=dtype))
    return MlpParams(w1, b1, w2, b2)


def mlp_forward(x, params, activation=None):
    """affine -> activation -> affine on a vector."""
    if params.w1.data.shape[1] != x.data.shape[0]:
        raise ValueError("input width does not match first layer")
    act = gelu if activation is None else activation
    h = act(ad.matvec(params.w1, x) + params.b1)
    return ad.matvec(params.w2, h) + params.b2


def upsample2x_nearest(x):
    """(C, H, W) -> (C, 2H, 2W) by pixel replication."""
    C, H, W = x.data.shape

    def bwd(g):
        return (g.reshape(C, H, 2, W, 2).sum(axis=(2, 4)),)

    return ad.node(np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2), (x,), bwd)


def softmax(logits):
    """Stable softmax over the trailing axis."""
    return ad.softmax_last(logits)


def gelu(x):
    """The activation used throughout the network (exact, erf-based)."""
    return ad.gelu(x)
