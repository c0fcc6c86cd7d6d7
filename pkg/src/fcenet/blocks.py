"""Frequency-domain fusion blocks: FDSM and FEFM (CFR + DFR).

FDSM screens each branch's spectrum through a per-channel convex combination
of k learnable frequency filters, with combination weights predicted from the
fused pair.  FEFM correlates the two screened branches in the frequency
domain: transposed C×C channel attention over spectra (CFR), then a residual
de-emphasis of the NIR value path (DFR) plus a Q-gated add-back.

Spectra ride through the autodiff graph as (re, im) Var pairs; see
fcenet.spectral for the adjoint conventions.
"""

import numpy as np

from . import autodiff as ad
from . import spectral
from .tensor_core import (conv_params, conv2d, gelu, global_avg_pool,
                          layer_norm, mlp_forward, mlp_params)


class FilterBank:
    """k learnable H×W gain maps (the filter atoms G)."""

    def __init__(self, gains):
        if gains.data.ndim != 3 or gains.data.shape[0] < 1:
            raise ValueError("bank gains must be (k, H, W) with k >= 1")
        self.gains = gains

    @property
    def k(self):
        return self.gains.data.shape[0]


def filter_bank(k, height, width, rng, dtype=np.float32):
    """Near-identity init: all-ones atoms with small jitter."""
    g = 1.0 + 0.01 * rng.standard_normal((k, height, width))
    return FilterBank(ad.param(g.astype(dtype)))


class FdsmParams:
    def __init__(self, ln_n, ln_r, fuse_conv, mlp_r, mlp_n, bank_r, bank_n):
        self.ln_n = ln_n  # (gamma, beta)
        self.ln_r = ln_r
        self.fuse_conv = fuse_conv
        self.mlp_r = mlp_r
        self.mlp_n = mlp_n
        self.bank_r = bank_r
        self.bank_n = bank_n

    def named_params(self, prefix):
        yield prefix + ".ln_n.gamma", self.ln_n[0]
        yield prefix + ".ln_n.beta", self.ln_n[1]
        yield prefix + ".ln_r.gamma", self.ln_r[0]
        yield prefix + ".ln_r.beta", self.ln_r[1]
        yield prefix + ".fuse.w", self.fuse_conv.weight
        yield prefix + ".fuse.b", self.fuse_conv.bias
        for tag, m in (("mlp_r", self.mlp_r), ("mlp_n", self.mlp_n)):
            yield f"{prefix}.{tag}.w1", m.w1
            yield f"{prefix}.{tag}.b1", m.b1
            yield f"{prefix}.{tag}.w2", m.w2
            yield f"{prefix}.{tag}.b2", m.b2
        yield prefix + ".bank_r", self.bank_r.gains
        yield prefix + ".bank_n", self.bank_n.gains


def fdsm_params(channels, k, height, width, rng, dtype=np.float32):
    def ln():
        return (ad.param(np.ones(channels, dtype=dtype)),
                ad.param(np.zeros(channels, dtype=dtype)))

    hidden = max(channels // 2, 1)
    return FdsmParams(
        ln_n=ln(), ln_r=ln(),
        fuse_conv=conv_params("standard", 2 * channels, 2 * channels, 3, rng, dtype=dtype),
        mlp_r=mlp_params(channels, hidden, channels * k, rng, dtype=dtype),
        mlp_n=mlp_params(channels, hidden, channels * k, rng, dtype=dtype),
        bank_r=filter_bank(k, height, width, rng, dtype=dtype),
        bank_n=filter_bank(k, height, width, rng, dtype=dtype),
    )


def dynamic_filter_weights(aggregated, weight_mlp, bank):
    """Per-channel convex combination of the bank atoms (DF_I of Eq. 2)."""
    C = aggregated.data.shape[0]
    k, H, W = bank.gains.data.shape
    logits = mlp_forward(global_avg_pool(aggregated), weight_mlp)
    if logits.data.shape[0] != C * k:
        raise ValueError(f"MLP yields {logits.data.shape[0]} logits, need C*k = {C * k}")
    w = ad.softmax_last(ad.reshape(logits, (C, k)))
    df = ad.matmul(w, ad.reshape(bank.gains, (k, H * W)))
    return ad.reshape(df, (C, H, W))


def fdsm_forward(n, r, params):
    """Eqs. 2-3: predict per-branch spectral gains, filter the raw features."""
    if n.data.shape != r.data.shape:
        raise ValueError(f"shape mismatch {n.data.shape} vs {r.data.shape}")
    C = n.data.shape[0]
    fused = gelu(conv2d(params.fuse_conv,
                        ad.concat([layer_norm(n, *params.ln_n),
                                   layer_norm(r, *params.ln_r)], axis=0)))
    a_r = ad.slice_axis0(fused, 0, C)
    a_n = ad.slice_axis0(fused, C, 2 * C)
    df_r = dynamic_filter_weights(a_r, params.mlp_r, params.bank_r)
    df_n = dynamic_filter_weights(a_n, params.mlp_n, params.bank_n)
    # filters act on the original features; the normalized path only
    # steers the combination weights
    return spectral.spectral_filter(r, df_r), spectral.spectral_filter(n, df_n)


class FefmParams:
    def __init__(self, q_pw, q_dw, k_pw, k_dw, v_pw, v_dw, log_alpha, lam):
        self.q_pw, self.q_dw = q_pw, q_dw
        self.k_pw, self.k_dw = k_pw, k_dw
        self.v_pw, self.v_dw = v_pw, v_dw
        self.log_alpha = log_alpha
        self.lam = lam

    def named_params(self, prefix):
        for tag, pw, dw in (("q", self.q_pw, self.q_dw),
                            ("k", self.k_pw, self.k_dw),
                            ("v", self.v_pw, self.v_dw)):
            yield f"{prefix}.{tag}_pw.w", pw.weight
            yield f"{prefix}.{tag}_pw.b", pw.bias
            yield f"{prefix}.{tag}_dw.w", dw.weight
            yield f"{prefix}.{tag}_dw.b", dw.bias
        yield prefix + ".log_alpha", self.log_alpha
        yield prefix + ".lam", self.lam


def fefm_params(channels, rng, dtype=np.float32):
    def proj():
        return (conv_params("pointwise", channels, channels, 1, rng, dtype=dtype),
                conv_params("depthwise", channels, channels, 3, rng, dtype=dtype))

    q_pw, q_dw = proj()
    k_pw, k_dw = proj()
    v_pw, v_dw = proj()
    # alpha = exp(log_alpha) keeps the temperature positive; start at sqrt(C)
    log_alpha = ad.param(np.asarray(0.5 * np.log(channels), dtype=dtype))
    lam = ad.param(np.asarray(0.5, dtype=dtype))
    return FefmParams(q_pw, q_dw, k_pw, k_dw, v_pw, v_dw, log_alpha, lam)


def cfr_forward(f_r, f_n, params):
    """Eq. 4 channel attention over spectra.

    Returns (cfr_re, cfr_im, q, v): the complex F_CFR as a real Var pair plus
    the Q and V projections needed downstream.
    """
    if f_r.data.shape != f_n.data.shape:
        raise ValueError(f"shape mismatch {f_r.data.shape} vs {f_n.data.shape}")
    C, H, W = f_r.data.shape
    q = conv2d(params.q_dw, conv2d(params.q_pw, f_r))
    k = conv2d(params.k_dw, conv2d(params.k_pw, f_n))
    v = conv2d(params.v_dw, conv2d(params.v_pw, f_n))
    qr, qi = spectral.dft_pair(q)
    kr, ki = spectral.dft_pair(k)
    qr_f = ad.reshape(qr, (C, H * W))
    qi_f = ad.reshape(qi, (C, H * W))
    kr_f = ad.reshape(kr, (C, H * W))
    ki_f = ad.reshape(ki, (C, H * W))
    # Re(F_Q conj(F_K)^T): cross-correlation at zero lag, per channel pair
    scores = ad.matmul_t(qr_f, kr_f) + ad.matmul_t(qi_f, ki_f)
    inv_temp = ad.exp(-params.log_alpha)
    attn = ad.softmax_last(scores * inv_temp * (1.0 / (H * W)))
    # complex Hadamard F_Q ⊙ F_K, then rows mixed by the attention matrix
    p_re = qr * kr - qi * ki
    p_im = qr * ki + qi * kr
    cfr_re = ad.reshape(ad.matmul(attn, ad.reshape(p_re, (C, H * W))), (C, H, W))
    cfr_im = ad.reshape(ad.matmul(attn, ad.reshape(p_im, (C, H * W))), (C, H, W))
    return cfr_re, cfr_im, q, v


def dfr_forward(v, cfr_re, cfr_im, lam):
    """Eq. 5: V − λ · V ⊙ Re(IDFT(F_CFR))."""
    if v.data.shape != cfr_re.data.shape:
        raise ValueError(f"shape mismatch {v.data.shape} vs {cfr_re.data.shape}")
    c_spatial = spectral.re_idft_pair(cfr_re, cfr_im)
    return v - lam * (v * c_spatial)


def fefm_forward(f_r, f_n, params):
    """CFR attention, DFR residual, and the Q-gated correlation add-back."""
    cfr_re, cfr_im, q, v = cfr_forward(f_r, f_n, params)
    c_spatial = spectral.re_idft_pair(cfr_re, cfr_im)
    dfr = v - params.lam * (v * c_spatial)
    return dfr + q * c_spatial
