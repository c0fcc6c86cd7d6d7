"""FDSM / FEFM blocks: identities, oracles, and structural symmetries."""

import numpy as np
import pytest

from fcenet import autodiff as ad
from fcenet import spectral
from fcenet.blocks import (FilterBank, cfr_forward, dfr_forward,
                           dynamic_filter_weights, fdsm_forward, fdsm_params,
                           fefm_forward, fefm_params, filter_bank)
from fcenet.tensor_core import conv2d
from fcenet.training import grad_check


def _pair(c, h, w, seed=0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    n = ad.Var(rng.standard_normal((c, h, w)).astype(dtype))
    r = ad.Var(rng.standard_normal((c, h, w)).astype(dtype))
    return n, r


# ---------------------------------------------------------------- filter bank

def test_filter_bank_init_near_identity():
    fb = filter_bank(4, 8, 8, np.random.default_rng(0))
    assert fb.gains.data.shape == (4, 8, 8)
    assert fb.k == 4
    assert np.max(np.abs(fb.gains.data - 1.0)) < 0.06  # ones + 0.01 jitter


def test_filter_bank_validation():
    with pytest.raises(ValueError):
        FilterBank(ad.param(np.ones((8, 8))))
    with pytest.raises(ValueError):
        FilterBank(ad.param(np.ones((0, 8, 8))))


def test_dynamic_filter_weights_are_convex_combination():
    rng = np.random.default_rng(1)
    C, k = 3, 4
    params = fdsm_params(C, k, 8, 8, rng, dtype=np.float64)
    agg = ad.Var(rng.standard_normal((C, 8, 8)))
    df = dynamic_filter_weights(agg, params.mlp_r, params.bank_r)
    assert df.data.shape == (C, 8, 8)
    # bank rows span [min, max] per bin; a convex combination stays inside
    lo = params.bank_r.gains.data.min(axis=0) - 1e-12
    hi = params.bank_r.gains.data.max(axis=0) + 1e-12
    assert np.all(df.data >= lo) and np.all(df.data <= hi)


# ----------------------------------------------------------------------- FDSM

def test_fdsm_all_pass_identity():
    """All-ones banks filter nothing: outputs equal raw inputs to 1e-9."""
    rng = np.random.default_rng(2)
    C = 4
    params = fdsm_params(C, 4, 16, 16, rng, dtype=np.float64)
    params.bank_r.gains.data[:] = 1.0
    params.bank_n.gains.data[:] = 1.0
    n, r = _pair(C, 16, 16, seed=3)
    out_r, out_n = fdsm_forward(n, r, params)
    assert np.max(np.abs(out_r.data - r.data)) < 1e-9
    assert np.max(np.abs(out_n.data - n.data)) < 1e-9


def test_fdsm_filters_act_on_raw_features():
    """Shifting the input's mean must pass through an all-pass FDSM: the
    normalized path only steers weights, it never replaces the features."""
    rng = np.random.default_rng(4)
    params = fdsm_params(2, 3, 8, 8, rng, dtype=np.float64)
    params.bank_r.gains.data[:] = 1.0
    params.bank_n.gains.data[:] = 1.0
    n, r = _pair(2, 8, 8, seed=5)
    shifted = ad.Var(r.data + 7.5)
    out_r, _ = fdsm_forward(n, shifted, params)
    assert np.max(np.abs(out_r.data - shifted.data)) < 1e-8


def test_fdsm_shape_mismatch_rejected():
    rng = np.random.default_rng(6)
    params = fdsm_params(2, 3, 8, 8, rng)
    with pytest.raises(ValueError):
        fdsm_forward(ad.Var(np.zeros((2, 8, 8))), ad.Var(np.zeros((2, 4, 4))), params)


def test_fdsm_bank_atom_permutation_bit_exact():
    """Uniform combination weights + dyadic atom values: permuting the bank
    atoms reorders an exact sum, so the output must not change a single bit."""
    rng = np.random.default_rng(7)
    C, k = 2, 4
    params = fdsm_params(C, k, 8, 8, rng, dtype=np.float64)
    for m in (params.mlp_r, params.mlp_n):
        m.w2.data[:] = 0.0
        m.b2.data[:] = 0.0  # logits all equal -> softmax exactly 1/4 per atom
    atoms = rng.integers(4, 12, size=(k, 8, 8)) / 8.0  # multiples of 2^-3
    params.bank_r.gains.data[:] = atoms
    params.bank_n.gains.data[:] = atoms
    n, r = _pair(C, 8, 8, seed=8)
    ref_r, ref_n = fdsm_forward(n, r, params)

    perm = np.asarray([2, 0, 3, 1])
    params.bank_r.gains.data[:] = atoms[perm]
    params.bank_n.gains.data[:] = atoms[perm]
    got_r, got_n = fdsm_forward(n, r, params)
    assert np.array_equal(ref_r.data, got_r.data)
    assert np.array_equal(ref_n.data, got_n.data)


def test_fdsm_gradients():
    rng = np.random.default_rng(9)
    C = 2
    params = fdsm_params(C, 3, 8, 8, rng, dtype=np.float64)
    n, r = _pair(C, 8, 8, seed=10)
    wr = np.random.default_rng(11).standard_normal((C, 8, 8))
    wn = np.random.default_rng(12).standard_normal((C, 8, 8))

    def loss():
        out_r, out_n = fdsm_forward(n, r, params)
        return ad.sum_all(out_r * ad.Var(wr)) + ad.sum_all(out_n * ad.Var(wn))

    report = grad_check(loss, list(params.named_params("fdsm")), samples=8, seed=0)
    assert max(err for _, err in report) < 1e-4, report


# ------------------------------------------------------------------ CFR / DFR

def _cfr_oracle(q, k, alpha):
    """Eq. 4 rebuilt with np.fft and explicit complex algebra."""
    C, H, W = q.shape
    fq = np.fft.fft2(q)
    fk = np.fft.fft2(k)
    scores = np.real(fq.reshape(C, -1) @ np.conj(fk.reshape(C, -1)).T) / (alpha * H * W)
    e = np.exp(scores - scores.max(axis=1, keepdims=True))
    attn = e / e.sum(axis=1, keepdims=True)
    prod = fq * fk
    mixed = (attn @ prod.reshape(C, -1)).reshape(C, H, W)
    return attn, mixed


def test_cfr_matches_complex_oracle():
    rng = np.random.default_rng(13)
    C, H, W = 3, 8, 8
    params = fefm_params(C, rng, dtype=np.float64)
    f_r = ad.Var(rng.standard_normal((C, H, W)))
    f_n = ad.Var(rng.standard_normal((C, H, W)))
    cfr_re, cfr_im, q, v = cfr_forward(f_r, f_n, params)

    k = conv2d(params.k_dw, conv2d(params.k_pw, f_n))
    alpha = float(np.exp(params.log_alpha.data))
    attn, mixed = _cfr_oracle(q.data, k.data, alpha)
    assert np.max(np.abs(cfr_re.data - mixed.real)) < 1e-9
    assert np.max(np.abs(cfr_im.data - mixed.imag)) < 1e-9
    assert np.max(np.abs(attn.sum(axis=1) - 1.0)) < 1e-12


def test_cfr_alpha_initialized_sqrt_c():
    for C in (2, 4, 16):
        params = fefm_params(C, np.random.default_rng(0))
        assert abs(float(np.exp(params.log_alpha.data)) - np.sqrt(C)) < 1e-5
        assert abs(float(params.lam.data) - 0.5) < 1e-12


def test_cfr_single_channel_collapses_to_product():
    """C=1: the 1x1 attention row is exactly [1], so F_CFR is the plain
    spectrum product."""
    rng = np.random.default_rng(14)
    params = fefm_params(1, rng, dtype=np.float64)
    f_r = ad.Var(rng.standard_normal((1, 8, 8)))
    f_n = ad.Var(rng.standard_normal((1, 8, 8)))
    cfr_re, cfr_im, q, _ = cfr_forward(f_r, f_n, params)
    k = conv2d(params.k_dw, conv2d(params.k_pw, f_n))
    prod = np.fft.fft2(q.data) * np.fft.fft2(k.data)
    assert np.max(np.abs(cfr_re.data - prod.real)) < 1e-10
    assert np.max(np.abs(cfr_im.data - prod.imag)) < 1e-10


def test_cfr_shape_mismatch_rejected():
    params = fefm_params(2, np.random.default_rng(15))
    with pytest.raises(ValueError):
        cfr_forward(ad.Var(np.zeros((2, 8, 8))), ad.Var(np.zeros((2, 16, 16))), params)


def test_dfr_lambda_zero_returns_v_exactly():
    rng = np.random.default_rng(16)
    v = ad.Var(rng.standard_normal((2, 8, 8)))
    cr = ad.Var(rng.standard_normal((2, 8, 8)))
    ci = ad.Var(rng.standard_normal((2, 8, 8)))
    out = dfr_forward(v, cr, ci, ad.Var(np.asarray(0.0)))
    assert np.array_equal(out.data, v.data)


def test_dfr_formula():
    rng = np.random.default_rng(17)
    v = rng.standard_normal((2, 8, 8))
    cr = rng.standard_normal((2, 8, 8))
    ci = rng.standard_normal((2, 8, 8))
    lam = 0.37
    out = dfr_forward(ad.Var(v), ad.Var(cr), ad.Var(ci), ad.Var(np.asarray(lam)))
    c_spatial = np.fft.ifft2(cr + 1j * ci).real
    assert np.max(np.abs(out.data - (v - lam * v * c_spatial))) < 1e-10


# ----------------------------------------------------------------------- FEFM

def test_fefm_is_exact_composition():
    """fefm_forward must equal DFR(CFR pieces) + Q ⊙ IDFT(F_CFR) with no
    hidden rescaling or normalization."""
    rng = np.random.default_rng(18)
    C = 3
    params = fefm_params(C, rng, dtype=np.float64)
    f_r = ad.Var(rng.standard_normal((C, 8, 8)))
    f_n = ad.Var(rng.standard_normal((C, 8, 8)))
    out = fefm_forward(f_r, f_n, params)

    cfr_re, cfr_im, q, v = cfr_forward(f_r, f_n, params)
    c_spatial = spectral.re_idft_pair(cfr_re, cfr_im)
    composed = dfr_forward(v, cfr_re, cfr_im, params.lam) + q * c_spatial
    assert np.array_equal(out.data, composed.data)


def test_fefm_zero_projections_zero_output():
    rng = np.random.default_rng(19)
    params = fefm_params(2, rng, dtype=np.float64)
    for pw, dw in ((params.q_pw, params.q_dw), (params.k_pw, params.k_dw),
                   (params.v_pw, params.v_dw)):
        for p in (pw, dw):
            p.weight.data[:] = 0.0
            p.bias.data[:] = 0.0
    f_r = ad.Var(rng.standard_normal((2, 8, 8)))
    f_n = ad.Var(rng.standard_normal((2, 8, 8)))
    out = fefm_forward(f_r, f_n, params)
    assert np.array_equal(out.data, np.zeros_like(out.data))


def test_fefm_gradients_including_scalars():
    rng = np.random.default_rng(20)
    C = 2
    params = fefm_params(C, rng, dtype=np.float64)
    # small feature scale keeps the attention softmax un-saturated, so the
    # temperature gradient stays measurable by central differences
    f_r = ad.Var(0.2 * rng.standard_normal((C, 8, 8)))
    f_n = ad.Var(0.2 * rng.standard_normal((C, 8, 8)))
    proj = np.random.default_rng(21).standard_normal((C, 8, 8))

    def loss():
        return ad.sum_all(fefm_forward(f_r, f_n, params) * ad.Var(proj))

    named = list(params.named_params("fefm"))
    report = grad_check(loss, named, samples=8, seed=0)
    assert max(err for _, err in report) < 1e-4, report
    # the scalar temperature and residual weight must be in the sweep
    names = [n for n, _ in named]
    assert "fefm.log_alpha" in names and "fefm.lam" in names
