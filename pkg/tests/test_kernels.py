"""Backend kernel tests: brute-force oracles + numpy/numba cross-agreement.

The two implementations must agree bit-for-bit in structure (same signatures,
same math); summation order may differ, so cross-checks use a tight float
tolerance rather than equality.
"""

import numpy as np
import pytest

from fcenet.backend import HAS_NUMBA
from fcenet.kernels import numpy_impl

if HAS_NUMBA:
    from fcenet.kernels import numba_impl

IMPLS = [numpy_impl] + ([numba_impl] if HAS_NUMBA else [])


def _conv_std_ref(x, w, b, stride):
    """O(everything) reference: explicit loops, zero padding (k-1)//2."""
    cin, H, W = x.shape
    cout, _, k, _ = w.shape
    p = (k - 1) // 2
    Ho, Wo = H // stride, W // stride
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    out = np.zeros((cout, Ho, Wo), dtype=np.float64)
    for oc in range(cout):
        for oy in range(Ho):
            for ox in range(Wo):
                acc = b[oc]
                for ic in range(cin):
                    for ky in range(k):
                        for kx in range(k):
                            acc += w[oc, ic, ky, kx] * xp[ic, oy * stride + ky, ox * stride + kx]
                out[oc, oy, ox] = acc
    return out


def _conv_dw_ref(x, w, b, stride):
    c = x.shape[0]
    w_std = np.zeros((c, c) + w.shape[2:], dtype=w.dtype)
    for i in range(c):
        w_std[i, i] = w[i, 0]
    return _conv_std_ref(x, w_std, b, stride)


@pytest.mark.parametrize("impl", IMPLS, ids=lambda m: m.__name__.split(".")[-1])
@pytest.mark.parametrize("cin,cout,k,stride", [(3, 5, 3, 1), (4, 4, 3, 2), (2, 6, 1, 1)])
def test_conv_std_fwd_matches_bruteforce(impl, cin, cout, k, stride):
    rng = np.random.default_rng(11)
    x = rng.standard_normal((cin, 8, 8))
    w = rng.standard_normal((cout, cin, k, k))
    b = rng.standard_normal(cout)
    got = impl.conv2d_std_fwd(x, w, b, stride)
    ref = _conv_std_ref(x, w, b, stride)
    assert got.shape == ref.shape
    assert np.max(np.abs(got - ref)) < 1e-12


@pytest.mark.parametrize("impl", IMPLS, ids=lambda m: m.__name__.split(".")[-1])
@pytest.mark.parametrize("stride", [1, 2])
def test_conv_dw_fwd_matches_bruteforce(impl, stride):
    rng = np.random.default_rng(12)
    x = rng.standard_normal((5, 8, 8))
    w = rng.standard_normal((5, 1, 3, 3))
    b = rng.standard_normal(5)
    got = impl.conv2d_dw_fwd(x, w, b, stride)
    ref = _conv_dw_ref(x, w, b, stride)
    assert np.max(np.abs(got - ref)) < 1e-12


def _num_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        x[i] += eps
        hi = f()
        x[i] -= 2 * eps
        lo = f()
        x[i] += eps
        g[i] = (hi - lo) / (2 * eps)
    return g


@pytest.mark.parametrize("impl", IMPLS, ids=lambda m: m.__name__.split(".")[-1])
@pytest.mark.parametrize("stride", [1, 2])
def test_conv_std_backward_is_gradient(impl, stride):
    # adjoint vs central differences on a random scalar projection
    rng = np.random.default_rng(13)
    x = rng.standard_normal((2, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    proj = rng.standard_normal((3, 6 // stride, 6 // stride))

    def loss():
        return float(np.sum(impl.conv2d_std_fwd(x, w, b, stride) * proj))

    gx = impl.conv2d_std_bwd_input(proj, w, stride, 6, 6)
    gw, gb = impl.conv2d_std_bwd_params(proj, x, 3, stride)
    assert np.max(np.abs(gx - _num_grad(loss, x))) < 1e-7
    assert np.max(np.abs(gw - _num_grad(loss, w))) < 1e-7
    assert np.max(np.abs(gb - _num_grad(loss, b))) < 1e-7


@pytest.mark.parametrize("impl", IMPLS, ids=lambda m: m.__name__.split(".")[-1])
def test_conv_dw_backward_is_gradient(impl):
    rng = np.random.default_rng(14)
    x = rng.standard_normal((4, 6, 6))
    w = rng.standard_normal((4, 1, 3, 3))
    b = rng.standard_normal(4)
    proj = rng.standard_normal((4, 6, 6))

    def loss():
        return float(np.sum(impl.conv2d_dw_fwd(x, w, b, 1) * proj))

    gx = impl.conv2d_dw_bwd_input(proj, w, 1, 6, 6)
    gw, gb = impl.conv2d_dw_bwd_params(proj, x, 3, 1)
    assert np.max(np.abs(gx - _num_grad(loss, x))) < 1e-7
    assert np.max(np.abs(gw - _num_grad(loss, w))) < 1e-7
    assert np.max(np.abs(gb - _num_grad(loss, b))) < 1e-7


@pytest.mark.parametrize("impl", IMPLS, ids=lambda m: m.__name__.split(".")[-1])
@pytest.mark.parametrize("shape", [(8, 8), (3, 16, 4), (2, 2, 4, 32)])
def test_fft2_pow2_matches_numpy(impl, shape):
    rng = np.random.default_rng(15)
    x = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)).astype(np.complex128)
    fwd = impl.fft2_pow2(x, invert=False)
    assert np.max(np.abs(fwd - np.fft.fft2(x))) < 1e-9
    # inverse is unnormalized by convention; scale by 1/(H*W)
    n = shape[-1] * shape[-2]
    inv = impl.fft2_pow2(x, invert=True) / n
    assert np.max(np.abs(inv - np.fft.ifft2(x))) < 1e-9


@pytest.mark.parametrize("impl", IMPLS, ids=lambda m: m.__name__.split(".")[-1])
def test_fft2_roundtrip(impl):
    rng = np.random.default_rng(16)
    x = rng.standard_normal((3, 16, 16)).astype(np.complex128)
    back = impl.fft2_pow2(impl.fft2_pow2(x, invert=False), invert=True) / (16 * 16)
    assert np.max(np.abs(back - x)) < 1e-12


@pytest.mark.parametrize("impl", IMPLS, ids=lambda m: m.__name__.split(".")[-1])
def test_gauss_blur_valid_matches_bruteforce(impl):
    rng = np.random.default_rng(17)
    x = rng.standard_normal((2, 12, 12))
    w = rng.standard_normal(5)
    got = impl.gauss_blur_valid(x, w)
    C, H, W = x.shape
    win = w.shape[0]
    ref = np.zeros((C, H - win + 1, W - win + 1))
    for c in range(C):
        for y in range(ref.shape[1]):
            for xx in range(ref.shape[2]):
                patch = x[c, y:y + win, xx:xx + win]
                ref[c, y, xx] = float(w @ patch @ w)
    assert got.shape == ref.shape
    assert np.max(np.abs(got - ref)) < 1e-10


@pytest.mark.skipif(not HAS_NUMBA, reason="numba backend unavailable")
def test_backends_cross_agree():
    """Same inputs through both backends: results agree to float64 noise."""
    rng = np.random.default_rng(18)
    x = rng.standard_normal((4, 16, 16))
    w = rng.standard_normal((6, 4, 3, 3))
    b = rng.standard_normal(6)
    a = numpy_impl.conv2d_std_fwd(x, w, b, 1)
    c = numba_impl.conv2d_std_fwd(x, w, b, 1)
    assert np.max(np.abs(a - c)) < 1e-12

    z = (rng.standard_normal((2, 32, 32)) + 1j * rng.standard_normal((2, 32, 32)))
    fa = numpy_impl.fft2_pow2(z, invert=False)
    fc = numba_impl.fft2_pow2(z, invert=False)
    assert np.max(np.abs(fa - fc)) < 1e-10


def test_backend_env_selection():
    from fcenet import backend
    assert backend.backend_name() in ("numpy", "numba")
