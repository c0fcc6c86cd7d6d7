"""Hot numeric kernels, backend-selected (see fcenet.backend).

Both implementations share signatures and math; pick explicitly via the
FCENET_BACKEND environment variable, or import the impl modules directly
(as the cross-agreement tests and the benchmark do).
"""

from fcenet.backend import USE_NUMBA

if USE_NUMBA:
    from fcenet.kernels import numba_impl as _impl
else:
    from fcenet.kernels import numpy_impl as _impl

conv2d_std_fwd = _impl.conv2d_std_fwd
conv2d_std_bwd_input = _impl.conv2d_std_bwd_input
conv2d_std_bwd_params = _impl.conv2d_std_bwd_params
conv2d_dw_fwd = _impl.conv2d_dw_fwd
conv2d_dw_bwd_input = _impl.conv2d_dw_bwd_input
conv2d_dw_bwd_params = _impl.conv2d_dw_bwd_params
fft2_pow2 = _impl.fft2_pow2
gauss_blur_valid = _impl.gauss_blur_valid
