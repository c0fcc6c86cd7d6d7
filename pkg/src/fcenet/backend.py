"""Kernel backend selection.

The hot inner loops (convolution, radix-2 FFT, windowed filtering) exist in
two interchangeable implementations: numba ``@njit`` kernels and pure-numpy
vectorized fallbacks.  The environment variable ``FCENET_BACKEND`` picks one:

* ``auto`` (default): numba if importable, else numpy
* ``numba``: force numba, raise if unavailable
* ``numpy``: force the pure-numpy path

``FCENET_GRAD_FAULT=1`` enables a deliberate gradient corruption used by the
gradient-check harness to prove it detects broken backward passes.
"""

import os

try:
    import numba  # noqa: F401
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

_choice = os.environ.get("FCENET_BACKEND", "auto").lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(f"FCENET_BACKEND must be auto|numba|numpy, got {_choice!r}")
if _choice == "numba" and not HAS_NUMBA:
    raise ImportError("FCENET_BACKEND=numba but numba is not installed")

USE_NUMBA = HAS_NUMBA if _choice == "auto" else (_choice == "numba")


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def grad_fault_enabled() -> bool:
    """True when the fault-injection flag is set (read per call, for tests)."""
    return os.environ.get("FCENET_GRAD_FAULT", "") == "1"
