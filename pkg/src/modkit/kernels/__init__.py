"""Backend selection for the clustering hot loops.

Two interchangeable implementations exist:

* :mod:`modkit.kernels.numba_impl` -- ``@njit``-compiled loops;
* :mod:`modkit.kernels.numpy_impl` -- pure-numpy reference.

The environment variable ``MODKIT_KERNELS`` picks one at import time:

* ``auto`` (default) -- numba when importable, else numpy;
* ``numba`` -- require numba, raise if unavailable;
* ``numpy`` -- force the pure-numpy path.

``benchmarks/kernel_bench.py`` compares the two backends directly via
:func:`get_backend`, which bypasses the environment flag.
"""

from __future__ import annotations

import os

from . import numpy_impl

_FLAG = os.environ.get("MODKIT_KERNELS", "auto").strip().lower()

try:
    from . import numba_impl
    NUMBA_AVAILABLE = True
except ImportError:
    numba_impl = None
    NUMBA_AVAILABLE = False

if _FLAG == "numpy":
    _impl = numpy_impl
elif _FLAG == "numba":
    if not NUMBA_AVAILABLE:
        raise ImportError(
            "MODKIT_KERNELS=numba but numba is not importable; "
            "install numba or set MODKIT_KERNELS=numpy")
    _impl = numba_impl
elif _FLAG == "auto":
    _impl = numba_impl if NUMBA_AVAILABLE else numpy_impl
else:
    raise ImportError(
        f"MODKIT_KERNELS={_FLAG!r} not understood; "
        "use 'auto', 'numba', or 'numpy'")

BACKEND = "numba" if _impl is numba_impl else "numpy"


def get_backend(name):
    """Return a kernel module by name ('numba' or 'numpy'), ignoring the flag."""
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        if not NUMBA_AVAILABLE:
            raise ImportError("numba backend requested but numba is not importable")
        return numba_impl
    raise ValueError(f"unknown kernel backend {name!r}")


entropy = _impl.entropy
softmax = _impl.softmax
softmax_entropy = _impl.softmax_entropy
solve_entropy_temperature = _impl.solve_entropy_temperature
partition_q = _impl.partition_q
mc_refine = _impl.mc_refine

TEMP_OK = numpy_impl.TEMP_OK
TEMP_DEGENERATE = numpy_impl.TEMP_DEGENERATE
TEMP_BELOW_FLOOR = numpy_impl.TEMP_BELOW_FLOOR
TEMP_ABOVE_CEILING = numpy_impl.TEMP_ABOVE_CEILING
TEMP_NO_CONVERGENCE = numpy_impl.TEMP_NO_CONVERGENCE

__all__ = [
    "BACKEND", "NUMBA_AVAILABLE", "get_backend",
    "entropy", "softmax", "softmax_entropy", "solve_entropy_temperature",
    "partition_q", "mc_refine",
    "TEMP_OK", "TEMP_DEGENERATE", "TEMP_BELOW_FLOOR", "TEMP_ABOVE_CEILING",
    "TEMP_NO_CONVERGENCE",
]
