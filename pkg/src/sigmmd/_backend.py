"""Backend selection for the hot kernels.

``SIGMMD_BACKEND=numpy`` forces the pure-numpy path; the default is numba when
it imports cleanly. ``SIGMMD_THREADS`` caps numba's thread pool.
"""

import os

_requested = os.environ.get("SIGMMD_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"SIGMMD_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    if _requested == "numpy":
        raise ImportError
    import numba

    # the system TBB is too old for numba; avoid the warning and fall back
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

JIT_OPTIONS = {"nogil": True, "cache": True, "fastmath": False}
PARALLEL_JIT_OPTIONS = {**JIT_OPTIONS, "parallel": True}


def njit(**options):
    """``numba.njit`` when available, identity decorator otherwise."""

    def wrap(fn):
        if not HAVE_NUMBA:
            return fn
        return numba.njit(**{**JIT_OPTIONS, **options})(fn)

    return wrap


if HAVE_NUMBA:
    prange = numba.prange
else:
    prange = range


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


def set_threads(n: int | None) -> None:
    """Set the worker-thread count (no-op on the numpy backend)."""
    if n is None:
        env = os.environ.get("SIGMMD_THREADS")
        if not env:
            return
        n = int(env)
    if n < 1:
        raise ValueError("threads must be >= 1")
    if HAVE_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


set_threads(None)
