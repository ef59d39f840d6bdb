"""Runtime selection between the numba and pure-numpy kernel backends.

The choice is made once at import from the environment:

* ``FRACLAP_BACKEND=numba``  require numba, fail loudly if missing;
* ``FRACLAP_BACKEND=numpy``  force the vectorized numpy/scipy fallback;
* unset or ``auto``          use numba when importable, numpy otherwise.

``FRACLAP_THREADS`` caps the numba thread pool (and is honored by the numpy
path only insofar as BLAS obeys its own env vars).
"""

import os

# prefer omp/workqueue: numba's TBB probe warns on every run when the
# system TBB is older than it wants, and we never need TBB specifically
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY",
                      "omp workqueue tbb")

_requested = os.environ.get("FRACLAP_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"FRACLAP_BACKEND must be auto|numba|numpy, got {_requested!r}")


def _try_numba():
    try:
        import numba
    except ImportError:
        if _requested == "numba":
            raise
        return False
    threads = os.environ.get("FRACLAP_THREADS")
    if threads:
        numba.set_num_threads(max(1, int(threads)))
    return True


USING_NUMBA = _requested != "numpy" and _try_numba()

if USING_NUMBA:
    from . import _accel_nb as ops
else:
    from . import _accel_np as ops


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"


__all__ = ["ops", "USING_NUMBA", "backend_name"]
