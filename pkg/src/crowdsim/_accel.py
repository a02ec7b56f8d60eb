"""Optional numba acceleration for the hot simulation kernels.

Kernels are written as plain loops over numpy arrays so they run unchanged
both interpreted and under ``@njit``. Compilation is on by default whenever
numba imports; set ``CROWDSIM_NUMBA=0`` to force the interpreted fallback
(useful for debugging and for benchmarking the speedup).

Compiled kernels keep a ``py_func`` attribute pointing at the original
Python function, which the tests use to cross-check both backends.
"""

import os


def _numba_wanted() -> bool:
    flag = os.environ.get("CROWDSIM_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


NUMBA_AVAILABLE = False
if _numba_wanted():
    try:
        import numba  # noqa: F401

        NUMBA_AVAILABLE = True
    except ImportError:
        NUMBA_AVAILABLE = False

NUMBA_ENABLED = NUMBA_AVAILABLE


if NUMBA_ENABLED:
    import numba

    def maybe_njit(func=None, **kwargs):
        kwargs.setdefault("cache", True)
        if func is None:
            return lambda f: numba.njit(f, **kwargs)
        return numba.njit(func, **kwargs)

else:

    def maybe_njit(func=None, **kwargs):
        if func is None:
            return lambda f: f
        return func
