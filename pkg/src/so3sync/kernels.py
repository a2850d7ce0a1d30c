"""Backend selection for the hot loops.

``SO3SYNC_BACKEND=numpy`` forces the pure-numpy implementation; the default
is ``numba`` and falls back to numpy if numba cannot be imported.
"""

import os
import warnings

from . import kernels_numpy

BACKENDS = ("numba", "numpy")
ENV_VAR = "SO3SYNC_BACKEND"
KIND_CODES = {"continuous": 0, "hybrid": 1, "velocity-free": 2}

_cache = {"numpy": kernels_numpy}


def get_backend(name=None):
    """Return the kernel module for ``name`` (env var or ``numba`` if None)."""
    if name is None:
        name = os.environ.get(ENV_VAR, "numba").strip().lower() or "numba"
    if name not in BACKENDS:
        raise ValueError("unknown backend %r; expected one of %s" % (name, BACKENDS))
    if name not in _cache:
        try:
            from . import kernels_numba
        except ImportError as exc:  # pragma: no cover - numba is a hard dependency
            warnings.warn("numba unavailable (%s); using numpy kernels" % exc)
            return kernels_numpy
        _cache[name] = kernels_numba
    return _cache[name]


def backend_name(mod):
    return "numba" if mod.__name__.endswith("kernels_numba") else "numpy"
