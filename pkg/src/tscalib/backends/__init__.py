"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used. ``TSCALIB_BACKEND`` forces the choice: ``auto`` (default),
``cython``, or ``numpy``.
"""

import os

from . import numpy_backend

_ENV_VAR = "TSCALIB_BACKEND"


def get_backend(name):
    """Return a backend module by name ('cython' or 'numpy')."""
    if name == "numpy":
        return numpy_backend
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["numpy"]
    try:
        get_backend("cython")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def _select():
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice not in {"auto", "cython", "numpy"}:
        raise ValueError(f"{_ENV_VAR} must be auto, cython, or numpy (got {choice!r})")
    if choice == "numpy":
        return numpy_backend
    try:
        return get_backend("cython")
    except ImportError:
        if choice == "cython":
            raise
        return numpy_backend


backend = _select()


def backend_name():
    return backend.name
