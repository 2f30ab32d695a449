"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
kernels. ``ADAMRA_BACKEND=numpy`` (or ``cython``) forces a choice at import,
and :func:`use_backend` switches at runtime (the benchmark uses this).
"""

import os
from contextlib import contextmanager

from . import _pykernels

try:
    from . import _kernels as _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"numpy": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends():
    return sorted(_BACKENDS)


def _pick(name):
    if name is None:
        return _BACKENDS.get("cython", _pykernels)
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"kernel backend {name!r} not available (have {available_backends()})"
        ) from None


kernels = _pick(os.environ.get("ADAMRA_BACKEND") or None)


def backend_name():
    return kernels.NAME


def set_backend(name):
    global kernels
    kernels = _pick(name)


@contextmanager
def use_backend(name):
    global kernels
    previous = kernels
    kernels = _pick(name)
    try:
        yield kernels
    finally:
        kernels = previous
