"""Element kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports cleanly. Set
``ADFCONTACT_BACKEND=python`` to force the fallback.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

__all__ = ["BACKEND", "available_backends", "get_backend",
           "neo_hookean", "screened_poisson", "barycentric", "contact"]


def available_backends():
    names = ["python"]
    if _ckernels is not None:
        names.insert(0, "cython")
    return names


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        name = BACKEND
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels
    if name == "python":
        return _pykernels
    raise ValueError(f"unknown kernel backend {name!r}")


_requested = os.environ.get("ADFCONTACT_BACKEND", "").strip().lower()
if _requested == "python" or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

_active = get_backend(BACKEND)
neo_hookean = _active.neo_hookean
screened_poisson = _active.screened_poisson
barycentric = _active.barycentric
contact = _active.contact
