"""Kernel backend selection.

The compiled ``_core`` extension is used when importable; otherwise the numpy
fallback in ``_pykernels``. ``IADP_BACKEND=python`` forces the fallback.
"""
import os

from . import _pykernels

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

AVAILABLE = {"python": _pykernels}
if _core is not None:
    AVAILABLE["cython"] = _core


def _initial():
    wanted = os.environ.get("IADP_BACKEND", "auto").lower()
    if wanted == "auto":
        return _core if _core is not None else _pykernels
    if wanted not in AVAILABLE:
        raise ImportError(f"IADP_BACKEND={wanted!r} is not available (have {sorted(AVAILABLE)})")
    return AVAILABLE[wanted]


kernels = _initial()


def name():
    return kernels.NAME


def set_backend(which):
    """Switch the active kernel module; returns the previous backend name."""
    global kernels
    if which not in AVAILABLE:
        raise ValueError(f"backend {which!r} not available (have {sorted(AVAILABLE)})")
    prev = kernels.NAME
    kernels = AVAILABLE[which]
    return prev
