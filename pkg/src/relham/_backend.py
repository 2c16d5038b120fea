"""Kernel backend selection.

The compiled Cython extension is used when it imports; otherwise (or when
``RELHAM_BACKEND=python``) the numpy fallback is used.
"""
import os

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled


def _initial():
    want = os.environ.get("RELHAM_BACKEND", "").strip().lower()
    if want:
        if want not in BACKENDS:
            raise ImportError(f"RELHAM_BACKEND={want!r} is not available; have {sorted(BACKENDS)}")
        return want
    return "compiled" if _compiled is not None else "python"


_active = _initial()
kernels = BACKENDS[_active]


def active():
    return _active


def use(name):
    """Switch the kernel backend for the whole process; returns the previous name."""
    global _active, kernels
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {sorted(BACKENDS)}")
    prev = _active
    _active = name
    kernels = BACKENDS[name]
    return prev
