"""Kernel selection.

The compiled module is used when it imports; set ``HYPEREXT_PURE_PYTHON=1``
to force the numpy fallback.  ``THREADS`` sets the worker count (default:
available cores); results do not depend on it.
"""
from __future__ import annotations

import os

from . import _fallback

if os.environ.get("HYPEREXT_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

NAME = "compiled" if _compiled is not None else "python"
active = BACKENDS[NAME]


def threads() -> int:
    value = os.environ.get("THREADS")
    if value:
        return max(1, int(value))
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def get(name: str | None = None):
    return active if name is None else BACKENDS[name]
