"""Kernel backend selection.

The compiled ``_hac_ext`` module is preferred; set ``ERSKIT_PURE_PYTHON=1``
to force the numpy fallback (useful for benchmarking and for debugging the
extension against its reference).
"""

from __future__ import annotations

import os

from . import _hac_py

LINKAGES = {"single": _hac_py.SINGLE, "complete": _hac_py.COMPLETE, "average": _hac_py.AVERAGE}

_ext = None
if not os.environ.get("ERSKIT_PURE_PYTHON"):
    try:
        from . import _hac_ext as _ext
    except ImportError:
        _ext = None

BACKEND = "cython" if _ext is not None else "python"

_IMPLS = {"python": _hac_py}
if _ext is not None:
    _IMPLS["cython"] = _ext


def available_backends() -> list[str]:
    return sorted(_IMPLS)


def get(name: str | None = None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    name = name or BACKEND
    try:
        return _IMPLS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available; have {available_backends()}") from None
