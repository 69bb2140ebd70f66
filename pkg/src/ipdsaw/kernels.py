"""Pick the compiled kernels when the extension is built, else the numpy ones.

Set ``IPDSAW_PURE_PYTHON=1`` to force the fallback (used by the benchmark and
by the cross-backend tests).
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("IPDSAW_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    else:
        _impl = _compiled
        BACKEND = "compiled"
else:
    _compiled = None

geom_conv = _impl.geom_conv
area_layer = _impl.area_layer
skew_shift = _impl.skew_shift


def backends() -> dict:
    """Every importable implementation keyed by name."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        out["compiled"] = _kernels
    return out
