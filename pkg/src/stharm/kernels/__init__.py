"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled extension is preferred when present; set ``STHARM_KERNELS`` to
``python`` or ``compiled`` to force a backend (forcing ``compiled`` raises if
the extension is unavailable).  Both backends are bit-identical, so results
do not depend on which one is active.
"""

from __future__ import annotations

import os

_requested = os.environ.get("STHARM_KERNELS", "").strip().lower()

if _requested in ("", "compiled"):
    try:
        from . import _mc as _impl
        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "STHARM_KERNELS=compiled but the compiled kernels are not "
                "available; reinstall with a working C toolchain")
        from . import numpy_backend as _impl
        BACKEND = "python"
elif _requested == "python":
    from . import numpy_backend as _impl
    BACKEND = "python"
else:
    raise ImportError(
        f"STHARM_KERNELS={_requested!r} not understood; use 'compiled' or 'python'")

marching_cubes = _impl.marching_cubes
interp_trilinear = _impl.interp_trilinear

__all__ = ["BACKEND", "marching_cubes", "interp_trilinear"]
