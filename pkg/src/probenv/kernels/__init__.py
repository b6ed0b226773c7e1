"""Hot numerical kernels with a compiled core and a numpy fallback.

The compiled extension ``_ckernels`` is used when it imports cleanly;
otherwise, or when ``PROBENV_PURE_PYTHON=1`` is set, the numpy versions in
``_pykernels`` are used.  :data:`BACKEND` names the active one.
"""

import os

from . import _pykernels

_FORCE_PY = os.environ.get("PROBENV_PURE_PYTHON", "").lower() in ("1", "true", "yes")

try:
    if _FORCE_PY:
        raise ImportError("pure python requested")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

kde_points = _impl.kde_points
kde_grid_truncated = _impl.kde_grid_truncated
multilinear = _impl.multilinear


def available_backends():
    """Mapping of backend name to module for every importable backend."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
