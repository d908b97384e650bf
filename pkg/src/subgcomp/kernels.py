"""Kernel dispatch: the compiled extension when built, else the numpy fallback.

Set ``SUBGCOMP_PURE=1`` to force the fallback.
"""
import os

from . import _kernels_py

try:
    if os.environ.get("SUBGCOMP_PURE"):
        raise ImportError("pure backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

BACKEND = "cython" if _compiled is not None else "python"
_impl = BACKENDS[BACKEND]

tensor_values = _impl.tensor_values
tensor_sup = _impl.tensor_sup
min_cover = _impl.min_cover


def get(name):
    return BACKENDS[name]
