"""Kernel dispatch: compiled extension when available, numpy fallback otherwise.

Set ``MEVSINDY_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MEVSINDY_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

rk4_poly = _impl.rk4_poly
sliding_trapezoid = _impl.sliding_trapezoid
chamfer_directed = _impl.chamfer_directed
rk4_linear_propagate = _impl.rk4_linear_propagate
