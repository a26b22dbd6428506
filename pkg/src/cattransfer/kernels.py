"""Kernel dispatch: compiled Cython core when available, numpy otherwise.

Set ``CATTRANSFER_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if not os.environ.get("CATTRANSFER_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback

csr_matmat = _impl.csr_matmat
anti_hermitian_part = _impl.anti_hermitian_part
jump_sandwich = _impl.jump_sandwich
axpy_into = _impl.axpy_into
axpy_inplace = _impl.axpy_inplace

__all__ = [
    "BACKEND",
    "csr_matmat",
    "anti_hermitian_part",
    "jump_sandwich",
    "axpy_into",
    "axpy_inplace",
]
