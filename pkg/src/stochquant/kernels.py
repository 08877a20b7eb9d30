"""Backend selection for the hot kernels.

The compiled Cython module is used when it was built; otherwise the numpy
implementations are used.  Set ``STOCHQUANT_KERNELS=python`` to force the
fallback (``=cython`` makes a missing extension an import error).
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py


def _select() -> ModuleType:
    choice = os.environ.get("STOCHQUANT_KERNELS", "auto").lower()
    if choice == "python":
        return _kernels_py
    try:
        from . import _ckernels
    except ImportError:
        if choice == "cython":
            raise
        return _kernels_py
    return _ckernels


def available_backends() -> dict[str, ModuleType]:
    out = {"python": _kernels_py}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


backend = _select()
BACKEND: str = backend.BACKEND

uniforms = backend.uniforms
advance_1d = backend.advance_1d
advance_2d = backend.advance_2d
tridiag_factor = backend.tridiag_factor
tridiag_matvec = backend.tridiag_matvec
cn_tridiag_step = backend.cn_tridiag_step
