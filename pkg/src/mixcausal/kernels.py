"""Backend selection for the solver kernels.

The compiled extension is used when it imports cleanly; otherwise, or when
``MIXCAUSAL_PURE_PYTHON`` is set to a non-empty value other than ``0``, the
numpy fallback is used.  Both expose identical functions.
"""

import os

from . import _kernels_py

_forced_pure = os.environ.get("MIXCAUSAL_PURE_PYTHON", "") not in ("", "0")

if _forced_pure:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

logistic_terms = _impl.logistic_terms
mixed_logistic_terms = _impl.mixed_logistic_terms
mipw_objective_terms = _impl.mipw_objective_terms
eb_dual_terms = _impl.eb_dual_terms
eb_dual_solve = _impl.eb_dual_solve


def get_backend(name):
    """Return the kernel module for ``name`` ("python" or "cython")."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels  # type: ignore[attr-defined]

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
