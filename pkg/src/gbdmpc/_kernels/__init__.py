"""Kernel backend selection.

The simplex inner loops exist twice: a compiled Cython extension and a
pure-numpy fallback. The compiled one is preferred when importable;
``GBDMPC_KERNEL=py`` or ``GBDMPC_KERNEL=cy`` forces a choice.

Both backends follow identical pivot rules with lowest-index
tie-breaking, so each is fully deterministic run-to-run. Cross-backend
results agree to solver tolerances (floating-point accumulation order
differs inside the steepest-edge score).
"""

import os

from . import _py_kernel

_forced = os.environ.get("GBDMPC_KERNEL", "").strip().lower()

if _forced == "py":
    _impl = _py_kernel
    KERNEL_BACKEND = "python"
else:
    try:
        from . import _cy_kernel as _impl

        KERNEL_BACKEND = "cython"
    except ImportError:
        if _forced == "cy":
            raise ImportError(
                "GBDMPC_KERNEL=cy was requested but the compiled kernel "
                "is not available; reinstall with a C compiler present"
            )
        _impl = _py_kernel
        KERNEL_BACKEND = "python"

pivot = _impl.pivot
entering_bland = _impl.entering_bland
entering_steepest = _impl.entering_steepest
ratio_test = _impl.ratio_test


def get_backends():
    """Return {name: module} for every importable backend (for benchmarks)."""
    out = {"python": _py_kernel}
    try:
        from . import _cy_kernel

        out["cython"] = _cy_kernel
    except ImportError:
        pass
    return out
