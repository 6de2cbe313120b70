"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``EPSFBM_PURE_PYTHON=1`` is set, the numpy fallback is
used.  ``BACKEND`` names the active choice.
"""
from __future__ import annotations

import os

from . import _kernels_py as py_backend

compiled_backend = None
if os.environ.get("EPSFBM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else py_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

condition_known = _active.condition_known
condition_new = _active.condition_new
holder_grid_norm = _active.holder_grid_norm


def get_backend(name: str):
    """Return the kernel module called ``name`` ('compiled' or 'python')."""
    if name == "python":
        return py_backend
    if name == "compiled":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not available")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")
