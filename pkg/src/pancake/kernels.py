"""Backend selection for the time-stepping kernel.

The compiled extension is used when it imported cleanly and the speed is built
from native terms; ``PANCAKE_PURE_PYTHON=1`` forces the numpy path.
"""

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

STATUS = {0: "done", 1: "stop_kappa", 2: "stop_area", 3: "lost_convexity", 4: "nonfinite"}
BACKEND_CODES = {"fd2": 0, "fd4": 1, "spectral": 2}


def compiled_available() -> bool:
    return _compiled is not None


def use_compiled() -> bool:
    return _compiled is not None and os.environ.get("PANCAKE_PURE_PYTHON", "") not in ("1", "true", "yes")


def get_advance(backend: str, native: bool, pure: bool = False):
    """Return ``(advance, name)`` for the requested differentiation backend."""
    if not pure and native and BACKEND_CODES[backend] < 2 and use_compiled():
        return _compiled.advance, "compiled"
    return _kernels_py.advance, "python"
