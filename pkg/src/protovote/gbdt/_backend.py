"""Pick the compiled kernels when built, else the NumPy fallback.

Set ``PROTOVOTE_BACKEND=python`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("PROTOVOTE_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"


def get_kernels(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``); default is the
    one chosen at import."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
