"""Select the kernel implementation at import time.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy ``_fallback`` module.  ``RICCIOPT_BACKEND=python`` forces the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
kernels = _fallback

if os.environ.get("RICCIOPT_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "compiled"


def get(name):
    """Kernel module by name: ``"compiled"``, ``"python"`` or ``"auto"``."""
    if name == "auto":
        return kernels
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def available():
    """Backends that can be loaded in this environment."""
    out = ["python"]
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return out
    return ["compiled"] + out
