"""Kernel backend selection: compiled extension with pure-Python fallback.

The compiled core is preferred when importable; METROFLOW_KERNELS=python or
=native forces a backend (the latter raises if the extension is missing).
"""

from __future__ import annotations

import os

from . import pykernels


def _load_native():
    try:
        from . import _native
        return _native
    except ImportError:
        return None


def get_backend(name: str | None = None):
    """Return the kernel module for a backend name (default: best available)."""
    if name in (None, ""):
        name = os.environ.get("METROFLOW_KERNELS", "auto")
    if name == "python":
        return pykernels
    native = _load_native()
    if name == "native":
        if native is None:
            raise ImportError("metroflow native kernels are not built")
        return native
    if name == "auto":
        return native if native is not None else pykernels
    raise ValueError(f"unknown kernel backend {name!r}")


_backend = get_backend()
BACKEND = _backend.BACKEND

chain_plans = _backend.chain_plans
em_mixture = _backend.em_mixture
em_waits = _backend.em_waits
