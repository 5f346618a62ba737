"""Walk-kernel backend selection.

The compiled extension is preferred when importable; the NumPy fallback is
arithmetic-equivalent.  ``L0FLOW_KERNEL=python`` or ``=compiled`` forces a
backend (the latter errors out if the extension is missing).
"""

from __future__ import annotations

import os

from .geometry import ConfigError
from . import _kernels_py

try:
    from . import _kernels_cy
except ImportError:
    _kernels_cy = None

__all__ = ["available_backends", "default_backend", "path_function"]

_MODULES = {"python": _kernels_py, "compiled": _kernels_cy}


def available_backends() -> list[str]:
    out = []
    if _kernels_cy is not None:
        out.append("compiled")
    out.append("python")
    return out


def default_backend() -> str:
    forced = os.environ.get("L0FLOW_KERNEL")
    if forced:
        if forced not in _MODULES:
            raise ConfigError(f"unknown kernel backend {forced!r}")
        if _MODULES[forced] is None:
            raise ConfigError("compiled kernels requested but not built")
        return forced
    return available_backends()[0]


def path_function(model_id: str, backend: str | None = None):
    """The per-trajectory walk function for a model, from the chosen backend."""
    backend = backend or default_backend()
    mod = _MODULES.get(backend)
    if mod is None:
        raise ConfigError(
            "compiled kernels requested but not built"
            if backend == "compiled"
            else f"unknown kernel backend {backend!r}"
        )
    try:
        return getattr(mod, f"{model_id}_path")
    except AttributeError:
        raise ConfigError(f"no walk kernel for model {model_id!r}") from None
