"""Kernel selection.

The compiled extension is used when it imports; set
``DELAYBANDITS_PURE_PYTHON=1`` to force the pure-Python kernels.
"""
from __future__ import annotations

import importlib
import os
from types import ModuleType


def load_backend(name: str) -> ModuleType:
    """Return the kernel module called ``"cython"`` or ``"python"``."""
    if name == "cython":
        return importlib.import_module("delaybandits._kernels")
    if name == "python":
        return importlib.import_module("delaybandits._fallback")
    raise ValueError(f"unknown backend {name!r}")


def _select() -> tuple[str, ModuleType]:
    if os.environ.get("DELAYBANDITS_PURE_PYTHON", "") not in ("", "0"):
        return "python", load_backend("python")
    try:
        return "cython", load_backend("cython")
    except ImportError:
        return "python", load_backend("python")


BACKEND, kernels = _select()
