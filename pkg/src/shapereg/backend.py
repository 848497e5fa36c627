"""Compute-backend selection for the hot numeric kernels.

Two interchangeable implementations exist for the inner loops (convolution
forward/backward and bilinear warping):

* ``numba``  - JIT-compiled direct loops (default when numba is importable)
* ``numpy``  - pure-numpy fallback (im2col + BLAS for convolutions)

The active backend is chosen, in order of precedence, by
:func:`set_backend`, the ``SHAPEREG_BACKEND`` environment variable, and
availability of numba. Both paths produce the same results up to
floating-point accumulation order; ``shapereg benchmark --compare-backends``
measures them against each other.
"""
from __future__ import annotations

import importlib.util
import os

ENV_VAR = "SHAPEREG_BACKEND"

_VALID = ("numba", "numpy")
_override: str | None = None


def numba_available() -> bool:
    return importlib.util.find_spec("numba") is not None


def available_backends() -> tuple[str, ...]:
    if numba_available():
        return ("numba", "numpy")
    return ("numpy",)


def active_backend() -> str:
    """Name of the backend kernels will dispatch to."""
    if _override is not None:
        return _override
    env = os.environ.get(ENV_VAR, "").strip().lower()
    if env:
        if env not in _VALID:
            raise ValueError(
                f"{ENV_VAR}={env!r} is not a valid backend; choose from {_VALID}"
            )
        if env == "numba" and not numba_available():
            raise ValueError(f"{ENV_VAR}=numba requested but numba is not installed")
        return env
    return "numba" if numba_available() else "numpy"


def set_backend(name: str | None) -> None:
    """Process-wide backend override; ``None`` restores env/default choice."""
    global _override
    if name is not None:
        if name not in _VALID:
            raise ValueError(f"unknown backend {name!r}; choose from {_VALID}")
        if name == "numba" and not numba_available():
            raise ValueError("numba backend requested but numba is not installed")
    _override = name
