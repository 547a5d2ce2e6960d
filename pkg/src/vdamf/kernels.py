"""Backend selection for the match kernel.

Each backend module provides ``match_kernel`` and ``energy_kernel``; the
compiled one also has ``fit_kernel`` (the whole optimizer loop) and
``min_area_axis_kernel``, which ``optimize`` uses when present.
The compiled extension is used when it imports; otherwise the numpy
implementation.  ``VDAMF_BACKEND=python`` forces the fallback.
"""

import os
from contextlib import contextmanager

from . import _kernel_py

try:
    from . import _kernel as _kernel_c
except ImportError:  # extension not built
    _kernel_c = None

BACKENDS = {"python": _kernel_py}
if _kernel_c is not None:
    BACKENDS["compiled"] = _kernel_c

if os.environ.get("VDAMF_BACKEND", "").lower() == "python" or _kernel_c is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"

match_kernel = BACKENDS[BACKEND].match_kernel
energy_kernel = BACKENDS[BACKEND].energy_kernel
fit_kernel = getattr(BACKENDS[BACKEND], "fit_kernel", None)
min_area_axis_kernel = getattr(BACKENDS[BACKEND], "min_area_axis_kernel", None)


def get_kernel(name=None):
    """Kernel function by backend name (``None`` for the active one)."""
    if name is None:
        return match_kernel
    try:
        return BACKENDS[name].match_kernel
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def set_backend(name: str) -> str:
    """Switch the active backend process-wide; returns the previous one."""
    global BACKEND, match_kernel, energy_kernel, fit_kernel, min_area_axis_kernel
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    prev = BACKEND
    BACKEND = name
    match_kernel = BACKENDS[name].match_kernel
    energy_kernel = BACKENDS[name].energy_kernel
    fit_kernel = getattr(BACKENDS[name], "fit_kernel", None)
    min_area_axis_kernel = getattr(BACKENDS[name], "min_area_axis_kernel", None)
    return prev


@contextmanager
def use_backend(name: str):
    prev = set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)
