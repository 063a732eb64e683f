"""Numerical kernel backend selection.

Two interchangeable implementations of the hot loops live here:

* ``_core``     Cython extension, built at install time when a compiler
                is available.
* ``_fallback`` pure numpy reference implementation.

The compiled backend is picked when importable; set CEVHEDGE_BACKEND to
``c`` or ``python`` to force one (forcing ``c`` without the extension
raises, which is what CI uses to catch silent fallback).

Each backend is bitwise deterministic for fixed inputs. Across backends
results agree to float tolerance only, since compilers round the
transcendental calls differently.
"""

import os

_choice = os.environ.get("CEVHEDGE_BACKEND", "auto").lower()

if _choice not in ("auto", "c", "python"):
    raise ImportError(f"CEVHEDGE_BACKEND must be auto|c|python, got {_choice!r}")

if _choice == "python":
    from . import _fallback as _impl
    _name = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
        _name = "c"
    except ImportError:
        if _choice == "c":
            raise
        from . import _fallback as _impl
        _name = "python"

ncx2_batch = _impl.ncx2_batch
parabolic_march = _impl.parabolic_march
hedge_rollout = _impl.hedge_rollout
euler_paths = _impl.euler_paths
euler_terminal = _impl.euler_terminal


def backend_name() -> str:
    """Name of the active kernel backend, "c" or "python"."""
    return _name
