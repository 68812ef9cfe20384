"""Kernel backend selection.

The stencil kernels exist twice: a compiled Cython core (``_core``) and a
pure-numpy fallback (``_reference``).  The compiled core is preferred when
it imports; set ``CONVEXIFY_KERNELS=numpy`` or ``=cython`` to force one
(forcing ``cython`` raises if the extension is missing).

Everything downstream imports the chosen module as ``kernels.backend`` or
through the re-exported functions below.  ``available_backends()`` returns
the importable ones, which the equivalence tests and the benchmark iterate
over.
"""

import os

from . import _reference


def _load_compiled():
    try:
        from . import _core
        return _core
    except ImportError:
        return None


def _select():
    forced = os.environ.get("CONVEXIFY_KERNELS", "").strip().lower()
    compiled = _load_compiled()
    if forced in ("numpy", "python", "reference"):
        return _reference
    if forced in ("cython", "compiled", "core"):
        if compiled is None:
            raise ImportError(
                "CONVEXIFY_KERNELS requests the compiled backend but "
                "convexify.kernels._core is not built"
            )
        return compiled
    if forced:
        raise ImportError(f"unknown CONVEXIFY_KERNELS value {forced!r}")
    return compiled if compiled is not None else _reference


backend = _select()

BACKEND_NAME = backend.BACKEND_NAME
lap_h = backend.lap_h
lap_h_adjoint = backend.lap_h_adjoint
grad_h = backend.grad_h
grad_h_adjoint = backend.grad_h_adjoint
weighted_sumsq = backend.weighted_sumsq


def available_backends():
    """List of (name, module) pairs for every importable backend."""
    out = [("numpy", _reference)]
    compiled = _load_compiled()
    if compiled is not None:
        out.append(("cython", compiled))
    return out
