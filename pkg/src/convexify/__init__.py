"""Convexification solver for the 3D Helmholtz coefficient inverse problem.

From single-direction, multi-frequency backscatter traces on one face of a
box, the pipeline reconstructs the spatial dielectric coefficient by
minimizing Carleman-weighted cost functionals: a weighted quadratic fit for
the high-wavenumber tail, then a globally convex weighted least-squares
iteration for the wavenumber derivative of the log-field.
"""

from .grid import GridSpec, SemidiscreteField

__all__ = ["GridSpec", "SemidiscreteField"]
__version__ = "0.1.0"
