"""Carleman weight and the numerical check of the weighted lower bound.

The weight is phi_lambda(z) = e^{-2 lambda z}, largest on the data face
Gamma (z = -xi) and equal to e^{-2 lambda d} at the top, so e^{2 lambda d}
is the factor that normalizes its minimum over the slab to 1.

The estimate under test bounds the weighted quadratic form of the
semidiscrete Laplacian from below by the weighted H^2-type seminorms with
factors (1, lambda, lambda^3).  Its constants are existential, so the
verifier reports, per lambda, the worst ratio

    R(u, lambda) = B_h(u, lambda) /
        (D_2(u, lambda) + lambda D_1(u, lambda) + lambda^3 D_0(u, lambda))

over a sample of admissible fields; the testable content is that the
worst ratio stays positive and does not collapse as lambda grows.
"""

import io
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError
from .grid import SemidiscreteField, check_h02_boundary, smooth3_per_axis


def weight(z, lam):
    """phi_lambda(z) = e^{-2 lambda z}; positive, strictly decreasing in z."""
    if lam <= 0:
        raise DomainError(f"weight exponent must be positive, got {lam}")
    return np.exp(-2.0 * lam * np.asarray(z, dtype=float))


@dataclass(frozen=True)
class CarlemanWeight:
    """Weight exponent with its node values cached for a given grid."""

    lam: float
    node_values: np.ndarray
    balance: float

    @classmethod
    def for_grid(cls, grid, lam):
        vals = weight(grid.z_nodes, lam)
        return cls(lam=lam, node_values=vals, balance=float(np.exp(2.0 * lam * grid.d)))


def carleman_quadratic(f, lam):
    """B_h(u, lambda): weighted quadratic form of the interior Laplacian.

    Requires u in H_0^{2,h}; trapezoid z-quadrature with the interior-only
    Laplacian convention (endpoint planes contribute zero).
    """
    grid = f.grid
    check_h02_boundary(f.values, grid)
    lap = kernels.lap_h(f.values, 1.0 / grid.h**2, 1.0 / grid.dz**2)
    wz = grid.h**2 * grid.z_trapz_weights() * weight(grid.z_nodes, lam)
    return kernels.weighted_sumsq(lap, wz)


def _denominator(values, grid, lam):
    """D_2 + lambda D_1 + lambda^3 D_0 with the interior-only convention.

    The z-derivatives are centered differences on interior z-nodes with
    zero endpoint planes, matching the quadrature support of the
    interior-only Laplacian in B_h; mixing conventions would make the
    ratio collapse artificially as the weight localizes on Gamma.
    """
    phi = weight(grid.z_nodes, lam)
    wz = grid.h**2 * grid.z_trapz_weights() * phi
    d1v = np.zeros_like(values)
    d1v[..., 1:-1] = (values[..., 2:] - values[..., :-2]) / (2.0 * grid.dz)
    d2v = np.zeros_like(values)
    d2v[..., 1:-1] = (
        values[..., 2:] - 2.0 * values[..., 1:-1] + values[..., :-2]
    ) / grid.dz**2
    vin = np.zeros_like(values)
    vin[..., 1:-1] = values[..., 1:-1]
    d0 = kernels.weighted_sumsq(np.ascontiguousarray(vin), wz)
    d1 = kernels.weighted_sumsq(np.ascontiguousarray(d1v), wz)
    d2 = kernels.weighted_sumsq(np.ascontiguousarray(d2v), wz)
    return d2 + lam * d1 + lam**3 * d0


def estimate_ratio(f, lam):
    """R(u, lambda) for a single admissible field."""
    grid = f.grid
    b = carleman_quadratic(f, lam)
    den = _denominator(f.values, grid, lam)
    return b / den


def random_admissible_field(grid, rng):
    """Random element of H_0^{2,h}: smoothed interior noise, zero boundary.

    Interior coefficients are complex standard normal, smoothed by two
    passes of a 3-point average per axis (keeps the quadratic forms
    quadrature-accurate); then the boundary nodes and the two z-layers on
    Gamma are zeroed, enforcing u = u_z = 0 there to first order.
    """
    vals = rng.standard_normal(grid.shape3) + 1j * rng.standard_normal(grid.shape3)
    vals = smooth3_per_axis(vals, passes=2)
    vals[0, :, :] = vals[-1, :, :] = 0.0
    vals[:, 0, :] = vals[:, -1, :] = 0.0
    vals[:, :, -1] = 0.0
    vals[:, :, 0] = vals[:, :, 1] = 0.0
    return SemidiscreteField(grid, vals)


@dataclass
class CarlemanReport:
    """Per-lambda worst ratios over the sampled fields.

    lambda0_estimate is the smallest tested lambda from which the worst
    ratio stops decreasing; lambda3h2 records lambda^3 h^2 so the regime
    of the underlying proof constraint stays visible.
    """

    lambdas: np.ndarray
    min_ratio: np.ndarray
    lambda3h2: np.ndarray
    lambda0_estimate: float

    def to_csv(self):
        buf = io.StringIO()
        buf.write("lambda,min_ratio,lambda3h2\n")
        for lam, r, l3 in zip(self.lambdas, self.min_ratio, self.lambda3h2):
            buf.write(f"{lam:.17e},{r:.17e},{l3:.17e}\n")
        return buf.getvalue()


def verify_carleman(fields, lambdas, grid=None):
    """Worst-case ratio report over admissible fields and a lambda ladder."""
    fields = list(fields)
    if not fields:
        raise DomainError("verify_carleman needs at least one sample field")
    lambdas = np.asarray(sorted(lambdas), dtype=float)
    grid = grid or fields[0].grid
    ratios = np.empty((len(lambdas), len(fields)))
    for i, lam in enumerate(lambdas):
        for j, f in enumerate(fields):
            ratios[i, j] = estimate_ratio(f, lam)
    min_ratio = ratios.min(axis=1)
    lam0 = lambdas[-1]
    for i in range(len(lambdas)):
        if np.all(np.diff(min_ratio[i:]) >= 0.0) or i == len(lambdas) - 1:
            lam0 = lambdas[i]
            break
    return CarlemanReport(
        lambdas=lambdas, min_ratio=min_ratio,
        lambda3h2=lambdas**3 * grid.h**2, lambda0_estimate=float(lam0),
    )
