"""Pure-numpy implementations of the hot stencil kernels.

These are the fallback twins of the compiled routines in ``_core.pyx`` and
the reference the compiled ones are tested against.  All kernels take
C-contiguous complex128 arrays of shape (nx, ny, nz), evaluate only at
interior nodes and write zeros on the boundary ring, matching the
interior-only semidiscrete operator convention.
"""

import numpy as np

BACKEND_NAME = "numpy"


def lap_h(f, inv_h2, inv_dz2):
    """3-point Laplacian f_zz + f_xx + f_yy on interior nodes, 0 on boundary."""
    out = np.zeros_like(f)
    out[1:-1, 1:-1, 1:-1] = (
        (f[:-2, 1:-1, 1:-1] - 2.0 * f[1:-1, 1:-1, 1:-1] + f[2:, 1:-1, 1:-1]) * inv_h2
        + (f[1:-1, :-2, 1:-1] - 2.0 * f[1:-1, 1:-1, 1:-1] + f[1:-1, 2:, 1:-1]) * inv_h2
        + (f[1:-1, 1:-1, :-2] - 2.0 * f[1:-1, 1:-1, 1:-1] + f[1:-1, 1:-1, 2:]) * inv_dz2
    )
    return out


def lap_h_adjoint(g, inv_h2, inv_dz2):
    """Transpose of lap_h: scatter of the symmetric stencil from interior rows.

    Only the interior entries of g contribute (lap_h writes zeros elsewhere),
    so this equals lap_h applied to g with its boundary ring zeroed, except
    that output values on the boundary ring are kept (they receive
    contributions from adjacent interior rows).
    """
    gi = np.zeros_like(g)
    gi[1:-1, 1:-1, 1:-1] = g[1:-1, 1:-1, 1:-1]
    out = np.zeros_like(g)
    out -= 2.0 * (2.0 * inv_h2 + inv_dz2) * gi
    out[:-1] += inv_h2 * gi[1:]
    out[1:] += inv_h2 * gi[:-1]
    out[:, :-1] += inv_h2 * gi[:, 1:]
    out[:, 1:] += inv_h2 * gi[:, :-1]
    out[:, :, :-1] += inv_dz2 * gi[:, :, 1:]
    out[:, :, 1:] += inv_dz2 * gi[:, :, :-1]
    return out


def grad_h(f, inv_2h, inv_2dz):
    """Centered first differences (f_x, f_y, f_z) on interior nodes."""
    fx = np.zeros_like(f)
    fy = np.zeros_like(f)
    fz = np.zeros_like(f)
    fx[1:-1, 1:-1, 1:-1] = (f[2:, 1:-1, 1:-1] - f[:-2, 1:-1, 1:-1]) * inv_2h
    fy[1:-1, 1:-1, 1:-1] = (f[1:-1, 2:, 1:-1] - f[1:-1, :-2, 1:-1]) * inv_2h
    fz[1:-1, 1:-1, 1:-1] = (f[1:-1, 1:-1, 2:] - f[1:-1, 1:-1, :-2]) * inv_2dz
    return fx, fy, fz


def grad_h_adjoint(gx, gy, gz, inv_2h, inv_2dz):
    """Transpose of grad_h, with the three component cograds accumulated.

    The centered difference is antisymmetric, so each transpose is the
    negated centered difference of the interior-restricted cograd.
    """
    out = np.zeros_like(gx)
    gi = np.zeros_like(gx)

    gi[...] = 0.0
    gi[1:-1, 1:-1, 1:-1] = gx[1:-1, 1:-1, 1:-1]
    out[:-1] -= inv_2h * gi[1:]
    out[1:] += inv_2h * gi[:-1]

    gi[...] = 0.0
    gi[1:-1, 1:-1, 1:-1] = gy[1:-1, 1:-1, 1:-1]
    out[:, :-1] -= inv_2h * gi[:, 1:]
    out[:, 1:] += inv_2h * gi[:, :-1]

    gi[...] = 0.0
    gi[1:-1, 1:-1, 1:-1] = gz[1:-1, 1:-1, 1:-1]
    out[:, :, :-1] -= inv_2dz * gi[:, :, 1:]
    out[:, :, 1:] += inv_2dz * gi[:, :, :-1]
    return out


def weighted_sumsq(r, wz):
    """sum over (j, s, m) of wz[m] * |r[j, s, m]|^2 (real scalar)."""
    a = np.abs(r) ** 2
    return float(np.sum(a * wz[None, None, :]))
