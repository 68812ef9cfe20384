"""Coefficient recovery from the minimizer and the tail.

v at the reporting wavenumber comes from the k-integral identity
v(., k) = -integral_k^{k_max} q dkappa + V with q = p_min + F; the
coefficient then follows from the log-field equation

    beta = -(Lap^h v + k^2 grad^h v . grad^h v + 2 i k v_z),

clamped to Re beta >= 0 (the imaginary part is reported as a fidelity
diagnostic, never used).  The alternative formula without the 2ik v_z
drift term is kept behind a flag for comparison.  The maximum of the
smoothed coefficient and its grid location are the reported quantities,
with the relative error eps = |c_comp - c_ref| / c_ref * 100%.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, StructuralError
from .grid import SemidiscreteField, _l2h_norm_sq, smooth3_per_axis
from .convexifier import revcumtrapz


def recover_v(p_min, F, V, grid=None, k_target=None):
    """v(., k_target) from the minimizer, the extension and the tail.

    k_target must be a node of the k-grid (default: the bottom wavenumber,
    the value used for coefficient recovery).
    """
    if isinstance(p_min, SemidiscreteField):
        grid = p_min.grid
        p_min = p_min.values
    F = F.values if isinstance(F, SemidiscreteField) else np.asarray(F)
    V = V.values if isinstance(V, SemidiscreteField) else np.asarray(V)
    k_nodes = grid.k_nodes
    if k_target is None:
        t = 0
    else:
        hits = np.nonzero(np.abs(k_nodes - k_target) <= 1e-9 * max(grid.dk, 1.0))[0]
        if len(hits) == 0:
            raise DomainError(f"k_target {k_target} is not a node of the k-grid")
        t = int(hits[0])
    q = p_min + F
    integral = revcumtrapz(q, grid.dk)
    return SemidiscreteField(grid, -integral[t] + V), k_nodes[t]


@dataclass
class ReconstructionResult:
    """Recovered coefficient field with its summary metrics."""

    c: SemidiscreteField
    c_comp: float
    location: tuple          # (j, s, m) grid indices of the maximizer
    location_xyz: tuple
    eps_comp: float          # percent, or None without a reference
    c_ref: float
    im_defect: float         # L2h norm of the discarded imaginary part
    k_used: float


def clamp_and_smooth(beta_real, passes=1):
    """Clamp the raw contrast at zero and average once per axis."""
    c = 1.0 + np.maximum(beta_real, 0.0)
    return smooth3_per_axis(c, passes=passes)


def recover_c(v, k, grid=None, c_ref=None, include_drift=True, smoothing_passes=1):
    """Coefficient field from v at one wavenumber.

    include_drift selects the recovery equation: the full one with the
    2ik v_z term (default) or the variant without it.
    """
    if isinstance(v, SemidiscreteField):
        grid = v.grid
        v = v.values
    if grid is None:
        raise StructuralError("recover_c needs a grid when v is a bare array")
    lap = kernels.lap_h(np.ascontiguousarray(v), 1.0 / grid.h**2, 1.0 / grid.dz**2)
    vx, vy, vz = kernels.grad_h(np.ascontiguousarray(v), 0.5 / grid.h, 0.5 / grid.dz)
    square = vx * vx + vy * vy + vz * vz
    if include_drift:
        beta_raw = -(lap + k**2 * square + 2j * k * vz)
    else:
        beta_raw = -(lap + k**2 * square) - 1.0
    c = clamp_and_smooth(beta_raw.real, passes=smoothing_passes)
    c[0, :, :] = c[-1, :, :] = 1.0
    c[:, 0, :] = c[:, -1, :] = 1.0
    c[:, :, 0] = c[:, :, -1] = 1.0

    loc = np.unravel_index(int(np.argmax(c)), c.shape)
    c_comp = float(c[loc])
    xyz = (float(grid.xy_nodes[loc[0]]), float(grid.xy_nodes[loc[1]]),
           float(grid.z_nodes[loc[2]]))
    eps = None
    if c_ref is not None:
        eps = abs(c_comp - c_ref) / c_ref * 100.0
    im_defect = math.sqrt(_l2h_norm_sq(1j * beta_raw.imag, grid))
    return ReconstructionResult(
        c=SemidiscreteField(grid, c.astype(np.complex128)), c_comp=c_comp,
        location=tuple(int(i) for i in loc), location_xyz=xyz,
        eps_comp=eps, c_ref=c_ref, im_defect=im_defect, k_used=float(k),
    )


def report_tables(results, references, out_dir):
    """CSV analogs of the coefficient and location summary tables.

    references: one (c_ref, location_xyz) pair per result; location may be
    None when no positional truth is available.
    """
    import os

    if len(results) != len(references):
        raise StructuralError(
            f"{len(results)} results but {len(references)} references"
        )
    path3 = os.path.join(out_dir, "table_coefficients.csv")
    path4 = os.path.join(out_dir, "table_locations.csv")
    with open(path3, "w") as fh:
        fh.write("number,c_ref,c_comp,eps_comp_percent\n")
        for i, (res, ref) in enumerate(zip(results, references), start=1):
            c_ref = ref[0]
            eps = res.eps_comp
            if eps is None and c_ref is not None:
                eps = abs(res.c_comp - c_ref) / c_ref * 100.0
            fh.write(
                f"{i},{_cell(c_ref)},{res.c_comp:.6g},"
                f"{_cell(eps, '.4g')}\n"
            )
    with open(path4, "w") as fh:
        fh.write(
            "number,ref_x,ref_y,ref_z,comp_x,comp_y,comp_z,off_x,off_y,off_z\n"
        )
        for i, (res, ref) in enumerate(zip(results, references), start=1):
            loc_ref = ref[1]
            cx, cy, cz = res.location_xyz
            if loc_ref is None:
                fh.write(f"{i},,,,{cx:.6g},{cy:.6g},{cz:.6g},,,\n")
            else:
                rx, ry, rz = loc_ref
                fh.write(
                    f"{i},{rx:.6g},{ry:.6g},{rz:.6g},{cx:.6g},{cy:.6g},{cz:.6g},"
                    f"{cx - rx:.6g},{cy - ry:.6g},{cz - rz:.6g}\n"
                )
    return path3, path4


def _cell(val, fmt=".6g"):
    return "" if val is None else format(val, fmt)
