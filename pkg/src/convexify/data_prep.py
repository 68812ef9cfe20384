"""From boundary traces to the variables of the inverse problem.

The chain is  w = u e^{-ikz}  ->  log w (phase-unwrapped)  ->
v = log w / k^2  ->  q = d_k v, plus the boundary functions

    phi0 = q|_Gamma,  phi1 = q_z|_Gamma,
    psi0 = v(., k_max)|_Gamma,  psi1 = v_z(., k_max)|_Gamma,

and the extension fields Q (k-independent, matching psi0/psi1 on Gamma)
and F (per k, matching phi0/phi1) that carry the inhomogeneous boundary
data into the interior minimizations.

The complex log is fixed by continuity along an explicit path: principal
value at the anchor sample (top wavenumber, Gamma corner nearest
(-b, -b)), unwrapped first along k descending from k_max, then across
Gamma columns in row-major order.  A post-unwrap jump of pi or more means
the data is too rough for the bottom wavenumber and is reported as an
error, never repaired silently.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError, StructuralError, UnwrapError
from .grid import SemidiscreteField

_AMP_FLOOR = 1e-12


@dataclass
class LogField:
    """Unwrapped complex logarithm of w with its branch bookkeeping.

    values:  log w = ln|w| + i * (unwrapped phase)
    winding: integer winding counts relative to the principal phase
    """

    values: np.ndarray
    winding: np.ndarray
    k_nodes: np.ndarray


def compute_w_traces(g0, g1, grid):
    """Traces of w and w_z on Gamma from the measured u and u_z traces.

    u_i = e^{ikz} never vanishes, so w = u e^{-ikz} and, by the product
    rule, w_z = (u_z - ik u) e^{-ikz}; both evaluated at z = -xi.
    """
    k = grid.k_nodes[:, None, None]
    phase = np.exp(1j * k * grid.xi)
    w0 = g0 * phase
    w1 = (g1 - 1j * k * g0) * phase
    return w0, w1


def compute_w_field(u, grid=None):
    """w on the whole grid per wavenumber: w[t] = u[t] e^{-i k_t z}."""
    if isinstance(u, SemidiscreteField):
        grid = u.grid
        u = u.values
    k = grid.k_nodes[:, None, None, None]
    z = grid.z_nodes[None, None, None, :]
    return u * np.exp(-1j * k * z)


def _unwrap_onto(phase_raw, prev):
    """Unwrapped phase closest to prev (adds the right multiple of 2 pi)."""
    return phase_raw + 2.0 * math.pi * np.round((prev - phase_raw) / (2.0 * math.pi))


def _check_amplitude(w):
    bad = np.abs(w) < _AMP_FLOOR
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise UnwrapError(
            f"|w| below {_AMP_FLOOR:g} at sample {idx}: amplitude too degenerate "
            "to take a logarithm", sample=idx,
        )


def _check_consistency(phase, where):
    """All grid-adjacent unwrapped samples must stay within pi of each other.

    The unwrap path itself fixes branches greedily, so jumps along the path
    are < pi by construction; inconsistent (too rough) data shows up as a
    >= pi jump across some other adjacency, which is reported instead of
    silently repaired.
    """
    for axis in range(phase.ndim):
        jumps = np.abs(np.diff(phase, axis=axis))
        if np.any(jumps >= math.pi):
            idx = tuple(int(i) for i in np.argwhere(jumps >= math.pi)[0])
            raise UnwrapError(
                f"phase jump >= pi across {where} axis {axis} at sample {idx}; "
                "data too rough for this bottom wavenumber", sample=idx,
            )


def log_unwrapped(w, k_nodes):
    """Unwrapped log of Gamma traces w, shape (n_k, n_h, n_h).

    Path: anchor (k_max, corner (0, 0)) takes the principal log; the anchor
    column is unwrapped along k descending; each k-slice is then unwrapped
    across Gamma in row-major column order.  All adjacencies are checked
    for consistency afterwards.
    """
    w = np.asarray(w, dtype=np.complex128)
    _check_amplitude(w)
    n_k = w.shape[0]
    raw = np.angle(w)
    phase = np.array(raw)

    for t in range(n_k - 2, -1, -1):
        phase[t, 0, 0] = _unwrap_onto(raw[t, 0, 0], phase[t + 1, 0, 0])
    flat_raw = raw.reshape(n_k, -1)
    flat = phase.reshape(n_k, -1)
    for t in range(n_k):
        for i in range(1, flat.shape[1]):
            flat[t, i] = _unwrap_onto(flat_raw[t, i], flat[t, i - 1])
    _check_consistency(phase, "Gamma traces")

    winding = np.round((phase - raw) / (2.0 * math.pi)).astype(int)
    values = np.log(np.abs(w)) + 1j * phase
    return LogField(values=values, winding=winding, k_nodes=np.asarray(k_nodes))


def log_unwrapped_volume(w, k_nodes):
    """Unwrapped log of a volumetric w, shape (n_k, n_h, n_h, n_z).

    The Gamma layer (z-node 0) follows the trace path; each column is then
    continued along z from its Gamma value.  Used for oracle fields.
    """
    w = np.asarray(w, dtype=np.complex128)
    _check_amplitude(w)
    gamma = log_unwrapped(w[:, :, :, 0], k_nodes)
    raw = np.angle(w)
    phase = np.array(raw)
    phase[:, :, :, 0] = gamma.values.imag
    for m in range(1, w.shape[3]):
        phase[:, :, :, m] = _unwrap_onto(raw[:, :, :, m], phase[:, :, :, m - 1])
    _check_consistency(phase, "volume")
    winding = np.round((phase - raw) / (2.0 * math.pi)).astype(int)
    values = np.log(np.abs(w)) + 1j * phase
    return LogField(values=values, winding=winding, k_nodes=np.asarray(k_nodes))


def k_derivative(values, k_nodes):
    """d/dk along axis 0: centered inside, one-sided second order at the ends."""
    n_k = values.shape[0]
    if n_k < 3:
        raise StructuralError(f"k-derivative needs at least 3 wavenumber nodes, got {n_k}")
    dk = float(k_nodes[1] - k_nodes[0])
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * dk)
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dk)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dk)
    return out


def compute_v_q(logfield, k_nodes=None):
    """v = log w / k^2 and q = d_k v on the wavenumber grid.

    Works on traces and on volumetric log fields alike (k axis first).
    """
    k_nodes = logfield.k_nodes if k_nodes is None else np.asarray(k_nodes)
    shape = (-1,) + (1,) * (logfield.values.ndim - 1)
    v = logfield.values / (k_nodes.reshape(shape) ** 2)
    q = k_derivative(v, k_nodes)
    return v, q


@dataclass
class BoundaryFunctions:
    """Gamma data for the two minimization stages (all per column of Gamma)."""

    phi0: np.ndarray   # q on Gamma, (n_k, n_h, n_h)
    phi1: np.ndarray   # q_z on Gamma
    psi0: np.ndarray   # v(., k_max) on Gamma, (n_h, n_h)
    psi1: np.ndarray   # v_z(., k_max) on Gamma
    v_traces: np.ndarray
    vz_traces: np.ndarray


def boundary_functions(data, grid=None):
    """phi0, phi1, psi0, psi1 from a MeasuredBoundaryData (or raw traces).

    The z-derivatives come through the exact chain
    (log w)_z = w_z / w, v_z = (log w)_z / k^2, q_z = d_k v_z,
    so no stencil in z is involved on the data side.
    """
    if grid is None:
        grid = data.grid
        g0, g1 = data.g0, data.g1
    else:
        g0, g1 = data
    w0, w1 = compute_w_traces(g0, g1, grid)
    logf = log_unwrapped(w0, grid.k_nodes)
    v, q = compute_v_q(logf)
    k = grid.k_nodes[:, None, None]
    vz = (w1 / w0) / k**2
    qz = k_derivative(vz, grid.k_nodes)
    return BoundaryFunctions(
        phi0=q, phi1=qz, psi0=v[-1].copy(), psi1=vz[-1].copy(),
        v_traces=v, vz_traces=vz,
    )


def volumetric_vq(u_fields, grid):
    """Oracle v and q on the whole grid from simulated total fields."""
    w = compute_w_field(u_fields, grid)
    logf = log_unwrapped_volume(w, grid.k_nodes)
    return compute_v_q(logf)


@dataclass
class ExtensionPair:
    """Interior extensions of the Gamma data.

    Q matches (psi0, psi1) on Gamma and vanishes on the rest of the
    boundary; F does the same per wavenumber for (phi0, phi1).  The
    boundary-layer defect records how much the lateral taper distorts the
    Gamma match on the two columns nearest each lateral face.
    """

    Q: np.ndarray            # (n_h, n_h, n_z)
    F: np.ndarray            # (n_k, n_h, n_h, n_z)
    boundary_layer_defect: float
    cutoff_fraction: float


def _hermite_cutoff(grid, fraction):
    """C^1 cutoff in z: 1 with zero slope on Gamma, 0 from depth fraction on."""
    tt = (grid.z_nodes + grid.xi) / (fraction * (grid.d + grid.xi))
    tt = np.clip(tt, 0.0, 1.0)
    chi = 1.0 - 3.0 * tt**2 + 2.0 * tt**3
    return chi


def _lateral_taper(grid):
    """Transverse factor: 1 in the interior, smooth fall to 0 over the two
    cells nearest each lateral face."""
    xy = grid.xy_nodes
    u = np.minimum((xy + grid.b), (grid.b - xy)) / (2.0 * grid.h)
    u = np.clip(u, 0.0, 1.0)
    kappa1 = u * u * (3.0 - 2.0 * u)
    return kappa1[:, None] * kappa1[None, :]


def build_extensions(bf, grid, cutoff_fraction=0.3, tol=1e-10):
    """Construct (Q, F) from the boundary functions.

    Profile per column: (data0 + (z + xi) * data1) * chi(z) * kappa(x, y)
    with chi the cubic Hermite cutoff and kappa the two-cell lateral taper.
    chi(-xi) = 1 and chi'(-xi) = 0 make the Gamma value and slope exact
    where kappa = 1.  Invariants are verified before returning.
    """
    chi = _hermite_cutoff(grid, cutoff_fraction)
    kappa = _lateral_taper(grid)
    zpx = grid.z_nodes + grid.xi

    Q = (bf.psi0[:, :, None] + zpx[None, None, :] * bf.psi1[:, :, None]) * chi * kappa[:, :, None]
    F = (
        bf.phi0[:, :, :, None] + zpx[None, None, None, :] * bf.phi1[:, :, :, None]
    ) * chi * kappa[None, :, :, None]

    defect = _verify_extensions(Q, F, bf, grid, kappa, tol)
    return ExtensionPair(Q=Q, F=F, boundary_layer_defect=defect,
                         cutoff_fraction=cutoff_fraction)


def _verify_extensions(Q, F, bf, grid, kappa, tol):
    """Check the Gamma match on untapered columns and the zero faces."""
    scale = max(1.0, float(np.max(np.abs(bf.psi0))), float(np.max(np.abs(bf.phi0))))
    interior = kappa >= 1.0 - 1e-14

    checks = []
    if np.any(interior):
        # chi(-xi) = 1 and chi'(-xi) = 0 analytically, so on untapered
        # columns the Gamma value must equal data0 and the analytic Gamma
        # slope data1 * kappa must equal data1.
        checks.append(("Gamma value of Q", np.max(np.abs(Q[:, :, 0] - bf.psi0)[interior])))
        checks.append(("Gamma value of F", np.max(np.abs(F[:, :, :, 0] - bf.phi0)[:, interior])))
        checks.append(("Gamma slope of Q", np.max(np.abs(bf.psi1 * kappa - bf.psi1)[interior])))
        checks.append(
            ("Gamma slope of F",
             np.max(np.abs(bf.phi1 * kappa[None] - bf.phi1)[:, interior]))
        )
    for name, face in (
        ("lateral x=-b", Q[0]), ("lateral x=+b", Q[-1]),
        ("lateral y=-b", Q[:, 0]), ("lateral y=+b", Q[:, -1]),
        ("top z=d", Q[:, :, -1]),
    ):
        checks.append((f"zero {name} of Q", np.max(np.abs(face))))
    for name, face in (
        ("lateral x=-b", F[:, 0]), ("lateral x=+b", F[:, -1]),
        ("lateral y=-b", F[:, :, 0]), ("lateral y=+b", F[:, :, -1]),
        ("top z=d", F[:, :, :, -1]),
    ):
        checks.append((f"zero {name} of F", np.max(np.abs(face))))

    for name, val in checks:
        if val > tol * scale:
            raise ConstructionError(
                f"extension invariant failed on {name}: defect {val:.3e}",
                face=name, defect=float(val),
            )
    band = ~interior
    defect = 0.0
    if np.any(band):
        defect = max(
            float(np.max(np.abs(bf.psi0 * (1.0 - kappa))[band])),
            float(np.max(np.abs(bf.phi0 * (1.0 - kappa)[None])[:, band])),
        )
    return defect
