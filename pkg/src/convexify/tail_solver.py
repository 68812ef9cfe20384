"""Tail field: the weighted quadratic minimization and its noise schedule.

The tail V approximates the log-field variable at the top wavenumber.  It
solves the ill-posed problem "discrete Laplacian zero in the slab, value
and slope given on Gamma, zero on the rest of the boundary", regularized
by minimizing the Carleman-weighted misfit

    I_mu(W) = e^{2 mu d} * sum_cols h^2 * integral |Lap^h (W + Q)|^2
              * e^{-2 mu z} dz

over W in the zero-boundary space (W = 0 on all boundary planes and on
the first interior z-layer, the first-order surrogate of W_z = 0 on
Gamma).  Q is the extension field carrying the Gamma data.  I_mu is a
weighted linear least-squares problem; small grids use a direct sparse
factorization of the normal equations, large ones conjugate gradients.

The weight exponent follows the noise level delta through
mu(delta) = -ln(delta) / (2 (d + xi)).
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .carleman import weight
from .errors import DomainError, ScheduleError, SolverError
from .grid import GridSpec, SemidiscreteField, h2h_norm_sq_4d, _h2h_norm_sq

_DIRECT_DOF_MAX = 20000  # direct sparse factorization below, CG above
_CG_RTOL = 1e-10


def choose_mu(delta, d, xi, lambda0=1.0):
    """Weight exponent from the noise level: mu = -ln(delta) / (2 (d + xi)).

    Admissible range is 0 < delta < delta0 = e^{-2 (d + xi) lambda0}, with
    lambda0 the threshold of the weighted lower-bound estimate (from the
    Carleman verification report or configuration).
    """
    delta0 = math.exp(-2.0 * (d + xi) * lambda0)
    if not (0.0 < delta <= delta0):
        raise ScheduleError(
            f"noise level {delta} outside the schedule range (0, {delta0:.3e}]; "
            "pass an explicit mu to override"
        )
    return -math.log(delta) / (2.0 * (d + xi))


def interior_laplacian(grid):
    """Sparse matrix of the interior 7-point Laplacian on the full field.

    Rows: interior evaluation points (j, s in 1..n_h-2, m in 1..n_z-2) in
    C order.  Columns: all grid nodes, flat index (j * n_h + s) * n_z + m.
    """
    n_h, n_z = grid.n_h, grid.n_z
    inv_h2, inv_dz2 = 1.0 / grid.h**2, 1.0 / grid.dz**2
    jj, ss, mm = np.meshgrid(
        np.arange(1, n_h - 1), np.arange(1, n_h - 1), np.arange(1, n_z - 1),
        indexing="ij",
    )
    jj, ss, mm = jj.ravel(), ss.ravel(), mm.ravel()
    n_rows = len(jj)
    rows = np.arange(n_rows)

    def flat(j, s, m):
        return (j * n_h + s) * n_z + m

    data, rr, cc = [], [], []
    for dj, ds, dm, coef in (
        (0, 0, 0, -2.0 * (2.0 * inv_h2 + inv_dz2)),
        (-1, 0, 0, inv_h2), (1, 0, 0, inv_h2),
        (0, -1, 0, inv_h2), (0, 1, 0, inv_h2),
        (0, 0, -1, inv_dz2), (0, 0, 1, inv_dz2),
    ):
        rr.append(rows)
        cc.append(flat(jj + dj, ss + ds, mm + dm))
        data.append(np.full(n_rows, coef))
    A = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rr), np.concatenate(cc))),
        shape=(n_rows, n_h * n_h * n_z),
    ).tocsr()
    row_m = mm
    return A, row_m


def interior_zderiv(grid):
    """Sparse matrix of the interior centered z-derivative on the full field.

    Same row/column layout as interior_laplacian.
    """
    n_h, n_z = grid.n_h, grid.n_z
    inv_2dz = 0.5 / grid.dz
    jj, ss, mm = np.meshgrid(
        np.arange(1, n_h - 1), np.arange(1, n_h - 1), np.arange(1, n_z - 1),
        indexing="ij",
    )
    jj, ss, mm = jj.ravel(), ss.ravel(), mm.ravel()
    rows = np.arange(len(jj))

    def flat(j, s, m):
        return (j * n_h + s) * n_z + m

    rr = np.concatenate([rows, rows])
    cc = np.concatenate([flat(jj, ss, mm + 1), flat(jj, ss, mm - 1)])
    data = np.concatenate([np.full(len(jj), inv_2dz), np.full(len(jj), -inv_2dz)])
    return sp.coo_matrix((data, (rr, cc)), shape=(len(jj), n_h * n_h * n_z)).tocsr()


def dof_indices(grid, z_start=2):
    """Flat indices of the zero-boundary unknowns (m from z_start on)."""
    n_h, n_z = grid.n_h, grid.n_z
    jj, ss, mm = np.meshgrid(
        np.arange(1, n_h - 1), np.arange(1, n_h - 1), np.arange(z_start, n_z - 1),
        indexing="ij",
    )
    return ((jj * n_h + ss) * n_z + mm).ravel()


def _row_weights(grid, mu, row_m):
    wz = grid.z_trapz_weights()
    phi = weight(grid.z_nodes, mu)
    return math.exp(2.0 * mu * grid.d) * grid.h**2 * wz[row_m] * phi[row_m]


def i_mu_value(field3d, grid, mu):
    """I_mu evaluated on a full field (the W + Q sum)."""
    lap = kernels.lap_h(np.ascontiguousarray(field3d), 1.0 / grid.h**2, 1.0 / grid.dz**2)
    wz = (
        math.exp(2.0 * mu * grid.d) * grid.h**2
        * grid.z_trapz_weights() * weight(grid.z_nodes, mu)
    )
    return kernels.weighted_sumsq(lap, wz)


@dataclass
class TailFunction:
    """Product of the tail minimization."""

    V: SemidiscreteField
    mu: float
    residual: float          # I_mu at the minimizer
    defects: dict = field(default_factory=dict)
    method: str = "direct"


def _solve_normal_direct(N, rhs):
    lu = spla.splu(N.tocsc())
    return lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)


def _solve_normal_cg(N, rhs, x0, maxiter):
    out = np.zeros(len(rhs), dtype=np.complex128)
    for part, x0p in (("real", None if x0 is None else x0.real),
                      ("imag", None if x0 is None else x0.imag)):
        b = getattr(rhs, part)
        hist = []
        x, info = spla.cg(
            N, b, x0=x0p, rtol=_CG_RTOL, atol=0.0, maxiter=maxiter,
            callback=lambda xk: hist.append(float(np.linalg.norm(N @ xk - b))),
        )
        if info != 0:
            res = float(np.linalg.norm(N @ x - b) / max(np.linalg.norm(b), 1e-300))
            raise SolverError(
                f"tail CG stagnated on the {part} part (info={info})",
                residual=res, history=hist,
            )
        out += x if part == "real" else 1j * x
    return out


def minimize_tail(Q, mu, grid=None, method="auto", x0=None, variant="weighted"):
    """Unique minimizer of I_mu over the zero-boundary space; returns V = W + Q.

    method: 'auto' (direct below _DIRECT_DOF_MAX unknowns, else CG),
    'direct', or 'cg'.  x0 seeds the CG iteration (uniqueness probes).
    variant 'dirichlet' instead solves the plain Dirichlet problem for the
    discrete Laplace equation, dropping the Gamma slope data; it exists to
    reproduce the observation that this route is unsatisfactory.
    """
    if isinstance(Q, SemidiscreteField):
        grid = Q.grid
        Q = Q.values
    if grid is None:
        raise DomainError("minimize_tail needs a grid when Q is a bare array")
    if mu <= 0:
        raise DomainError(f"weight exponent mu must be positive, got {mu}")
    if variant == "dirichlet":
        return _dirichlet_tail(Q, mu, grid)

    A, row_m = interior_laplacian(grid)
    dofs = dof_indices(grid, z_start=2)
    A_dof = A[:, dofs]
    omega = _row_weights(grid, mu, row_m)
    r0 = (A @ Q.ravel())
    Aw = A_dof.multiply(omega[:, None]).tocsr()
    N = (A_dof.T @ Aw).tocsr()
    rhs = -(A_dof.T @ (omega * r0))

    n_dof = len(dofs)
    use_direct = method == "direct" or (method == "auto" and n_dof <= _DIRECT_DOF_MAX)
    if use_direct:
        w = _solve_normal_direct(N, rhs)
        how = "direct"
    else:
        x0v = None if x0 is None else np.asarray(x0, dtype=np.complex128).ravel()[dofs]
        w = _solve_normal_cg(N, rhs, x0v, maxiter=20 * n_dof)
        how = "cg"

    W = np.zeros(grid.shape3, dtype=np.complex128).ravel()
    W[dofs] = w
    W = W.reshape(grid.shape3)
    V = W + Q
    resid = i_mu_value(V, grid, mu)
    defects = _gamma_defects(V, Q, grid)
    return TailFunction(V=SemidiscreteField(grid, V), mu=mu, residual=resid,
                        defects=defects, method=how)


def _gamma_defects(V, Q, grid):
    """Boundary-fit diagnostics of the returned tail."""
    slope_v = (V[:, :, 1] - V[:, :, 0]) / grid.dz
    slope_q = (Q[:, :, 1] - Q[:, :, 0]) / grid.dz
    return {
        "gamma_value": float(np.max(np.abs(V[:, :, 0] - Q[:, :, 0]))),
        "gamma_slope_first_order": float(np.max(np.abs(slope_v - slope_q))),
    }


def _dirichlet_tail(Q, mu, grid):
    """Plain Dirichlet Laplace solve using only the Gamma value data."""
    A, _ = interior_laplacian(grid)
    dofs = dof_indices(grid, z_start=1)
    bc = np.zeros(grid.shape3, dtype=np.complex128)
    bc[:, :, 0] = Q[:, :, 0]
    A_dof = A[:, dofs].tocsc()
    rhs = -(A @ bc.ravel())
    lu = spla.splu(A_dof)
    w = lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
    V = bc.ravel().copy()
    V[dofs] = w
    V = V.reshape(grid.shape3)
    return TailFunction(
        V=SemidiscreteField(grid, V), mu=mu, residual=i_mu_value(V, grid, mu),
        defects=_gamma_defects(V, Q, grid), method="dirichlet",
    )


@dataclass
class TailProbeReport:
    """delta-sweep of the full tail pipeline against the simulator oracle."""

    deltas: np.ndarray
    errors: np.ndarray
    mus: np.ndarray
    slope: float
    floor: float            # error of the noiseless pipeline at the tightest mu
    oracle_norm: float


def tail_convergence_probe(scene, grid, deltas, seed=0, lambda0=1.0,
                           cutoff_fraction=0.3):
    """Errors ||V_mu(delta) - V*|| over a noise sweep and their log-log slope.

    V* is the simulator's interior log-field variable at the top wavenumber.
    Duplicate deltas reuse the same seed, so they produce identical errors.
    """
    from .data_prep import boundary_functions, build_extensions, volumetric_vq
    from .forward_sim import simulate, synthesize_dataset

    deltas = np.asarray(list(deltas), dtype=float)
    if np.sum(deltas > 0) < 3:
        raise DomainError("tail probe needs at least 3 positive noise levels")
    solution = simulate(scene, grid)
    v_oracle, _ = volumetric_vq(solution.fields, grid)
    v_star = v_oracle[-1]
    oracle_norm = math.sqrt(_h2h_norm_sq(v_star, grid))

    def run(delta, mu):
        data = synthesize_dataset(scene, grid, delta, seed, solution=solution)
        bf = boundary_functions(data)
        ext = build_extensions(bf, grid, cutoff_fraction=cutoff_fraction)
        tail = minimize_tail(SemidiscreteField(grid, ext.Q), mu)
        diff = tail.V.values - v_star
        return math.sqrt(_h2h_norm_sq(diff, grid))

    errors = np.empty(len(deltas))
    mus = np.empty(len(deltas))
    for i, delta in enumerate(deltas):
        mus[i] = choose_mu(delta, grid.d, grid.xi, lambda0=lambda0)
        errors[i] = run(delta, mus[i])

    pos = deltas > 0
    logs = np.log(deltas[pos])
    slope, _ = np.polyfit(logs, np.log(errors[pos]), 1)
    floor = run(0.0, float(np.max(mus)))
    return TailProbeReport(deltas=deltas, errors=errors, mus=mus,
                           slope=float(slope), floor=floor, oracle_norm=oracle_norm)
