"""Semidiscrete computational stage.

The domain is the box Omega = (-b, b)^2 x (-xi, d) with the backscatter
face Gamma at z = -xi.  Fields are finite-difference in x and y (uniform
step h, n_h nodes per axis) and sampled on a uniform z-grid of n_z nodes
(dz = (d + xi) / (n_z - 1)); a uniform wavenumber grid with n_k nodes
spans [k_min, k_max].

Conventions used throughout the package:
  - 3D field arrays are complex128 with shape (n_h, n_h, n_z), index
    order (j, s, m) for (x_j, y_s, z_m).
  - k-dependent fields put the wavenumber axis first: (n_k, n_h, n_h, n_z).
  - Differential operators evaluate on interior nodes only and write
    zeros on the boundary ring; Dirichlet values live in the field itself.
  - Integrals over z and k use composite trapezoid weights, so norms stay
    quadrature-consistent with the stencils.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError, StructuralError


@dataclass(frozen=True)
class GridSpec:
    """Geometry and sampling of the semidiscrete stage.

    b:      half-width of the transverse cross-section
    xi:     depth of the backscatter face Gamma below the origin (z = -xi)
    d:      top of the domain in z
    n_h:    transverse node count per axis; h = 2 b / (n_h - 1)
    n_z:    z-node count; node 0 on Gamma, node n_z - 1 at z = d
    k_min, k_max, n_k: wavenumber interval and (uniform) sample count
    """

    b: float
    xi: float
    d: float
    n_h: int
    n_z: int
    k_min: float
    k_max: float
    n_k: int

    def __post_init__(self):
        if not (self.b > 0 and self.xi > 0 and self.d > 0):
            raise StructuralError(
                f"domain lengths must be positive: b={self.b}, xi={self.xi}, d={self.d}"
            )
        if self.n_h < 3:
            raise StructuralError(f"n_h must be >= 3, got {self.n_h}")
        if self.n_z < 5:
            raise StructuralError(f"n_z must be >= 5, got {self.n_z}")
        if self.n_k < 3:
            raise StructuralError(f"n_k must be >= 3, got {self.n_k}")
        if not (0 < self.k_min < self.k_max):
            raise StructuralError(
                f"wavenumber interval must satisfy 0 < k_min < k_max, "
                f"got [{self.k_min}, {self.k_max}]"
            )

    @classmethod
    def from_step(cls, b, xi, d, h, n_z, k_min, k_max, n_k):
        """Build from a transverse step size; h must tile [-b, b] exactly."""
        n_h = int(round(2.0 * b / h)) + 1
        if n_h < 3 or abs(2.0 * b / (n_h - 1) - h) > 1e-12 * max(1.0, h):
            raise StructuralError(f"step h={h} does not tile [-{b}, {b}] with whole cells")
        return cls(b=b, xi=xi, d=d, n_h=n_h, n_z=n_z, k_min=k_min, k_max=k_max, n_k=n_k)

    @property
    def h(self):
        return 2.0 * self.b / (self.n_h - 1)

    @property
    def dz(self):
        return (self.d + self.xi) / (self.n_z - 1)

    @property
    def dk(self):
        return (self.k_max - self.k_min) / (self.n_k - 1)

    @property
    def xy_nodes(self):
        return np.linspace(-self.b, self.b, self.n_h)

    @property
    def z_nodes(self):
        return np.linspace(-self.xi, self.d, self.n_z)

    @property
    def k_nodes(self):
        return np.linspace(self.k_min, self.k_max, self.n_k)

    @property
    def shape3(self):
        return (self.n_h, self.n_h, self.n_z)

    @property
    def shape4(self):
        return (self.n_k, self.n_h, self.n_h, self.n_z)

    def z_trapz_weights(self):
        w = np.full(self.n_z, self.dz)
        w[0] = w[-1] = 0.5 * self.dz
        return w

    def k_trapz_weights(self):
        w = np.full(self.n_k, self.dk)
        w[0] = w[-1] = 0.5 * self.dk
        return w


class SemidiscreteField:
    """Complex scalar field on the grid columns, optionally with a k-axis.

    Wraps a complex128 array of shape grid.shape3 or grid.shape4 and pins
    it to its GridSpec.  Construction validates the shape and finiteness;
    operators in this module return fields that satisfy the same checks.
    """

    def __init__(self, grid, values):
        values = np.ascontiguousarray(values, dtype=np.complex128)
        if values.shape not in (grid.shape3, grid.shape4):
            raise StructuralError(
                f"field shape {values.shape} matches neither {grid.shape3} "
                f"nor {grid.shape4} of its grid"
            )
        if not np.all(np.isfinite(values)):
            raise StructuralError("field contains non-finite values")
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid, with_k_axis=False):
        shape = grid.shape4 if with_k_axis else grid.shape3
        return cls(grid, np.zeros(shape, dtype=np.complex128))

    @property
    def has_k_axis(self):
        return self.values.ndim == 4

    def copy(self):
        return SemidiscreteField(self.grid, self.values.copy())

    def __repr__(self):
        kind = "x,k" if self.has_k_axis else "x"
        return f"SemidiscreteField({kind}; shape={self.values.shape})"


def _require_3d(f):
    if f.has_k_axis:
        raise StructuralError("operation expects a field without a k-axis")
    return f.values


def laplacian_h(f):
    """Partial finite-difference Laplacian f_zz + f_xx^h + f_yy^h.

    Evaluated at interior nodes with 3-point stencils; boundary entries of
    the result are zero (boundary values of f act as Dirichlet data).
    Exact on fields quadratic in each variable.
    """
    v = _require_3d(f)
    g = f.grid
    out = kernels.lap_h(v, 1.0 / g.h**2, 1.0 / g.dz**2)
    return SemidiscreteField(g, out)


def gradient_h(f):
    """Centered gradient (d_x^h f, d_y^h f, d_z f) on interior nodes."""
    v = _require_3d(f)
    g = f.grid
    fx, fy, fz = kernels.grad_h(v, 0.5 / g.h, 0.5 / g.dz)
    return (
        SemidiscreteField(g, fx),
        SemidiscreteField(g, fy),
        SemidiscreteField(g, fz),
    )


# -- z-derivatives on the full z-range (second order at the endpoints), ----
# -- used by the Sobolev norms where the integrand must cover [-xi, d]. ----

def z_deriv1(values, dz):
    out = np.empty_like(values)
    out[..., 1:-1] = (values[..., 2:] - values[..., :-2]) / (2.0 * dz)
    out[..., 0] = (-3.0 * values[..., 0] + 4.0 * values[..., 1] - values[..., 2]) / (2.0 * dz)
    out[..., -1] = (3.0 * values[..., -1] - 4.0 * values[..., -2] + values[..., -3]) / (2.0 * dz)
    return out


def z_deriv2(values, dz):
    out = np.empty_like(values)
    out[..., 1:-1] = (values[..., 2:] - 2.0 * values[..., 1:-1] + values[..., :-2]) / dz**2
    out[..., 0] = (
        2.0 * values[..., 0] - 5.0 * values[..., 1] + 4.0 * values[..., 2] - values[..., 3]
    ) / dz**2
    out[..., -1] = (
        2.0 * values[..., -1] - 5.0 * values[..., -2] + 4.0 * values[..., -3] - values[..., -4]
    ) / dz**2
    return out


def _h2h_norm_sq(values, grid):
    """Squared H^{2,h} norm of a 3D value array."""
    wz = grid.z_trapz_weights()
    acc = np.abs(values) ** 2
    acc = acc + np.abs(z_deriv1(values, grid.dz)) ** 2
    acc = acc + np.abs(z_deriv2(values, grid.dz)) ** 2
    return float(grid.h**2 * np.sum(acc * wz))


def _l2h_norm_sq(values, grid):
    wz = grid.z_trapz_weights()
    return float(grid.h**2 * np.sum(np.abs(values) ** 2 * wz))


def norm_H2h(f):
    """H^{2,h} norm: sum over columns of h^2 * integral of |d_z^r f|^2, r = 0..2."""
    v = _require_3d(f)
    return np.sqrt(_h2h_norm_sq(v, f.grid))


def norm_L2h(f):
    v = _require_3d(f)
    return np.sqrt(_l2h_norm_sq(v, f.grid))


def norm_H2h_k(f):
    """H_2^h norm of a field with a k-axis: k-integral of squared H^{2,h} norms."""
    if not f.has_k_axis:
        raise StructuralError("norm_H2h_k expects a field with a k-axis")
    g = f.grid
    wk = g.k_trapz_weights()
    acc = 0.0
    for t in range(g.n_k):
        acc += wk[t] * _h2h_norm_sq(f.values[t], g)
    return np.sqrt(acc)


def h2h_norm_sq_4d(values, grid):
    """Squared H_2^h norm of a raw 4D array (internal fast path)."""
    wk = grid.k_trapz_weights()
    return float(sum(wk[t] * _h2h_norm_sq(values[t], grid) for t in range(grid.n_k)))


def check_h02_boundary(values, grid, tol=1e-10):
    """Verify the H_0^{2,h} boundary conditions on a 3D or 4D value array.

    Requires f = 0 on all boundary nodes of Omega and f = 0 on the first
    interior z-layer (the discrete surrogate of f_z = 0 on Gamma).
    Returns the maximum boundary defect; raises ContractError above tol
    (tol is relative to the field's maximum magnitude, floored at 1).
    """
    scale = max(1.0, float(np.max(np.abs(values))) if values.size else 1.0)
    defect = 0.0
    for arr in values if values.ndim == 4 else (values,):
        defect = max(
            defect,
            float(np.max(np.abs(arr[0, :, :]))),
            float(np.max(np.abs(arr[-1, :, :]))),
            float(np.max(np.abs(arr[:, 0, :]))),
            float(np.max(np.abs(arr[:, -1, :]))),
            float(np.max(np.abs(arr[:, :, 0]))),
            float(np.max(np.abs(arr[:, :, -1]))),
            float(np.max(np.abs(arr[:, :, 1]))),
        )
    if defect > tol * scale:
        raise ContractError(
            f"field violates H_0^{{2,h}} boundary conditions: defect {defect:.3e} "
            f"exceeds {tol:.1e} x scale {scale:.3e}"
        )
    return defect


def norm_H02h_equivalent(f, tol=1e-10):
    """Equivalent norm on H_0^{2,h}: (sum of h^2 * integral |Lap^h f|^2)^(1/2)."""
    v = _require_3d(f)
    g = f.grid
    check_h02_boundary(v, g, tol=tol)
    lap = kernels.lap_h(v, 1.0 / g.h**2, 1.0 / g.dz**2)
    return np.sqrt(_l2h_norm_sq(lap, g))


def smooth3_per_axis(values, passes=1):
    """3-point moving average applied along each axis in turn.

    Endpoints along the averaged axis are left unchanged.  Used both by the
    random admissible-field generator and by the coefficient post-smoothing.
    """
    out = np.array(values, copy=True)
    for _ in range(passes):
        for axis in range(out.ndim):
            v = np.moveaxis(out, axis, -1)
            mid = (v[..., :-2] + v[..., 1:-1] + v[..., 2:]) / 3.0
            v[..., 1:-1] = mid
    return out


# ---------------------------------------------------------------------------
# Field dump format: plain-text header followed by "j s m k_index re im"
# rows (k_index is -1 for fields without a k-axis).  Floats are written
# with 17 significant digits so a write/read cycle is bit-exact.
# ---------------------------------------------------------------------------

_MAGIC = "# convexify field v1"


def _fmt(x):
    return f"{x:.17e}"


def dump_field(f, path, meta=None):
    """Write a field (with optional string-keyed metadata) to a text file."""
    g = f.grid
    lines = [_MAGIC]
    lines.append(f"n_h {g.n_h}")
    lines.append(f"n_z {g.n_z}")
    lines.append(f"b {_fmt(g.b)}")
    lines.append(f"xi {_fmt(g.xi)}")
    lines.append(f"d {_fmt(g.d)}")
    if f.has_k_axis:
        lines.append(f"n_k {g.n_k}")
        lines.append(f"k_min {_fmt(g.k_min)}")
        lines.append(f"k_max {_fmt(g.k_max)}")
    for key in sorted(meta or {}):
        lines.append(f"meta {key} {meta[key]}")
    lines.append("data")
    if f.has_k_axis:
        for t in range(g.n_k):
            _append_rows(lines, f.values[t], t)
    else:
        _append_rows(lines, f.values, -1)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _append_rows(lines, arr, k_index):
    n_h, _, n_z = arr.shape
    for j in range(n_h):
        for s in range(n_h):
            for m in range(n_z):
                v = arr[j, s, m]
                lines.append(f"{j} {s} {m} {k_index} {_fmt(v.real)} {_fmt(v.imag)}")


def load_field(path, k_grid_defaults=(1.0, 2.0, 3)):
    """Read a field written by dump_field; returns (field, meta dict).

    Fields dumped without a k-axis do not carry the owning grid's k-block,
    so the reconstructed GridSpec falls back to k_grid_defaults for it.
    """
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != _MAGIC:
            raise StructuralError(f"{path} is not a convexify field file")
        header = {}
        meta = {}
        for line in fh:
            line = line.rstrip("\n")
            if line == "data":
                break
            key, _, rest = line.partition(" ")
            if key == "meta":
                mkey, _, mval = rest.partition(" ")
                meta[mkey] = mval
            else:
                header[key] = rest
        n_h = int(header["n_h"])
        n_z = int(header["n_z"])
        has_k = "n_k" in header
        if has_k:
            k_min, k_max, n_k = float(header["k_min"]), float(header["k_max"]), int(header["n_k"])
        else:
            k_min, k_max, n_k = k_grid_defaults
        grid = GridSpec(
            b=float(header["b"]), xi=float(header["xi"]), d=float(header["d"]),
            n_h=n_h, n_z=n_z, k_min=k_min, k_max=k_max, n_k=n_k,
        )
        shape = grid.shape4 if has_k else grid.shape3
        values = np.zeros(shape, dtype=np.complex128)
        for line in fh:
            parts = line.split()
            if len(parts) != 6:
                continue
            j, s, m, t = int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])
            val = complex(float(parts[4]), float(parts[5]))
            if t < 0:
                values[j, s, m] = val
            else:
                values[t, j, s, m] = val
    return SemidiscreteField(grid, values), meta
