"""Synthetic multi-frequency backscatter data.

The total field for a prescribed coefficient c(x) = 1 + beta(x) solves the
Lippmann-Schwinger volume integral equation

    u(x) = e^{ikz} + k^2 * integral G_k(x - y) beta(y) u(y) dy,
    G_k(r) = e^{ik|r|} / (4 pi |r|),

which realizes the outgoing radiation condition exactly (no absorbing
layers to tune).  The scatterer support is voxelized on its own quadrature
grid, independent of the inversion grid; the singular self-cell uses the
closed-form integral of G_k over the equal-volume ball.  Solving the dense
collocation system per wavenumber and evaluating the volume potential
anywhere then gives boundary traces u and u_z on Gamma, interior fields
for oracle checks, and the defect of the uniform-medium boundary
heuristic on the lateral/top faces.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import DomainError, SolverError, StructuralError
from .grid import GridSpec, SemidiscreteField

_DIRECT_SOLVE_MAX = 4096  # dense LU below this many voxels, LGMRES above
_SUPPORT_CUTOFF = 1e-12   # voxels with beta below this are dropped


@dataclass(frozen=True)
class Inclusion:
    """One scatterer: an axis-aligned box or a ball with constant contrast.

    ``size`` holds full edge lengths for a box and (radius, 0, 0) for a
    ball.  The mollified edge profile ramps from 0 on the surface to 1 at
    ``smoothing`` inside, so the plateau value of c is exactly contrast.
    """

    shape: str
    center: tuple
    size: tuple
    contrast: float

    def __post_init__(self):
        if self.shape not in ("box", "ball"):
            raise DomainError(f"inclusion shape must be 'box' or 'ball', got {self.shape!r}")
        if self.contrast < 1.0:
            raise DomainError(f"inclusion contrast must be >= 1, got {self.contrast}")

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        if self.shape == "box":
            half = 0.5 * np.asarray(self.size, dtype=float)
        else:
            half = np.full(3, float(self.size[0]))
        return c - half, c + half


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


@dataclass(frozen=True)
class Scene:
    """Coefficient model c(x) = 1 + beta(x), beta >= 0, vacuum outside Omega.

    ``smoothing`` is the mollification width of inclusion edges;
    ``quad_step`` the voxel size of the scattering quadrature grid.
    """

    inclusions: tuple = field(default_factory=tuple)
    smoothing: float = 0.1
    quad_step: float = 0.05

    def __post_init__(self):
        if self.smoothing <= 0:
            raise DomainError(f"smoothing width must be positive, got {self.smoothing}")
        if self.quad_step <= 0:
            raise DomainError(f"quad_step must be positive, got {self.quad_step}")
        object.__setattr__(self, "inclusions", tuple(self.inclusions))

    def beta(self, points):
        """Contrast beta at an (N, 3) array of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(pts))
        w = self.smoothing
        for inc in self.inclusions:
            c = np.asarray(inc.center, dtype=float)
            if inc.shape == "box":
                half = 0.5 * np.asarray(inc.size, dtype=float)
                prof = np.ones(len(pts))
                for ax in range(3):
                    t = pts[:, ax] - c[ax]
                    prof = prof * _smoothstep((t + half[ax]) / w)
                    prof = prof * _smoothstep((half[ax] - t) / w)
            else:
                r = np.linalg.norm(pts - c, axis=1)
                prof = _smoothstep((float(inc.size[0]) - r) / w)
            out += (inc.contrast - 1.0) * prof
        return out

    def max_contrast(self):
        return max((inc.contrast for inc in self.inclusions), default=1.0)

    def validate_inside(self, grid):
        for inc in self.inclusions:
            lo, hi = inc.bounds()
            if (lo[0] < -grid.b or hi[0] > grid.b or lo[1] < -grid.b or hi[1] > grid.b
                    or lo[2] < -grid.xi or hi[2] > grid.d):
                raise StructuralError(
                    f"inclusion support [{lo}, {hi}] is not contained in the domain"
                )


def _quadrature_voxels(scene):
    """Voxel centers, volume and beta over the union of inclusion supports."""
    if not scene.inclusions:
        return np.zeros((0, 3)), 0.0, np.zeros(0)
    los, his = zip(*(inc.bounds() for inc in scene.inclusions))
    lo = np.min(np.array(los), axis=0)
    hi = np.max(np.array(his), axis=0)
    step = scene.quad_step
    counts = [max(2, int(math.ceil((hi[ax] - lo[ax]) / step))) for ax in range(3)]
    axes = [lo[ax] + (hi[ax] - lo[ax]) * (np.arange(n) + 0.5) / n for ax, n in zip(range(3), counts)]
    vol = float(np.prod([(hi[ax] - lo[ax]) / n for ax, n in zip(range(3), counts)]))
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    beta = scene.beta(centers)
    keep = beta > _SUPPORT_CUTOFF
    return centers[keep], vol, beta[keep]


def _self_term(k, vol):
    """Integral of G_k over the equal-volume ball centered on the singularity."""
    a = (3.0 * vol / (4.0 * math.pi)) ** (1.0 / 3.0)
    return (np.exp(1j * k * a) * (1.0 - 1j * k * a) - 1.0) / k**2


def _ball_kernel(dist, k, vol):
    """Integral of G_k over the equal-volume ball at distance dist.

    Each voxel is smeared into the ball of the same volume (radius a), which
    keeps the kernel C^1 in the evaluation point; the radial mean over the
    ball handles the singular self-cell as the dist -> 0 limit.  Outside the
    ball this is vol * G_k(dist) times 3 j_1(ka)/(ka), the usual smearing
    factor (-> 1 as ka -> 0).
    """
    a = (3.0 * vol / (4.0 * math.pi)) ** (1.0 / 3.0)
    rho = np.maximum(np.asarray(dist, dtype=float), 1e-9 * a)
    outside = rho >= a
    out = np.empty(rho.shape, dtype=np.complex128)
    out[outside] = (
        np.exp(1j * k * rho[outside]) / rho[outside]
        * (math.sin(k * a) - k * a * math.cos(k * a)) / k**3
    )
    if np.any(~outside):
        ri = rho[~outside]
        term1 = np.exp(1j * k * ri) * (np.sin(k * ri) - k * ri * np.cos(k * ri)) / (ri * k**3)
        term2 = (
            np.sin(k * ri) / (k * ri * k**2)
            * (np.exp(1j * k * a) * (1.0 - 1j * k * a) - np.exp(1j * k * ri) * (1.0 - 1j * k * ri))
        )
        out[~outside] = term1 + term2
    return out


def assemble_scatter_system(scene, k):
    """Dense collocation system (I - k^2 G B) u = u_i on the scatterer voxels.

    Returns (matrix, centers, beta, vol).  Exposed for the reciprocity
    diagnostics; solve_forward uses it internally.
    """
    if k <= 0:
        raise DomainError(f"wavenumber must be positive, got {k}")
    centers, vol, beta = _quadrature_voxels(scene)
    n = len(centers)
    if n == 0:
        return np.zeros((0, 0), dtype=np.complex128), centers, beta, vol
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    G = _ball_kernel(dist, k, vol)
    np.fill_diagonal(G, _self_term(k, vol))
    M = np.eye(n, dtype=np.complex128) - k**2 * G * beta[None, :]
    return M, centers, beta, vol


def _solve_scatter(scene, k, rtol=1e-8, maxiter=2000):
    """Field on the scatterer voxels: (centers, vol, beta, u_voxels)."""
    M, centers, beta, vol = assemble_scatter_system(scene, k)
    n = len(centers)
    if n == 0:
        return centers, vol, beta, np.zeros(0, dtype=np.complex128)
    rhs = np.exp(1j * k * centers[:, 2])
    if n <= _DIRECT_SOLVE_MAX:
        u = np.linalg.solve(M, rhs)
    else:
        u, info = spla.lgmres(M, rhs, rtol=rtol, atol=0.0, maxiter=maxiter)
        if info != 0:
            res = np.linalg.norm(M @ u - rhs) / np.linalg.norm(rhs)
            raise SolverError(
                f"scattering solve did not converge at k={k} (info={info})", residual=res,
            )
    res = float(np.linalg.norm(M @ u - rhs) / np.linalg.norm(rhs))
    if res > rtol:
        raise SolverError(f"scattering solve residual {res:.3e} exceeds {rtol:.1e}", residual=res)
    return centers, vol, beta, u


def _potential(points, centers, vol, beta, u, k, want_dz=False, chunk=2048):
    """Volume potential k^2 sum_n K(x, y_n) beta_n u_n and optionally its
    z-derivative, evaluated at an (N, 3) array of points."""
    n_pts = len(points)
    out = np.zeros(n_pts, dtype=np.complex128)
    out_dz = np.zeros(n_pts, dtype=np.complex128) if want_dz else None
    if len(centers) == 0:
        return (out, out_dz) if want_dz else out
    a = (3.0 * vol / (4.0 * math.pi)) ** (1.0 / 3.0)
    src = beta * u
    for lo in range(0, n_pts, chunk):
        pts = points[lo:lo + chunk]
        diff = pts[:, None, :] - centers[None, :, :]
        dist = np.linalg.norm(diff, axis=2)
        K = _ball_kernel(dist, k, vol)
        out[lo:lo + chunk] = k**2 * (K @ src)
        if want_dz:
            # only valid at points clear of the scatterer (the Gamma traces)
            near = dist < a
            dist_safe = np.where(near, 1.0, dist)
            dKdz = K * (1j * k - 1.0 / dist_safe) * diff[:, :, 2] / dist_safe
            dKdz[near] = 0.0
            out_dz[lo:lo + chunk] = k**2 * (dKdz @ src)
    return (out, out_dz) if want_dz else out


def solve_forward(scene, k, grid):
    """Total field u = u_i + u_s on the grid for one wavenumber."""
    scene.validate_inside(grid)
    centers, vol, beta, u_vox = _solve_scatter(scene, k)
    xy = grid.xy_nodes
    X, Y, Z = np.meshgrid(xy, xy, grid.z_nodes, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    u = np.exp(1j * k * pts[:, 2]) + _potential(pts, centers, vol, beta, u_vox, k)
    return SemidiscreteField(grid, u.reshape(grid.shape3))


def scattered_at(scene, k, points):
    """Scattered field u_s at arbitrary points (far-field diagnostics)."""
    centers, vol, beta, u_vox = _solve_scatter(scene, k)
    return _potential(np.atleast_2d(np.asarray(points, dtype=float)), centers, vol, beta, u_vox, k)


@dataclass
class ForwardSolution:
    """All per-wavenumber products of a forward sweep.

    fields: total field u on the grid, shape (n_k, n_h, n_h, n_z)
    g0_clean, g1_clean: exact traces of u and u_z on Gamma, (n_k, n_h, n_h)
    lateral_defect: per-k relative deviation of u from e^{ikz} on the
        lateral/top boundary nodes (the error of the uniform-medium
        boundary heuristic used by the inverse stage)
    """

    grid: GridSpec
    fields: np.ndarray
    g0_clean: np.ndarray
    g1_clean: np.ndarray
    lateral_defect: np.ndarray


def simulate(scene, grid, threads=1):
    """Forward sweep over the whole wavenumber grid.

    Solves per wavenumber are independent; ``threads`` caps the worker
    count.  Results are assembled by k-index, so the output is identical
    at any thread count.
    """
    scene.validate_inside(grid)
    n_k, n_h = grid.n_k, grid.n_h
    fields = np.zeros(grid.shape4, dtype=np.complex128)
    g0 = np.zeros((n_k, n_h, n_h), dtype=np.complex128)
    g1 = np.zeros((n_k, n_h, n_h), dtype=np.complex128)
    defect = np.zeros(n_k)

    xy = grid.xy_nodes
    XG, YG = np.meshgrid(xy, xy, indexing="ij")
    gamma_pts = np.stack(
        [XG.ravel(), YG.ravel(), np.full(n_h * n_h, -grid.xi)], axis=1
    )
    X, Y, Z = np.meshgrid(xy, xy, grid.z_nodes, indexing="ij")
    vol_pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    lateral = _lateral_top_mask(grid).ravel()

    def solve_one(k):
        centers, vol, beta, u_vox = _solve_scatter(scene, k)
        u = np.exp(1j * k * vol_pts[:, 2]) + _potential(vol_pts, centers, vol, beta, u_vox, k)
        us_g, us_gz = _potential(gamma_pts, centers, vol, beta, u_vox, k, want_dz=True)
        inc = np.exp(-1j * k * grid.xi)
        uinc = np.exp(1j * k * vol_pts[:, 2])
        dev = np.abs(u - uinc)[lateral]
        d = float(np.sqrt(np.sum(dev**2) / np.sum(np.abs(uinc[lateral]) ** 2)))
        return (u.reshape(grid.shape3), (inc + us_g).reshape(n_h, n_h),
                (1j * k * inc + us_gz).reshape(n_h, n_h), d)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve_one, grid.k_nodes))
    else:
        results = [solve_one(k) for k in grid.k_nodes]
    for t, (u, trace0, trace1, d) in enumerate(results):
        fields[t] = u
        g0[t] = trace0
        g1[t] = trace1
        defect[t] = d
    return ForwardSolution(grid=grid, fields=fields, g0_clean=g0, g1_clean=g1,
                           lateral_defect=defect)


def _lateral_top_mask(grid):
    m = np.zeros(grid.shape3, dtype=bool)
    m[0, :, :] = m[-1, :, :] = True
    m[:, 0, :] = m[:, -1, :] = True
    m[:, :, -1] = True
    return m


@dataclass
class MeasuredBoundaryData:
    """Backscatter traces on Gamma per wavenumber, with the applied noise.

    g0, g1 carry the (possibly noisy) Dirichlet/Neumann traces; the clean
    twins are kept when the data was synthesized in-process (None after a
    file read).
    """

    grid: GridSpec
    delta: float
    seed: int
    g0: np.ndarray
    g1: np.ndarray
    g0_clean: np.ndarray = None
    g1_clean: np.ndarray = None
    lateral_defect: np.ndarray = None

    def __post_init__(self):
        shape = (self.grid.n_k, self.grid.n_h, self.grid.n_h)
        if self.g0.shape != shape or self.g1.shape != shape:
            raise StructuralError(
                f"trace shape {self.g0.shape} does not match grid shape {shape}"
            )
        if not (0.0 <= self.delta < 1.0):
            raise DomainError(f"noise level must lie in [0, 1), got {self.delta}")


def _unit_disc_noise(rng, shape):
    r = np.sqrt(rng.uniform(size=shape))
    theta = rng.uniform(0.0, 2.0 * math.pi, size=shape)
    return r * np.exp(1j * theta)


def synthesize_dataset(scene, grid, delta, seed, solution=None):
    """Traces of the forward solutions on Gamma with multiplicative noise.

    Every sample is scaled by (1 + delta * zeta), zeta uniform on the unit
    disc; the draw order (all g0 samples in C order, then all g1) is fixed,
    so the dataset is a deterministic function of (scene, grid, delta, seed).
    A precomputed ForwardSolution can be passed to reuse the expensive sweep.
    """
    if not (0.0 <= delta < 1.0):
        raise DomainError(f"noise level must lie in [0, 1), got {delta}")
    if solution is None:
        solution = simulate(scene, grid)
    rng = np.random.default_rng(seed)
    shape = solution.g0_clean.shape
    g0 = solution.g0_clean * (1.0 + delta * _unit_disc_noise(rng, shape))
    g1 = solution.g1_clean * (1.0 + delta * _unit_disc_noise(rng, shape))
    return MeasuredBoundaryData(
        grid=grid, delta=delta, seed=seed, g0=g0, g1=g1,
        g0_clean=solution.g0_clean.copy(), g1_clean=solution.g1_clean.copy(),
        lateral_defect=solution.lateral_defect.copy(),
    )


# ---------------------------------------------------------------------------
# Dataset files: header (grid, k-grid, delta, seed) + "g0|g1 t j s re im"
# rows; floats at 17 significant digits for a bit-exact round trip.
# ---------------------------------------------------------------------------

_MAGIC = "# convexify dataset v1"


def _fmt(x):
    return f"{x:.17e}"


def write_dataset(data, path):
    g = data.grid
    lines = [_MAGIC]
    for key, val in (
        ("n_h", g.n_h), ("n_z", g.n_z), ("n_k", g.n_k),
    ):
        lines.append(f"{key} {val}")
    for key, val in (
        ("b", g.b), ("xi", g.xi), ("d", g.d),
        ("k_min", g.k_min), ("k_max", g.k_max), ("delta", data.delta),
    ):
        lines.append(f"{key} {_fmt(val)}")
    lines.append(f"seed {data.seed}")
    if data.lateral_defect is not None:
        for t, v in enumerate(data.lateral_defect):
            lines.append(f"lateral_defect {t} {_fmt(v)}")
    lines.append("data")
    for name, arr in (("g0", data.g0), ("g1", data.g1)):
        for t in range(g.n_k):
            for j in range(g.n_h):
                for s in range(g.n_h):
                    v = arr[t, j, s]
                    lines.append(f"{name} {t} {j} {s} {_fmt(v.real)} {_fmt(v.imag)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dataset(path):
    with open(path) as fh:
        if fh.readline().rstrip("\n") != _MAGIC:
            raise StructuralError(f"{path} is not a convexify dataset file")
        header = {}
        defects = {}
        for line in fh:
            line = line.rstrip("\n")
            if line == "data":
                break
            key, _, rest = line.partition(" ")
            if key == "lateral_defect":
                t, _, val = rest.partition(" ")
                defects[int(t)] = float(val)
            else:
                header[key] = rest
        grid = GridSpec(
            b=float(header["b"]), xi=float(header["xi"]), d=float(header["d"]),
            n_h=int(header["n_h"]), n_z=int(header["n_z"]),
            k_min=float(header["k_min"]), k_max=float(header["k_max"]),
            n_k=int(header["n_k"]),
        )
        shape = (grid.n_k, grid.n_h, grid.n_h)
        g0 = np.zeros(shape, dtype=np.complex128)
        g1 = np.zeros(shape, dtype=np.complex128)
        for line in fh:
            parts = line.split()
            if len(parts) != 6:
                continue
            arr = g0 if parts[0] == "g0" else g1
            t, j, s = int(parts[1]), int(parts[2]), int(parts[3])
            arr[t, j, s] = complex(float(parts[4]), float(parts[5]))
    defect = None
    if defects:
        defect = np.array([defects[t] for t in range(grid.n_k)])
    return MeasuredBoundaryData(
        grid=grid, delta=float(header["delta"]), seed=int(header["seed"]),
        g0=g0, g1=g1, lateral_defect=defect,
    )
