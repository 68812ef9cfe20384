"""Grid operators, Sobolev norms and the field dump format."""

import math

import numpy as np
import pytest

from convexify.errors import ContractError, StructuralError
from convexify.grid import (
    GridSpec,
    SemidiscreteField,
    dump_field,
    gradient_h,
    laplacian_h,
    load_field,
    norm_H02h_equivalent,
    norm_H2h,
    norm_H2h_k,
    norm_L2h,
    smooth3_per_axis,
)


@pytest.fixture
def grid():
    # 5x5x9 with 5 k-nodes: the small oracle stage
    return GridSpec(b=1.0, xi=0.5, d=1.0, n_h=5, n_z=9, k_min=1.0, k_max=2.0, n_k=5)


@pytest.fixture
def rng():
    return np.random.default_rng(123)


def mesh(grid):
    return np.meshgrid(grid.xy_nodes, grid.xy_nodes, grid.z_nodes, indexing="ij")


def random_field(grid, rng, with_k=False):
    shape = grid.shape4 if with_k else grid.shape3
    return SemidiscreteField(grid, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


# -- GridSpec ---------------------------------------------------------------

@pytest.mark.parametrize("bad", [
    dict(b=-1.0), dict(xi=0.0), dict(n_h=2), dict(n_z=4), dict(n_k=2),
    dict(k_min=2.0, k_max=1.0), dict(k_min=0.0),
])
def test_gridspec_invariants(bad):
    kwargs = dict(b=1.0, xi=0.5, d=1.0, n_h=5, n_z=9, k_min=1.0, k_max=2.0, n_k=5)
    kwargs.update(bad)
    with pytest.raises(StructuralError):
        GridSpec(**kwargs)


def test_gridspec_geometry(grid):
    assert grid.h == pytest.approx(2.0 * grid.b / (grid.n_h - 1))
    assert grid.z_nodes[0] == pytest.approx(-grid.xi)
    assert grid.z_nodes[-1] == pytest.approx(grid.d)
    assert grid.xy_nodes[0] == -grid.b and grid.xy_nodes[-1] == grid.b


def test_from_step_roundtrip():
    g = GridSpec.from_step(b=1.0, xi=0.5, d=1.0, h=0.5, n_z=9, k_min=1, k_max=2, n_k=3)
    assert g.n_h == 5
    with pytest.raises(StructuralError):
        GridSpec.from_step(b=1.0, xi=0.5, d=1.0, h=0.43, n_z=9, k_min=1, k_max=2, n_k=3)


def test_field_validation(grid):
    with pytest.raises(StructuralError):
        SemidiscreteField(grid, np.zeros((3, 3, 3)))
    bad = np.zeros(grid.shape3)
    bad[0, 0, 0] = np.nan
    with pytest.raises(StructuralError):
        SemidiscreteField(grid, bad)


# -- Laplacian and gradient -------------------------------------------------

def test_laplacian_linear_field_is_zero(grid):
    X, Y, Z = mesh(grid)
    lap = laplacian_h(SemidiscreteField(grid, X + 0j))
    assert np.abs(lap.values).max() == 0.0


def test_laplacian_quadratic_field(grid):
    X, Y, Z = mesh(grid)
    lap = laplacian_h(SemidiscreteField(grid, X**2 + Y**2 + Z**2 + 0j))
    interior = lap.values[1:-1, 1:-1, 1:-1]
    np.testing.assert_allclose(interior.real, 6.0, rtol=1e-12)
    np.testing.assert_allclose(interior.imag, 0.0, atol=1e-12)


def test_laplacian_matches_direct_stencil(grid):
    X, Y, Z = mesh(grid)
    f = np.sin(np.pi * X / grid.b) + 0j
    lap = laplacian_h(SemidiscreteField(grid, f)).values
    h2, dz2 = grid.h**2, grid.dz**2
    for j in range(1, grid.n_h - 1):
        for s in range(1, grid.n_h - 1):
            for m in range(1, grid.n_z - 1):
                direct = (
                    (f[j - 1, s, m] - 2 * f[j, s, m] + f[j + 1, s, m]) / h2
                    + (f[j, s - 1, m] - 2 * f[j, s, m] + f[j, s + 1, m]) / h2
                    + (f[j, s, m - 1] - 2 * f[j, s, m] + f[j, s, m + 1]) / dz2
                )
                assert abs(lap[j, s, m] - direct) <= 1e-13


def test_gradient_constant_and_affine(grid):
    X, Y, Z = mesh(grid)
    gx, gy, gz = gradient_h(SemidiscreteField(grid, np.full(grid.shape3, 7.0 + 0j)))
    for comp in (gx, gy, gz):
        assert np.abs(comp.values).max() == 0.0
    gx, gy, gz = gradient_h(SemidiscreteField(grid, 2 * X - 3 * Y + Z + 0j))
    I = np.s_[1:-1, 1:-1, 1:-1]
    np.testing.assert_allclose(gx.values[I], 2.0, rtol=1e-12)
    np.testing.assert_allclose(gy.values[I], -3.0, rtol=1e-12)
    np.testing.assert_allclose(gz.values[I], 1.0, rtol=1e-12)


def test_gradient_z_symbol(grid):
    # centered difference of e^{ikz} has the exact symbol i sin(k dz)/dz
    k = 1.7
    X, Y, Z = mesh(grid)
    f = np.exp(1j * k * Z) * np.ones_like(X)
    _, _, gz = gradient_h(SemidiscreteField(grid, f))
    I = np.s_[1:-1, 1:-1, 1:-1]
    expected = 1j * math.sin(k * grid.dz) / grid.dz * f[I]
    np.testing.assert_allclose(gz.values[I], expected, rtol=1e-12)


def test_operator_linearity(grid, rng):
    f, g = random_field(grid, rng), random_field(grid, rng)
    a, b = 0.37 - 1.2j, 2.5 + 0.1j
    combo = SemidiscreteField(grid, a * f.values + b * g.values)
    lhs = laplacian_h(combo).values
    rhs = a * laplacian_h(f).values + b * laplacian_h(g).values
    np.testing.assert_allclose(lhs, rhs, rtol=1e-13, atol=1e-13)
    for lc, fc, gc in zip(gradient_h(combo), gradient_h(f), gradient_h(g)):
        np.testing.assert_allclose(
            lc.values, a * fc.values + b * gc.values, rtol=1e-13, atol=1e-13
        )


# -- Norms ------------------------------------------------------------------

def z_weights_oracle(grid):
    w = np.full(grid.n_z, grid.dz)
    w[0] = w[-1] = grid.dz / 2
    return w


def h2h_oracle(f, grid):
    """Independent direct summation of the H^{2,h} norm."""
    dz = grid.dz
    vals = f.values if isinstance(f, SemidiscreteField) else f
    wz = z_weights_oracle(grid)
    total = 0.0
    for j in range(grid.n_h):
        for s in range(grid.n_h):
            col = vals[j, s, :]
            d1 = np.empty_like(col)
            d1[1:-1] = (col[2:] - col[:-2]) / (2 * dz)
            d1[0] = (-3 * col[0] + 4 * col[1] - col[2]) / (2 * dz)
            d1[-1] = (3 * col[-1] - 4 * col[-2] + col[-3]) / (2 * dz)
            d2 = np.empty_like(col)
            d2[1:-1] = (col[2:] - 2 * col[1:-1] + col[:-2]) / dz**2
            d2[0] = (2 * col[0] - 5 * col[1] + 4 * col[2] - col[3]) / dz**2
            d2[-1] = (2 * col[-1] - 5 * col[-2] + 4 * col[-3] - col[-4]) / dz**2
            for deriv in (col, d1, d2):
                total += grid.h**2 * float(np.sum(wz * np.abs(deriv) ** 2))
    return math.sqrt(total)


def test_norm_zero_and_constant(grid):
    assert norm_H2h(SemidiscreteField.zeros(grid)) == 0.0
    one = SemidiscreteField(grid, np.ones(grid.shape3, dtype=complex))
    expected = grid.h * grid.n_h * math.sqrt(grid.d + grid.xi)
    assert norm_H2h(one) == pytest.approx(expected, rel=1e-12)
    assert norm_L2h(one) == pytest.approx(expected, rel=1e-12)


def test_norm_H2h_matches_oracle(grid, rng):
    f = random_field(grid, rng)
    assert norm_H2h(f) == pytest.approx(h2h_oracle(f, grid), rel=1e-12)


def test_norm_monotonicity(grid, rng):
    for _ in range(5):
        f = random_field(grid, rng)
        assert norm_L2h(f) <= norm_H2h(f)


def test_norm_H2h_k_constant(grid):
    # k in [1, 2]: unit interval factor
    one = SemidiscreteField(grid, np.ones(grid.shape4, dtype=complex))
    one3 = SemidiscreteField(grid, np.ones(grid.shape3, dtype=complex))
    assert norm_H2h_k(one) == pytest.approx(norm_H2h(one3), rel=1e-12)


def test_norm_H2h_k_matches_oracle(grid, rng):
    f = random_field(grid, rng, with_k=True)
    wk = np.full(grid.n_k, grid.dk)
    wk[0] = wk[-1] = grid.dk / 2
    expected = math.sqrt(sum(
        wk[t] * h2h_oracle(f.values[t], grid) ** 2 for t in range(grid.n_k)
    ))
    assert norm_H2h_k(f) == pytest.approx(expected, rel=1e-12)


def admissible_field(grid, rng):
    vals = rng.standard_normal(grid.shape3) + 1j * rng.standard_normal(grid.shape3)
    vals[0] = vals[-1] = 0.0
    vals[:, 0] = vals[:, -1] = 0.0
    vals[:, :, 0] = vals[:, :, 1] = vals[:, :, -1] = 0.0
    return SemidiscreteField(grid, vals)


def test_norm_H02h_zero_and_oracle(grid, rng):
    assert norm_H02h_equivalent(SemidiscreteField.zeros(grid)) == 0.0
    f = admissible_field(grid, rng)
    from convexify import kernels

    lap = kernels.lap_h(f.values, 1 / grid.h**2, 1 / grid.dz**2)
    wz = z_weights_oracle(grid)
    expected = math.sqrt(grid.h**2 * float(np.sum(np.abs(lap) ** 2 * wz)))
    assert norm_H02h_equivalent(f) == pytest.approx(expected, rel=1e-12)


def test_norm_H02h_rejects_bad_boundary(grid, rng):
    f = random_field(grid, rng)
    with pytest.raises(ContractError):
        norm_H02h_equivalent(f)


def test_harmonic_zero_boundary_field_is_zero(grid):
    # Lap^h f = 0 with zero boundary forces f = 0, the degenerate case of
    # the equivalent norm
    f = SemidiscreteField.zeros(grid)
    assert norm_H02h_equivalent(f) == 0.0


def test_embedding_constant_is_stable(grid, rng):
    # sup-norm of value + z-slope bounded by a fitted multiple of the norm
    def batch_constant(n):
        best = 0.0
        for _ in range(n):
            f = random_field(grid, rng)
            from convexify.grid import z_deriv1

            sup = float(np.max(np.abs(f.values) + np.abs(z_deriv1(f.values, grid.dz))))
            best = max(best, sup / norm_H2h(f))
        return best

    c1 = batch_constant(50)
    c2 = batch_constant(50)
    assert c1 > 0 and c2 > 0
    assert max(c1, c2) / min(c1, c2) < 3.0


# -- Misc -------------------------------------------------------------------

def test_smooth3_constant_invariant():
    f = np.full((5, 5, 5), 2.5)
    np.testing.assert_allclose(smooth3_per_axis(f, passes=2), f)


def test_dump_load_roundtrip_3d(grid, rng, tmp_path):
    f = random_field(grid, rng)
    path = tmp_path / "field.txt"
    dump_field(f, path, meta={"stage": "test"})
    loaded, meta = load_field(path)
    assert meta["stage"] == "test"
    assert np.array_equal(loaded.values, f.values)
    assert loaded.grid.n_h == grid.n_h and loaded.grid.b == grid.b


def test_dump_load_roundtrip_4d(grid, rng, tmp_path):
    f = random_field(grid, rng, with_k=True)
    path = tmp_path / "field4.txt"
    dump_field(f, path)
    loaded, _ = load_field(path)
    assert np.array_equal(loaded.values, f.values)
    assert loaded.grid.k_min == grid.k_min and loaded.grid.n_k == grid.n_k


def test_load_rejects_other_files(tmp_path):
    path = tmp_path / "junk.txt"
    path.write_text("not a field\n")
    with pytest.raises(StructuralError):
        load_field(path)
