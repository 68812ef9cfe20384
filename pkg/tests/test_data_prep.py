"""Log-field chain, boundary functions and extension construction."""

import math

import numpy as np
import pytest

from convexify import kernels
from convexify.data_prep import (
    BoundaryFunctions,
    boundary_functions,
    build_extensions,
    compute_v_q,
    compute_w_field,
    compute_w_traces,
    k_derivative,
    log_unwrapped,
    log_unwrapped_volume,
    volumetric_vq,
)
from convexify.errors import UnwrapError
from convexify.forward_sim import Inclusion, Scene, simulate, solve_forward, synthesize_dataset
from convexify.grid import GridSpec


@pytest.fixture(scope="module")
def grid():
    return GridSpec(b=1.5, xi=0.5, d=1.0, n_h=9, n_z=15, k_min=6.322, k_max=6.638, n_k=5)


@pytest.fixture(scope="module")
def weak_data(grid):
    scene = Scene(
        inclusions=(Inclusion("ball", (0.0, 0.0, 0.3), (0.3, 0.0, 0.0), 1.01),),
        smoothing=0.08, quad_step=0.06,
    )
    sol = simulate(scene, grid)
    data = synthesize_dataset(scene, grid, 0.0, 1, solution=sol)
    return scene, sol, data


# -- w ----------------------------------------------------------------------

def test_w_uniform_medium(grid):
    k = grid.k_nodes[:, None, None]
    g0 = np.exp(-1j * k * grid.xi) * np.ones((grid.n_k, grid.n_h, grid.n_h))
    g1 = 1j * k * g0
    w0, w1 = compute_w_traces(g0, g1, grid)
    np.testing.assert_allclose(w0, 1.0, rtol=1e-14)
    np.testing.assert_allclose(w1, 0.0, atol=1e-13)


def test_w_scaled_incident(grid):
    # u = 2 e^{ikz}: w = 2 and w_z = 0 by the product-rule cancellation
    k = grid.k_nodes[:, None, None]
    g0 = 2.0 * np.exp(-1j * k * grid.xi) * np.ones((grid.n_k, grid.n_h, grid.n_h))
    g1 = 1j * k * g0
    w0, w1 = compute_w_traces(g0, g1, grid)
    np.testing.assert_allclose(w0, 2.0, rtol=1e-14)
    np.testing.assert_allclose(w1, 0.0, atol=1e-13)


def test_w_field_matches_division(grid, weak_data):
    _, sol, _ = weak_data
    w = compute_w_field(sol.fields, grid)
    t = 2
    k = grid.k_nodes[t]
    direct = sol.fields[t] / np.exp(1j * k * grid.z_nodes)[None, None, :]
    np.testing.assert_allclose(w[t], direct, rtol=1e-13)
    assert np.abs(w[t] - 1.0).max() < 0.1  # weak scatterer stays near 1


# -- unwrapped log ------------------------------------------------------------

def test_log_of_unit_w(grid):
    w = np.ones((grid.n_k, grid.n_h, grid.n_h), dtype=complex)
    lf = log_unwrapped(w, grid.k_nodes)
    np.testing.assert_array_equal(lf.values, 0.0)
    np.testing.assert_array_equal(lf.winding, 0)


def test_phase_ramp_spanning_3pi(grid):
    # phase grows by 3 pi across the k-grid: naive angles fold, the
    # unwrapped imaginary part must reproduce the ramp exactly
    theta = np.linspace(0.0, 3.0 * math.pi, grid.n_k)
    w = np.exp(1j * theta)[:, None, None] * np.ones((grid.n_k, grid.n_h, grid.n_h))
    lf = log_unwrapped(w, grid.k_nodes)
    # anchor takes the principal branch at k_max; the ramp is recovered up
    # to that global offset
    ramp = lf.values.imag[:, 0, 0]
    offset = ramp[-1] - theta[-1]
    np.testing.assert_allclose(ramp - offset, theta, atol=1e-12)
    assert np.any(lf.winding != 0)


def test_round_trip_on_simulated_data(grid, weak_data):
    _, _, data = weak_data
    w0, _ = compute_w_traces(data.g0, data.g1, grid)
    lf = log_unwrapped(w0, grid.k_nodes)
    np.testing.assert_allclose(np.exp(lf.values), w0, rtol=1e-10)


def test_degenerate_amplitude_raises(grid):
    w = np.ones((grid.n_k, grid.n_h, grid.n_h), dtype=complex)
    w[2, 3, 4] = 1e-14
    with pytest.raises(UnwrapError) as err:
        log_unwrapped(w, grid.k_nodes)
    assert err.value.sample == (2, 3, 4)


def test_rough_phase_raises(grid):
    rng = np.random.default_rng(0)
    w = np.exp(1j * rng.uniform(-math.pi, math.pi, (grid.n_k, grid.n_h, grid.n_h)))
    with pytest.raises(UnwrapError):
        log_unwrapped(w, grid.k_nodes)


# -- v and q ------------------------------------------------------------------

def test_vq_uniform(grid):
    w = np.ones((grid.n_k, grid.n_h, grid.n_h), dtype=complex)
    v, q = compute_v_q(log_unwrapped(w, grid.k_nodes))
    np.testing.assert_array_equal(v, 0.0)
    np.testing.assert_array_equal(q, 0.0)


def test_q_of_tail_profile(grid):
    # v = p/k gives q = -p/k^2 up to the k-stencil truncation O(dk^2)
    p0 = 0.37 - 0.21j
    k = grid.k_nodes
    v = (p0 / k)[:, None, None] * np.ones((grid.n_k, grid.n_h, grid.n_h))
    q = k_derivative(v, k)
    expected = (-p0 / k**2)[:, None, None]
    err = np.abs(q - expected).max()
    assert err <= 5.0 * abs(p0) * grid.dk**2 / grid.k_min**4 * 10


def test_q_second_order_in_dk():
    errs = []
    for n_k in (5, 9):
        g = GridSpec(b=1.0, xi=0.5, d=1.0, n_h=5, n_z=9, k_min=1.0, k_max=2.0, n_k=n_k)
        v = np.sin(g.k_nodes)[:, None, None] * np.ones((n_k, 1, 1))
        q = k_derivative(v, g.k_nodes)
        errs.append(np.abs(q[:, 0, 0] - np.cos(g.k_nodes)).max())
    # dk halves: error drops by ~4
    assert errs[1] <= 0.35 * errs[0]


def test_k_integral_consistency():
    # v(k) + int_k^kmax q - v(kmax) should vanish to O(dk^2)
    from convexify.convexifier import revcumtrapz

    errs = []
    for n_k in (6, 11):
        g = GridSpec(b=1.0, xi=0.5, d=1.0, n_h=5, n_z=9, k_min=1.0, k_max=2.0, n_k=n_k)
        v = np.sin(g.k_nodes)[:, None, None]
        q = k_derivative(v, g.k_nodes)
        resid = v + revcumtrapz(q, g.dk) - v[-1]
        errs.append(np.abs(resid).max())
    assert errs[1] <= 0.35 * errs[0]


# -- boundary functions -------------------------------------------------------

def test_boundary_functions_uniform(grid):
    data = synthesize_dataset(Scene(), grid, 0.0, 3)
    bf = boundary_functions(data)
    for arr in (bf.phi0, bf.phi1, bf.psi0, bf.psi1):
        np.testing.assert_allclose(arr, 0.0, atol=1e-12)


def test_psi0_matches_volumetric_oracle(grid, weak_data):
    _, sol, data = weak_data
    bf = boundary_functions(data)
    v, _ = volumetric_vq(sol.fields, grid)
    np.testing.assert_allclose(bf.psi0, v[-1][:, :, 0], atol=1e-10)


def test_phi0_is_k_derivative_of_v_traces(grid, weak_data):
    _, _, data = weak_data
    bf = boundary_functions(data)
    t = 2
    centered = (bf.v_traces[t + 1] - bf.v_traces[t - 1]) / (2 * grid.dk)
    np.testing.assert_allclose(bf.phi0[t], centered, rtol=1e-12, atol=1e-15)


# -- extensions ---------------------------------------------------------------

def _bf_from_arrays(grid, psi0, psi1, phi0=None, phi1=None):
    shape_k = (grid.n_k, grid.n_h, grid.n_h)
    zero_k = np.zeros(shape_k, dtype=complex)
    return BoundaryFunctions(
        phi0=zero_k if phi0 is None else phi0,
        phi1=zero_k if phi1 is None else phi1,
        psi0=psi0, psi1=psi1,
        v_traces=zero_k, vz_traces=zero_k,
    )


def test_extension_zero_data(grid):
    z = np.zeros((grid.n_h, grid.n_h), dtype=complex)
    ext = build_extensions(_bf_from_arrays(grid, z, z), grid)
    assert np.abs(ext.Q).max() == 0.0
    assert np.abs(ext.F).max() == 0.0


def test_extension_constant_data(grid):
    one = np.ones((grid.n_h, grid.n_h), dtype=complex)
    zero = np.zeros_like(one)
    ext = build_extensions(_bf_from_arrays(grid, one, zero), grid)
    inner = np.s_[2:-2, 2:-2]
    np.testing.assert_allclose(ext.Q[:, :, 0][inner], 1.0, rtol=1e-12)
    # cutoff endpoint: zero beyond 0.3 of the depth
    zstar = -grid.xi + 0.3 * (grid.d + grid.xi)
    beyond = grid.z_nodes >= zstar
    assert np.abs(ext.Q[:, :, beyond]).max() == 0.0
    # analytic Gamma slope of the profile is psi1 = 0 by construction
    # (chi'(-xi) = 0); the center column sits outside the lateral taper
    assert np.abs(ext.Q[4, 4, 0] - 1.0) < 1e-12


def test_extension_invariants_random(grid):
    rng = np.random.default_rng(5)
    psi0 = rng.standard_normal((grid.n_h, grid.n_h)) + 1j * rng.standard_normal((grid.n_h, grid.n_h))
    psi1 = rng.standard_normal((grid.n_h, grid.n_h)) + 1j * rng.standard_normal((grid.n_h, grid.n_h))
    phi0 = rng.standard_normal((grid.n_k, grid.n_h, grid.n_h)) + 0j
    phi1 = rng.standard_normal((grid.n_k, grid.n_h, grid.n_h)) + 0j
    ext = build_extensions(_bf_from_arrays(grid, psi0, psi1, phi0, phi1), grid)
    inner = np.s_[2:-2, 2:-2]
    np.testing.assert_allclose(ext.Q[:, :, 0][inner], psi0[inner], atol=1e-10)
    np.testing.assert_allclose(ext.F[:, :, :, 0][:, 2:-2, 2:-2], phi0[:, 2:-2, 2:-2], atol=1e-10)
    for face in (ext.Q[0], ext.Q[-1], ext.Q[:, 0], ext.Q[:, -1], ext.Q[:, :, -1]):
        assert np.abs(face).max() == 0.0
    for face in (ext.F[:, 0], ext.F[:, -1], ext.F[:, :, 0], ext.F[:, :, -1], ext.F[:, :, :, -1]):
        assert np.abs(face).max() == 0.0
    assert ext.boundary_layer_defect > 0.0  # nonzero data in the taper band


# -- chain identity -----------------------------------------------------------

def chain_residual(scene, grid, k):
    u = solve_forward(scene, k, grid)
    w = compute_w_field(u.values[None, ...], _single_k_grid(grid, k))
    lf = log_unwrapped_volume(w, np.array([k]))
    v = lf.values[0] / k**2
    pts = np.stack(
        np.meshgrid(grid.xy_nodes, grid.xy_nodes, grid.z_nodes, indexing="ij"), axis=-1
    ).reshape(-1, 3)
    beta = scene.beta(pts).reshape(grid.shape3)
    lap = kernels.lap_h(v, 1 / grid.h**2, 1 / grid.dz**2)
    gx, gy, gz = kernels.grad_h(v, 0.5 / grid.h, 0.5 / grid.dz)
    resid = lap + k**2 * (gx * gx + gy * gy + gz * gz) + 2j * k * gz + beta
    return np.abs(resid[1:-1, 1:-1, 1:-1]).max()


def _single_k_grid(grid, k):
    class _G:
        n_k = 1
        k_nodes = np.array([k])
        z_nodes = grid.z_nodes
    return _G()


def test_chain_identity_converges():
    k = 6.5
    coarse_scene = Scene(
        inclusions=(Inclusion("ball", (0, 0, 0.3), (0.2, 0, 0), 1.01),),
        smoothing=0.08, quad_step=0.05,
    )
    fine_scene = Scene(
        inclusions=coarse_scene.inclusions, smoothing=0.08, quad_step=0.025,
    )
    g_coarse = GridSpec(b=1.5, xi=0.5, d=1.0, n_h=9, n_z=15, k_min=6.3, k_max=6.7, n_k=3)
    g_fine = GridSpec(b=1.5, xi=0.5, d=1.0, n_h=17, n_z=29, k_min=6.3, k_max=6.7, n_k=3)
    r_coarse = chain_residual(coarse_scene, g_coarse, k)
    r_fine = chain_residual(fine_scene, g_fine, k)
    assert r_coarse < 1e-2
    assert r_fine <= 0.7 * r_coarse, (r_coarse, r_fine)


def test_outputs_deterministic(grid, weak_data):
    _, _, data = weak_data
    a = boundary_functions(data)
    b = boundary_functions(data)
    np.testing.assert_array_equal(a.phi0, b.phi0)
    np.testing.assert_array_equal(a.psi1, b.psi1)
