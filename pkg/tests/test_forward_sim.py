"""Forward scattering solver: oracles, invariants, dataset files."""

import math

import numpy as np
import pytest

from convexify.errors import DomainError, StructuralError
from convexify.forward_sim import (
    Inclusion,
    MeasuredBoundaryData,
    Scene,
    _self_term,
    _solve_scatter,
    assemble_scatter_system,
    read_dataset,
    scattered_at,
    simulate,
    solve_forward,
    synthesize_dataset,
    write_dataset,
)
from convexify.grid import GridSpec


@pytest.fixture(scope="module")
def grid():
    return GridSpec(b=1.5, xi=0.5, d=1.0, n_h=9, n_z=11, k_min=6.322, k_max=6.638, n_k=3)


@pytest.fixture(scope="module")
def weak_ball():
    return Scene(
        inclusions=(Inclusion("ball", (0.0, 0.0, 0.3), (0.3, 0.0, 0.0), 1.01),),
        smoothing=0.08, quad_step=0.06,
    )


def incident(grid, k):
    return np.exp(1j * k * grid.z_nodes)[None, None, :] * np.ones(grid.shape3)


def test_scene_validation():
    with pytest.raises(DomainError):
        Inclusion("ball", (0, 0, 0), (0.1, 0, 0), 0.9)
    with pytest.raises(DomainError):
        Inclusion("cone", (0, 0, 0), (0.1, 0.1, 0.1), 2.0)
    with pytest.raises(DomainError):
        Scene(smoothing=0.0)


def test_scene_outside_domain(grid):
    scene = Scene(inclusions=(Inclusion("ball", (0, 0, 0.9), (0.3, 0, 0), 2.0),))
    with pytest.raises(StructuralError):
        scene.validate_inside(grid)


def test_beta_plateau(weak_ball):
    # mollified profile reaches the plateau value at the center
    assert weak_ball.beta([[0.0, 0.0, 0.3]])[0] == pytest.approx(0.01, rel=1e-12)
    assert weak_ball.beta([[1.0, 1.0, 0.3]])[0] == 0.0


def test_empty_scene_gives_incident(grid):
    u = solve_forward(Scene(), 6.5, grid)
    np.testing.assert_array_equal(u.values, incident(grid, 6.5))


def test_negative_wavenumber_rejected():
    with pytest.raises(DomainError):
        assemble_scatter_system(Scene(), -1.0)


def test_born_oracle(grid, weak_ball):
    """First Born approximation oracle with its own midpoint quadrature."""
    k = 6.5
    u = solve_forward(weak_ball, k, grid)
    us = u.values - incident(grid, k)

    # independent quadrature: finer midpoint voxels, bare point kernel
    c = np.array([0.0, 0.0, 0.3])
    r_ball, step = 0.3, 0.04
    n = int(round(2 * r_ball / step))
    axes = [c[ax] - r_ball + step * (np.arange(n) + 0.5) for ax in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    beta = weak_ball.beta(pts)
    keep = beta > 0
    pts, beta = pts[keep], beta[keep]
    vol = step**3

    XG, YG, ZG = np.meshgrid(grid.xy_nodes, grid.xy_nodes, grid.z_nodes, indexing="ij")
    eval_pts = np.stack([XG.ravel(), YG.ravel(), ZG.ravel()], axis=1)
    born = np.zeros(len(eval_pts), dtype=complex)
    src = beta * np.exp(1j * k * pts[:, 2]) * vol
    for i, p in enumerate(eval_pts):
        d = np.linalg.norm(pts - p[None, :], axis=1)
        d = np.maximum(d, 0.5 * step)
        born[i] = k**2 * np.sum(np.exp(1j * k * d) / (4 * math.pi * d) * src)
    rel = np.abs(us.ravel() - born).max() / np.abs(born).max()
    assert rel <= 0.02, f"Born mismatch {rel:.3%}"


def test_far_field_decay(weak_ball):
    rs = np.geomspace(20.0, 200.0, 8)
    pts = np.stack([np.zeros_like(rs), np.zeros_like(rs), rs], axis=1)
    us = scattered_at(weak_ball, 6.5, pts)
    prod = np.abs(us) * rs
    spread = (prod.max() - prod.min()) / prod.mean()
    assert spread <= 0.05, f"1/r decay violated over a decade: spread {spread:.3%}"


def test_kernel_reciprocity(weak_ball):
    """The smeared Green kernel matrix is symmetric; the symmetrized system
    matrix is complex-symmetric."""
    k = 6.5
    M, centers, beta, vol = assemble_scatter_system(weak_ball, k)
    n = len(centers)
    G = (np.eye(n) - M) / k**2  # recover G * diag(beta)
    Gk = G / beta[None, :]
    np.testing.assert_allclose(Gk, Gk.T, rtol=1e-12, atol=1e-15)
    sqrtb = np.sqrt(beta)
    S = np.eye(n) - k**2 * sqrtb[:, None] * Gk * sqrtb[None, :]
    np.testing.assert_allclose(S, S.T, rtol=1e-12, atol=1e-15)


def test_optical_sign(weak_ball):
    k = 6.5
    centers, vol, beta, u = _solve_scatter(weak_ball, k)
    ui = np.exp(1j * k * centers[:, 2])
    extinction = float(np.imag(np.sum(beta * u * np.conj(ui))) * vol)
    scale = float(np.sum(beta * np.abs(u) * np.abs(ui)) * vol)
    assert extinction >= -1e-6 * scale


def test_quadrature_refinement(grid):
    scene_c = Scene(
        inclusions=(Inclusion("ball", (0.0, 0.0, 0.3), (0.2, 0.0, 0.0), 1.5),),
        smoothing=0.08, quad_step=0.05,
    )
    scene_f = Scene(inclusions=scene_c.inclusions, smoothing=0.08, quad_step=0.025)
    probe = np.array([[0.0, 0.0, -0.4]])
    k = 6.5
    coarse = scattered_at(scene_c, k, probe)[0]
    fine = scattered_at(scene_f, k, probe)[0]
    assert abs(abs(coarse) - abs(fine)) / abs(fine) < 0.01


def test_self_term_static_limit():
    vol = 0.05**3
    a = (3 * vol / (4 * math.pi)) ** (1 / 3)
    assert _self_term(1e-4, vol) == pytest.approx(a**2 / 2, rel=1e-4)


def test_uniform_medium_traces(grid):
    data = synthesize_dataset(Scene(), grid, 0.0, 7)
    for t, k in enumerate(grid.k_nodes):
        np.testing.assert_allclose(data.g0[t], np.exp(-1j * k * grid.xi), rtol=1e-14)
        np.testing.assert_allclose(data.g1[t], 1j * k * np.exp(-1j * k * grid.xi), rtol=1e-14)
    assert np.all(data.lateral_defect == 0.0)


def test_noise_bound_and_determinism(grid, weak_ball):
    sol = simulate(weak_ball, grid)
    noisy = synthesize_dataset(weak_ball, grid, 0.01, 5, solution=sol)
    rel = np.linalg.norm(noisy.g0 - noisy.g0_clean) / np.linalg.norm(noisy.g0_clean)
    assert rel <= 0.01
    again = synthesize_dataset(weak_ball, grid, 0.01, 5, solution=sol)
    np.testing.assert_array_equal(noisy.g0, again.g0)
    np.testing.assert_array_equal(noisy.g1, again.g1)
    other = synthesize_dataset(weak_ball, grid, 0.01, 6, solution=sol)
    assert not np.array_equal(noisy.g0, other.g0)


def test_threads_do_not_change_results(grid, weak_ball):
    one = simulate(weak_ball, grid, threads=1)
    four = simulate(weak_ball, grid, threads=4)
    np.testing.assert_array_equal(one.g0_clean, four.g0_clean)
    np.testing.assert_array_equal(one.fields, four.fields)


def test_delta_validation(grid):
    with pytest.raises(DomainError):
        synthesize_dataset(Scene(), grid, 1.5, 0)


def test_dataset_file_roundtrip(grid, weak_ball, tmp_path):
    sol = simulate(weak_ball, grid)
    data = synthesize_dataset(weak_ball, grid, 0.03, 11, solution=sol)
    path = tmp_path / "dataset.txt"
    write_dataset(data, path)
    back = read_dataset(path)
    np.testing.assert_array_equal(back.g0, data.g0)
    np.testing.assert_array_equal(back.g1, data.g1)
    np.testing.assert_array_equal(back.lateral_defect, data.lateral_defect)
    assert back.delta == data.delta and back.seed == data.seed
    assert back.grid == grid
    # a second write of the read data is byte-identical
    path2 = tmp_path / "dataset2.txt"
    write_dataset(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_trace_shape_validation(grid):
    with pytest.raises(StructuralError):
        MeasuredBoundaryData(
            grid=grid, delta=0.0, seed=0,
            g0=np.zeros((2, 2, 2), complex), g1=np.zeros((2, 2, 2), complex),
        )
