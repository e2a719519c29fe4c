import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpns.errors import (
    DimensionMismatch,
    GridTooCoarse,
    InvalidFieldData,
    InvalidParameter,
    InvalidTime,
    MeanModeNotZero,
    UnsupportedScale,
)
from tpns.spectral import (
    Grid,
    SpectralField,
    Trajectory,
    divergence,
    gradient,
    heat_propagate,
    inverse_laplacian,
    laplacian,
    leray_project,
    nonlinear_tensor_div,
    perp_gradient,
    random_field,
    read_snapshot,
    sample_function,
    scale_field,
    tensor_div_coeffs,
    write_snapshot,
)

TWO_PI = 2 * math.pi


@pytest.fixture
def g2():
    return Grid(2, TWO_PI, 32)


def test_grid_validation():
    with pytest.raises(InvalidParameter):
        Grid(4, 1.0, 16)
    with pytest.raises(InvalidParameter):
        Grid(2, -1.0, 16)
    with pytest.raises(InvalidParameter):
        Grid(2, 1.0, 15)
    g = Grid(2, 4 * math.pi, 16)
    assert g.fundamental == pytest.approx(0.5)
    assert g.k_nyquist == pytest.approx(4.0)
    assert g.with_box_length(TWO_PI).fundamental == pytest.approx(1.0)


def test_unit_plane_wave_has_unit_coefficient(g2):
    u = sample_function(g2, lambda x, y: np.cos(3 * x))
    c = u.coeffs[0]
    assert c[3, 0] == pytest.approx(0.5)
    assert c[-3, 0] == pytest.approx(0.5)
    assert np.sum(np.abs(c) > 1e-14) == 2


def test_roundtrip_and_imag_residual(g2):
    u = random_field(g2, 3)
    back = SpectralField.from_physical(g2, u.to_physical())
    assert np.max(np.abs(back.coeffs - u.coeffs)) < 1e-14
    assert u.imag_residual() < 1e-13


def test_invalid_inputs(g2):
    bad = np.zeros((2,) + g2.shape)
    bad[0, 0, 0] = np.nan
    with pytest.raises(InvalidFieldData):
        SpectralField.from_physical(g2, bad)
    with pytest.raises(DimensionMismatch):
        SpectralField(g2, np.zeros((2, 8, 8)))
    with pytest.raises(InvalidTime):
        heat_propagate(random_field(g2, 0), -1.0)


def test_leray_single_mode_example(g2):
    c = np.zeros((2,) + g2.shape, complex)
    c[:, 1, 0] = [1.0, 1.0]
    c[:, -1, 0] = [1.0, 1.0]
    out = leray_project(SpectralField(g2, c)).coeffs
    assert np.allclose(out[:, 1, 0], [0.0, 1.0])
    assert np.allclose(out[:, -1, 0], [0.0, 1.0])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.sampled_from([2, 3]))
def test_leray_is_idempotent_and_solenoidal(seed, dim):
    grid = Grid(dim, TWO_PI, 16)
    u = random_field(grid, seed, divergence_free=False)
    p = leray_project(u)
    pp = leray_project(p)
    scale = np.max(np.abs(p.coeffs))
    assert np.max(np.abs(pp.coeffs - p.coeffs)) <= 1e-13 * scale
    div = divergence(p).coeffs
    assert np.max(np.abs(div)) <= 1e-12 * scale * grid.k_nyquist
    # P is an orthogonal projection: u - Pu is orthogonal to Pu
    assert abs((u - p).inner(p)) <= 1e-12 * u.l2_norm() ** 2


def test_divergence_matches_finite_differences():
    grid = Grid(2, TWO_PI, 128)
    u = sample_function(grid, lambda x, y: np.stack([np.sin(x) * np.cos(2 * y), np.exp(np.sin(y)) * np.cos(x)]))
    phys = u.to_physical()
    h = grid.L / grid.N

    def d(f, axis):
        # fourth-order central difference
        return (-np.roll(f, -2, axis) + 8 * np.roll(f, -1, axis) - 8 * np.roll(f, 1, axis) + np.roll(f, 2, axis)) / (12 * h)

    fd = d(phys[0], 0) + d(phys[1], 1)
    spec = divergence(u).to_physical()[0]
    assert np.max(np.abs(fd - spec)) < 1e-5


def test_gradient_and_perp_gradient(g2):
    s = sample_function(g2, lambda x, y: np.cos(x + 2 * y))
    gr = gradient(s).to_physical()
    x, y = g2.coords
    assert np.allclose(gr[0], -np.sin(x + 2 * y), atol=1e-12)
    assert np.allclose(gr[1], -2 * np.sin(x + 2 * y), atol=1e-12)
    pg = perp_gradient(s).to_physical()
    assert np.allclose(pg[0], 2 * np.sin(x + 2 * y), atol=1e-12)
    assert np.allclose(pg[1], -np.sin(x + 2 * y), atol=1e-12)
    assert np.max(np.abs(divergence(perp_gradient(s)).coeffs)) < 1e-13


def test_laplacian_inverse(g2):
    u = random_field(g2, 5)
    back = laplacian(inverse_laplacian(u)) * -1.0
    assert np.max(np.abs(back.coeffs - u.coeffs)) < 1e-14
    with pytest.raises(MeanModeNotZero):
        inverse_laplacian(sample_function(g2, lambda x, y: 1.0 + np.cos(x)))


def test_heat_single_mode(g2):
    u = sample_function(g2, lambda x, y: np.stack([np.sin(y), 0 * x]))
    out = heat_propagate(u, math.log(2.0))
    assert np.allclose(out.to_physical(), 0.5 * u.to_physical(), atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), s=st.floats(0.0, 0.5), t=st.floats(0.0, 0.5))
def test_heat_semigroup_law(seed, s, t):
    grid = Grid(2, TWO_PI, 16)
    u = random_field(grid, seed)
    lhs = heat_propagate(heat_propagate(u, s), t).coeffs
    rhs = heat_propagate(u, s + t).coeffs
    assert np.max(np.abs(lhs - rhs)) <= 1e-14 * np.max(np.abs(u.coeffs))


def test_tensor_div_two_mode_oracle():
    # u = (cos 2y, cos x) gives u.grad u = (-2 cos x sin 2y, -sin x cos 2y); projecting each
    # wave sin(x +- 2y) by hand yields the vectors below
    grid = Grid(2, TWO_PI, 16)
    u = sample_function(grid, lambda x, y: np.stack([np.cos(2 * y), np.cos(x)]))
    out = nonlinear_tensor_div(u, u).to_physical()
    x, y = grid.coords
    a, b = np.sin(x + 2 * y), np.sin(x - 2 * y)
    expect = np.stack([-0.6 * a + 0.6 * b, 0.3 * a + 0.3 * b])
    assert np.max(np.abs(out - expect)) < 1e-13


def test_tensor_div_shear_flow_vanishes(g2):
    u = sample_function(g2, lambda x, y: np.stack([np.sin(3 * y), 0 * x]))
    assert np.max(np.abs(nonlinear_tensor_div(u, u).coeffs)) < 1e-15


def test_tensor_div_energy_orthogonality(g2):
    # (u . grad u, u) = 0 for solenoidal u, up to dealiasing of the product
    u = random_field(g2, 11, k_max=0.4 * g2.k_dealias)
    n = nonlinear_tensor_div(u, u)
    assert abs(n.inner(u)) < 1e-12 * n.l2_norm() * u.l2_norm()


def test_tensor_div_symmetric_path_matches_general(g2):
    u = random_field(g2, 2)
    a = tensor_div_coeffs(g2, u.coeffs)
    b = tensor_div_coeffs(g2, u.coeffs, u.coeffs.copy())
    assert np.max(np.abs(a - b)) < 1e-15


def test_random_field_is_resolution_independent():
    k = 3.0
    a = random_field(Grid(2, TWO_PI, 16), 7, k_max=k).to_physical()
    b = random_field(Grid(2, TWO_PI, 32), 7, k_max=k).to_physical()
    assert np.max(np.abs(a - b[:, ::2, ::2])) < 1e-13


def test_random_field_properties(g2):
    u = random_field(g2, 1, rms=2.0)
    assert np.sum(np.abs(u.coeffs) ** 2) == pytest.approx(4.0)
    assert u.mean_mode_zeroed
    assert np.max(np.abs(u.coeffs[:, ~g2.dealias_mask])) == 0
    with pytest.raises(GridTooCoarse):
        random_field(g2, 1, k_max=100.0)


def test_scale_field_box_rescale_moves_blocks(g2):
    u = sample_function(g2, lambda x, y: np.stack([np.sin(2 * y), 0 * x]))
    res = scale_field(u, 2.0)
    assert res.dropped_modes == 0
    assert res.field.grid.L == pytest.approx(math.pi)
    x, y = res.field.grid.coords
    assert np.allclose(res.field.to_physical()[0], 2 * np.sin(4 * y), atol=1e-13)


def test_scale_field_fixed_lattice(g2):
    u = sample_function(g2, lambda x, y: np.stack([np.sin(2 * y), 0 * x]))
    res = scale_field(u, 2.0, rescale_box=False)
    x, y = g2.coords
    assert np.allclose(res.field.to_physical()[0], 2 * np.sin(4 * y), atol=1e-13)
    big = sample_function(g2, lambda x, y: np.stack([np.sin(10 * y), 0 * x]))
    lost = scale_field(big, 2.0, rescale_box=False)
    assert lost.dropped_modes == 2
    assert lost.dropped_energy_fraction == pytest.approx(1.0)
    down = scale_field(res.field, 0.5, rescale_box=False)
    assert np.allclose(down.field.coeffs, u.coeffs, atol=1e-15)


def test_scale_field_rejects_non_dyadic(g2):
    with pytest.raises(UnsupportedScale):
        scale_field(random_field(g2, 0), 3.0)
    assert scale_field(random_field(g2, 0), 1.0).field.coeffs.shape == (2,) + g2.shape


def test_snapshot_roundtrip(tmp_path, g2):
    u = random_field(g2, 9)
    p = tmp_path / "u.bnsf"
    write_snapshot(p, u)
    v = read_snapshot(p)
    assert v.grid == g2
    assert np.array_equal(v.coeffs, u.coeffs)
    p.write_bytes(b"XXXX" + p.read_bytes()[4:])
    with pytest.raises(InvalidFieldData):
        read_snapshot(p)


def test_trajectory_stack_roundtrip(g2):
    fields = [random_field(g2, s) for s in range(4)]
    tr = Trajectory(g2, 0.5, 0.25, fields)
    assert tr.t1 == pytest.approx(1.25)
    back = Trajectory.from_stack(g2, tr.t0, tr.dt, tr.stacked())
    assert np.array_equal(back.stacked(), tr.stacked())
    assert np.allclose(tr.times, [0.5, 0.75, 1.0, 1.25])
