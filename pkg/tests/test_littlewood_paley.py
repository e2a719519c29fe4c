import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpns.errors import DimensionMismatch, InvalidParameter, MeanModeNotZero
from tpns.littlewood_paley import (
    NormSpec,
    TruncationWarning,
    besov_norm,
    besov_report,
    block_norms,
    bony_decomposition,
    bony_R,
    bony_T,
    chemin_lerner_norm,
    chemin_lerner_report,
    cutoff,
    dealiased_product,
    dyadic_block,
    lp_norm_physical,
    lp_profile,
    lsigma,
    make_partition,
    smooth_step,
    triple_norm,
)
from tpns.spectral import Grid, SpectralField, Trajectory, gradient, heat_propagate, random_field, sample_function

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def grid():
    return Grid(2, TWO_PI, 32)


@pytest.fixture(scope="module")
def part(grid):
    return make_partition(grid)


def test_profile_values():
    assert smooth_step(np.array([-1.0, 0.0, 0.5, 1.0, 2.0])).tolist() == [0.0, 0.0, 0.5, 1.0, 1.0]
    assert cutoff(np.array([0.0, 1.0, 1.5, 2.0])).tolist() == [1.0, 1.0, 0.5, 0.0]
    r = np.array([0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0])
    assert lp_profile(r) == pytest.approx([0.0, 0.0, 0.5, 1.0, 0.5, 0.0, 0.0])


def test_partition_range_covers_lattice(grid, part):
    assert part.j_min == 0
    assert 2.0**part.j_max >= np.max(grid.xi_abs[~grid.nyquist_mask])
    assert part.residual() <= 1e-12


@pytest.mark.parametrize("dim,N,L", [(2, 64, TWO_PI), (3, 16, TWO_PI), (2, 48, 32 * math.pi), (3, 24, 5.0)])
def test_partition_of_unity(dim, N, L):
    g = Grid(dim, L, N)
    assert make_partition(g).residual() <= 1e-12
    assert make_partition(g, sharp=True).residual() == 0.0


def test_blocks_sum_to_field(grid, part):
    u = random_field(grid, 4)
    total = sum((dyadic_block(u, int(j), part) for j in part.js), SpectralField.zeros(grid))
    assert np.max(np.abs(total.coeffs - u.coeffs)) < 1e-14


def test_out_of_range_block_warns(grid, part):
    u = random_field(grid, 4)
    with pytest.warns(TruncationWarning):
        z = dyadic_block(u, part.j_max + 3, part)
    assert not np.any(z.coeffs)


def test_partition_for_other_grid_rejected(grid):
    other = make_partition(Grid(2, TWO_PI, 16))
    with pytest.raises(DimensionMismatch):
        dyadic_block(random_field(grid, 0), 1, other)


def test_single_mode_besov_closed_form(grid, part):
    # |xi| = 4 sits where phi_2 = 1, so only block j = 2 is nonzero
    u = sample_function(grid, lambda x, y: np.stack([np.sin(4 * y), 0 * x]))
    l2 = math.sqrt(2 * math.pi**2)
    l4 = (3 / 8 * 4 * math.pi**2) ** 0.25
    for s in (-1.0, 0.0, 0.5):
        assert besov_norm(u, NormSpec(2, 1, s), part) == pytest.approx(2 ** (2 * s) * l2, rel=1e-12)
        assert besov_norm(u, NormSpec(4, 2, s), part) == pytest.approx(2 ** (2 * s) * l4, rel=1e-12)
    assert besov_norm(u, NormSpec(math.inf, 1, 0), part) == pytest.approx(1.0, rel=1e-12)


def test_lp_norm_matches_oversampled_quadrature(grid):
    u = random_field(grid, 8, k_max=7.0)
    # independent oracle: zero-pad the coefficients to 128 points per axis
    big = np.zeros((2, 128, 128), complex)
    idx = np.r_[0:16, 128 - 16:128]
    src = np.r_[0:16, 32 - 16:32]
    big[np.ix_([0, 1], idx, idx)] = u.coeffs[np.ix_([0, 1], src, src)]
    phys = np.real(np.fft.ifftn(big, axes=(1, 2))) * 128**2
    mag = np.sqrt(np.sum(phys**2, axis=0))
    for p in (1.0, 3.0, 4.0):
        oracle = (np.sum(mag**p) * (TWO_PI / 128) ** 2) ** (1 / p)
        tol = 1e-12 if p == 4.0 else 1e-3
        assert lp_norm_physical(u, p) == pytest.approx(oracle, rel=tol)


def test_p2_blocks_use_parseval_consistently(grid, part):
    u = random_field(grid, 2)
    fast = block_norms(u.coeffs, part, 2.0)
    slow = np.array([lp_norm_physical(dyadic_block(u, int(j), part), 2.0) for j in part.js])
    assert np.allclose(fast, slow, rtol=1e-12, atol=1e-15)


def test_sharp_partition_is_orthogonal(grid):
    sp = make_partition(grid, sharp=True)
    u = random_field(grid, 12)
    assert besov_norm(u, NormSpec(2, 2, 0), sp) == pytest.approx(u.l2_norm(), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 5000))
def test_almost_orthogonality(seed):
    g = Grid(2, TWO_PI, 32)
    u = random_field(g, seed)
    q = besov_norm(u, NormSpec(2, 2, 0), make_partition(g)) ** 2 / u.l2_norm() ** 2
    assert 0.5 <= q <= 1.0 + 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 5000), p=st.sampled_from([1.0, 2.0, 4.0]), s=st.floats(-1, 1))
def test_sigma_embedding_monotone(seed, p, s):
    g = Grid(2, TWO_PI, 16)
    part = make_partition(g)
    u = random_field(g, seed)
    vals = [besov_norm(u, NormSpec(p, sig, s), part) for sig in (1.0, 2.0, 4.0, math.inf)]
    assert all(a >= b * (1 - 1e-12) for a, b in zip(vals, vals[1:]))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 5000))
def test_bernstein_bounds_per_shell(seed):
    g = Grid(2, TWO_PI, 32)
    part = make_partition(g)
    u = random_field(g, seed, ncomp=1, divergence_free=False)
    for j in part.js:
        b = dyadic_block(u, int(j), part)
        n0 = b.l2_norm()
        if n0 == 0:
            continue
        n1 = gradient(b).l2_norm()
        assert 2.0 ** (j - 1) * n0 * (1 - 1e-12) <= n1 <= 2.0 ** (j + 1) * n0 * (1 + 1e-12)


def test_lsigma_basics():
    assert lsigma([3.0, 4.0], 2) == pytest.approx(5.0)
    assert lsigma([3.0, 4.0], math.inf) == 4.0
    assert lsigma([0.0, 0.0], 1) == 0.0
    assert lsigma([1e200, 1e200], 2) == pytest.approx(math.sqrt(2) * 1e200)


def test_norm_spec_validation():
    with pytest.raises(InvalidParameter):
        NormSpec(p=0.5)
    with pytest.raises(InvalidParameter):
        NormSpec(s=math.nan)
    assert NormSpec.critical(3, 2).s == pytest.approx(0.5)


def test_report_serialization_and_truncation(grid, part):
    top = sample_function(grid, lambda x, y: np.cos(15 * x + 15 * y))
    rep = besov_report(top, NormSpec(2, 1, 0), part)
    assert rep.truncation_warning
    d = rep.to_dict()
    assert d["r"] == "inf" and d["norm_kind"] == "besov"
    mid = sample_function(grid, lambda x, y: np.stack([np.sin(4 * y), 0 * x]))
    assert not besov_report(mid, NormSpec(2, 1, 0), part).truncation_warning


def _heat_traj(u, length, n):
    dt = length / (n - 1)
    return Trajectory(u.grid, 0.0, dt, [heat_propagate(u, k * dt) for k in range(n)])


def test_chemin_lerner_single_mode_decay(grid, part):
    u = sample_function(grid, lambda x, y: np.stack([np.sin(y), 0 * x]))
    tr = _heat_traj(u, 1.0, 1001)
    l2 = math.sqrt(2) * math.pi
    expect = l2 * math.sqrt((1 - math.exp(-2.0)) / 2)
    assert chemin_lerner_norm(tr, NormSpec(2, 1, 0, 2), part) == pytest.approx(expect, rel=1e-6)
    assert chemin_lerner_norm(tr, NormSpec(2, 1, 0, math.inf), part) == pytest.approx(l2, rel=1e-12)
    assert chemin_lerner_report(tr, NormSpec(2, 1, 0, 2), part).norm_kind == "chemin_lerner"


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 5000), r=st.sampled_from([1.0, 2.0, 4.0]))
def test_chemin_lerner_dominates_bochner_norm(seed, r):
    # Minkowski: L^r(I; B_{p,1}) <= L~^r(I; B_{p,1})
    g = Grid(2, TWO_PI, 16)
    part = make_partition(g)
    tr = _heat_traj(random_field(g, seed), 0.5, 41)
    spec = NormSpec(2, 1, 0, r)
    inner = np.array([besov_norm(s, spec, part) for s in tr.samples])
    boch = float(np.trapezoid(inner**r, dx=tr.dt)) ** (1 / r)
    assert boch <= chemin_lerner_norm(tr, spec, part) * (1 + 1e-12)


def test_triple_norm_stationary_single_mode(grid, part):
    delta = 0.25
    u = sample_function(grid, lambda x, y: np.stack([np.sin(2 * y), 0 * x]))
    tr = Trajectory(grid, 0.0, 0.5, [u, u, u])
    l2 = math.sqrt(2) * math.pi
    expect = l2 + 2 ** (delta**2) * l2 * 1.0 ** (delta**2 / 2) / delta
    assert triple_norm(tr, delta, part) == pytest.approx(expect, rel=1e-12)
    tr2 = Trajectory(grid, 0.0, 1.0, [u, u, u])
    expect2 = l2 + 2 ** (delta**2) * l2 * 2.0 ** (delta**2 / 2) / delta
    assert triple_norm(tr2, delta, part) == pytest.approx(expect2, rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 5000), a=st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3))
def test_triple_norm_homogeneous(seed, a):
    g = Grid(2, TWO_PI, 16)
    part = make_partition(g)
    tr = _heat_traj(random_field(g, seed), 0.5, 11)
    assert triple_norm(tr.scaled(a), 0.2, part) == pytest.approx(abs(a) * triple_norm(tr, 0.2, part), rel=1e-12)


def test_triple_norm_rejects_bad_delta(grid, part):
    tr = _heat_traj(random_field(grid, 0), 0.5, 3)
    with pytest.raises(InvalidParameter):
        triple_norm(tr, 0.5, part)


@pytest.fixture(scope="module")
def bgrid():
    return Grid(2, TWO_PI, 64)


def test_bony_low_high_pair(bgrid):
    part = make_partition(bgrid)
    f = sample_function(bgrid, lambda x, y: np.cos(x))
    g = sample_function(bgrid, lambda x, y: np.cos(16 * y))
    tfg, r, tgf = bony_decomposition(f, g, part)
    prod = dealiased_product(f, g)
    assert np.max(np.abs(tfg.coeffs - prod.coeffs)) < 1e-15
    assert np.max(np.abs(r.coeffs)) < 1e-15
    assert np.max(np.abs(tgf.coeffs)) < 1e-15
    assert np.max(np.abs(bony_T(f, g, part).coeffs - prod.coeffs)) < 1e-15


def test_bony_diagonal_pair_is_resonant(bgrid):
    part = make_partition(bgrid)
    f = sample_function(bgrid, lambda x, y: np.cos(4 * x))
    tff, r, _ = bony_decomposition(f, f, part)
    assert np.max(np.abs(tff.coeffs)) < 1e-15
    assert np.max(np.abs(r.coeffs - dealiased_product(f, f).coeffs)) < 1e-15
    assert np.max(np.abs(bony_R(f, f, part).coeffs - r.coeffs)) < 1e-15


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 5000))
def test_bony_identity(seed):
    g = Grid(2, TWO_PI, 32)
    part = make_partition(g)
    f = random_field(g, seed, ncomp=1, divergence_free=False)
    h = random_field(g, seed + 1, ncomp=1, divergence_free=False)
    a, b, c = bony_decomposition(f, h, part)
    prod = dealiased_product(f, h).coeffs
    assert np.max(np.abs(a.coeffs + b.coeffs + c.coeffs - prod)) <= 1e-12 * np.max(np.abs(prod))


def test_bony_requires_mean_zero(bgrid):
    part = make_partition(bgrid)
    f = sample_function(bgrid, lambda x, y: 1.0 + np.cos(x))
    with pytest.raises(MeanModeNotZero):
        bony_decomposition(f, f, part)
