import csv
import math

import numpy as np
import pytest

from tpns.errors import DimensionMismatch, InvalidParameter
from tpns.estimates import (
    MIN_TRIALS,
    RatioReport,
    bilinear_admissible,
    check_bilinear,
    check_max_reg,
    check_triple_norm_bilinear,
    check_uniqueness_bilinears,
    critical_slope,
    default_grid,
    duhamel_bilinear,
    heat_flow,
    max_reg_admissible,
    paraproduct_ratios,
    random_trajectory,
    refinement_pair,
    stability_window,
    weighted_sup,
)
from tpns.littlewood_paley import NormSpec, make_partition
from tpns.spectral import Grid, SpectralField, Trajectory, sample_function

INF = math.inf

BILINEAR_TABLE = [
    # n, p, q, r, r1, admissible, failing condition
    (2, 2, 2, 4, None, True, None),
    (3, 2, 2, 4, None, True, None),
    (3, 2, 3, 8, None, True, None),
    (2, 2, 2, 4, 8, True, None),
    (2, 2, 2, INF, None, False, "min{n, n(1/p + 1/q)} - 2 + 2/r > 0"),
    (2, 2, 4, 4, None, False, "min{n, n(1/p + 1/q)} - 2 + 2/r > 0"),
    (2, 4, 2, 4, None, False, "max{0, n(1/q - 1/p)} < 1 - 2/r"),
    (2, 2, 2, 1.5, None, False, "2 <= r <= r1 <= inf"),
    (2, 2, 2, 4, 3, False, "2 <= r <= r1 <= inf"),
    (2, 0.5, 2, 4, None, False, "1 <= p, q, sigma <= inf"),
]


@pytest.mark.parametrize("n,p,q,r,r1,ok,cond", BILINEAR_TABLE)
def test_bilinear_gate(n, p, q, r, r1, ok, cond):
    adm = bilinear_admissible(n, p, q, r, r1)
    assert adm.ok is ok
    if not ok:
        assert cond in adm.failed
        with pytest.raises(InvalidParameter):
            adm.require()


STABILITY_TABLE = [
    (3, 2, 2, 4, 1, True),
    (3, 2, 3, 8, 1, True),
    (3, 2, 2, 2, 1, False),
    (3, 2, 2, 4, INF, False),
    (2, 2, 2, 4, 1, False),
    (3, 2, 6, 4, 1, False),
    (3, 1, 4, 4, 1, False),
]


@pytest.mark.parametrize("n,p,q,r,sigma,ok", STABILITY_TABLE)
def test_stability_window(n, p, q, r, sigma, ok):
    assert stability_window(n, p, q, r, sigma).ok is ok


def test_max_reg_gate():
    assert max_reg_admissible(2, 1, 4, 2).ok
    assert max_reg_admissible(2, 1, INF, INF).ok
    assert not max_reg_admissible(2, 1, 2, 4).ok
    with pytest.raises(InvalidParameter):
        check_max_reg(NormSpec(2, 1, 0, 2), MIN_TRIALS, 0, r1=4)


def test_inadmissible_bilinear_rejected_before_work():
    with pytest.raises(InvalidParameter, match="min"):
        check_bilinear(2, 2, 2, INF, 1, MIN_TRIALS, 0)


def test_trial_floor():
    with pytest.raises(InvalidParameter):
        check_max_reg(NormSpec(), 5, 0)
    with pytest.raises(InvalidParameter):
        RatioReport("x", 3, 0, 1.0, 1.0, {}, False)


def test_max_reg_data_sup_is_exact():
    rep = check_max_reg(NormSpec(2, 1, 0, INF), MIN_TRIALS, 1, n_samples=9)
    assert rep.max_ratio == pytest.approx(1.0, rel=1e-12)
    assert min(rep.ratios) == pytest.approx(1.0, rel=1e-12)


def test_max_reg_data_r2_bounded():
    # per mode the ratio is (2^j/|xi|) sqrt((1 - e^{-2|xi|^2 T})/2) <= sqrt(2)
    rep = check_max_reg(NormSpec(2, 1, 0, 2), MIN_TRIALS, 2, n_samples=129)
    assert 0 < rep.median_ratio <= rep.max_ratio < math.sqrt(2)


def test_reports_are_deterministic(tmp_path):
    a = check_max_reg(NormSpec(2, 1, 0, 4), MIN_TRIALS, 7, n_samples=33)
    b = check_max_reg(NormSpec(2, 1, 0, 4), MIN_TRIALS, 7, n_samples=33)
    assert a.ratios == b.ratios
    assert a.to_dict() == b.to_dict()
    path = tmp_path / "r.csv"
    a.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["trial", "ratio"] and len(rows) == MIN_TRIALS + 1
    assert float(rows[1][1]) == a.ratios[0]
    assert check_max_reg(NormSpec(2, 1, 0, INF), MIN_TRIALS, 0, n_samples=5).to_dict()["params"]["r"] == "inf"


def test_bilinear_with_zero_input_vanishes():
    g = default_grid(2, 16)
    v = random_trajectory(g, 3, 0.5, 9)
    zero = Trajectory(g, 0.0, v.dt, [SpectralField.zeros(g)] * len(v))
    assert not np.any(duhamel_bilinear(zero, v).stacked())
    with pytest.raises(DimensionMismatch):
        duhamel_bilinear(zero, Trajectory(g, 0.0, v.dt, v.samples[:3]))


def test_shear_mode_has_no_self_interaction():
    g = default_grid(2, 16)
    u = sample_function(g, lambda x, y: np.stack([np.sin(2 * y), 0 * x]))
    tr = Trajectory(g, 0.0, 0.25, [u] * 3)
    assert np.max(np.abs(duhamel_bilinear(tr, tr).stacked())) < 1e-15


def test_weighted_sup_single_mode():
    g = Grid(2, 2 * math.pi, 16)
    a = sample_function(g, lambda x, y: np.stack([np.sin(y), 0 * x]))
    tr = heat_flow(a, 0.5, 65)
    l4 = (3 / 8 * 4 * math.pi**2) ** 0.25
    expect = 0.25**0.25 * math.exp(-0.25) * l4
    assert weighted_sup(tr, 4.0, 1.0, make_partition(g)) == pytest.approx(expect, rel=1e-12)


def test_random_trajectory_uses_critical_slope():
    assert critical_slope(2) == -2.0 and critical_slope(3) == -4.0
    tr = random_trajectory(default_grid(2, 16), 1, 1.0, 5)
    assert len(tr) == 5 and tr.t1 == pytest.approx(1.0)


def test_bilinear_and_triple_reports():
    rep = check_bilinear(2, 2, 2, 4, 1, MIN_TRIALS, 3, grid=default_grid(2, 16), n_samples=9)
    assert rep.inequality_id == "bilinear" and rep.trials == MIN_TRIALS
    assert 0 < rep.median_ratio <= rep.max_ratio < 1.0
    tri = check_triple_norm_bilinear(0.25, MIN_TRIALS, 3, grid=default_grid(2, 16), n_samples=9)
    assert 0 < tri.max_ratio < 1.0
    with pytest.raises(InvalidParameter):
        check_triple_norm_bilinear(0.5, MIN_TRIALS, 3)
    with pytest.raises(DimensionMismatch):
        check_bilinear(3, 2, 2, 4, 1, MIN_TRIALS, 3, grid=default_grid(2, 16))


def test_uniqueness_reports():
    a, b = check_uniqueness_bilinears(MIN_TRIALS, 4, grid=default_grid(2, 16), n_samples=9)
    assert a.inequality_id == "uniqueness_b21" and b.inequality_id == "uniqueness_weighted_b41"
    assert a.seed == 4 and b.seed == 5
    assert all(math.isfinite(x) for x in a.ratios + b.ratios)


def test_paraproduct_ratios():
    t = paraproduct_ratios("T", MIN_TRIALS, 0, grid=default_grid(2, 32))
    r = paraproduct_ratios("R", MIN_TRIALS, 0, grid=default_grid(2, 32))
    assert 0 < t.max_ratio < 10 and 0 < r.max_ratio < 10
    with pytest.raises(InvalidParameter):
        paraproduct_ratios("T", MIN_TRIALS, 0, s1=0.5)
    with pytest.raises(InvalidParameter):
        paraproduct_ratios("R", MIN_TRIALS, 0, s1=-1.0, s2=0.5)
    with pytest.raises(InvalidParameter):
        paraproduct_ratios("X", MIN_TRIALS, 0)


def test_refinement_pair_doubles_grid():
    seen = []

    def check(grid):
        seen.append(grid.N)
        return check_max_reg(NormSpec(2, 1, 0, INF), MIN_TRIALS, 0, grid=grid, n_samples=5)

    a, b, q = refinement_pair(check, default_grid(2, 16))
    assert seen == [16, 32]
    assert q == pytest.approx(1.0)


def test_max_reg_single_mode_closed_form():
    # LHS/RHS for a mode at |xi| = 2^j is sqrt((1 - e^{-2|xi|^2 T}) / 2) in L~^2 B^{s+1}
    from tpns.littlewood_paley import chemin_lerner_norm, besov_norm

    g = Grid(2, 2 * math.pi, 16)
    part = make_partition(g)
    a = sample_function(g, lambda x, y: np.stack([np.sin(2 * y), 0 * x]))
    tr = heat_flow(a, 1.0, 4001)
    ratio = chemin_lerner_norm(tr, NormSpec(2, 1, 1.0, 2), part) / besov_norm(a, NormSpec(2, 1, 0.0), part)
    assert ratio == pytest.approx(math.sqrt((1 - math.exp(-8.0)) / 2), rel=1e-6)
