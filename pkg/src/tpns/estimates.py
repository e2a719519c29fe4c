"""Empirical ratio checks for the linear and bilinear heat-flow estimates.

Left-hand sides are produced by the solver routines (exact Duhamel
integrals); right-hand sides by the norm library. Each check draws seeded
random band-limited inputs and reports the largest and median ratio.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, InvalidParameter
from .littlewood_paley import (
    NormSpec, besov_report, block_norm_table, block_norms, bony_decomposition, chemin_lerner_report, lsigma,
    make_partition, triple_norm,
)
from .mild import linear_duhamel
from .spectral import Grid, SpectralField, Trajectory, heat_propagate, nonlinear_tensor_div, random_field

MIN_TRIALS = 30


@dataclass
class RatioReport:
    inequality_id: str
    trials: int
    seed: int
    max_ratio: float
    median_ratio: float
    params: dict
    truncation: bool
    ratios: list = field(default_factory=list)

    def __post_init__(self):
        if self.trials < MIN_TRIALS:
            raise InvalidParameter(f"a ratio report needs at least {MIN_TRIALS} trials")

    @classmethod
    def from_ratios(cls, inequality_id: str, seed: int, ratios, params: dict, truncation: bool) -> "RatioReport":
        r = np.asarray(ratios, dtype=np.float64)
        return cls(inequality_id, len(r), seed, float(np.max(r)), float(np.median(r)), params, bool(truncation),
                   list(map(float, r)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in self.params.items()}
        return d

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "ratio"])
            for i, r in enumerate(self.ratios):
                w.writerow([i, repr(r)])


# ---------------------------------------------------------------------------
# admissibility predicates


@dataclass(frozen=True)
class Admissibility:
    ok: bool
    failed: tuple = ()

    def require(self) -> None:
        if not self.ok:
            raise InvalidParameter("inadmissible exponents: " + "; ".join(self.failed))


def _inv(x: float) -> float:
    return 0.0 if math.isinf(x) else 1.0 / x


def max_reg_admissible(p: float, sigma: float, r: float, r1: float) -> Admissibility:
    failed = []
    if not (1 <= p and 1 <= sigma):
        failed.append("1 <= p, sigma <= inf")
    if not 1 <= r1 <= r:
        failed.append("1 <= r1 <= r <= inf")
    return Admissibility(not failed, tuple(failed))


def bilinear_admissible(n: int, p: float, q: float, r: float, r1: float | None = None, sigma: float = 1.0) -> Admissibility:
    """Exponent conditions of the Chemin-Lerner bilinear heat estimate."""
    r1 = r if r1 is None else r1
    failed = []
    if n < 2:
        failed.append("n >= 2")
    if not all(x >= 1 for x in (p, q, sigma)):
        failed.append("1 <= p, q, sigma <= inf")
    if not 2 <= r <= r1:
        failed.append("2 <= r <= r1 <= inf")
    if not max(0.0, n * (_inv(q) - _inv(p))) < 1 - 2 * _inv(r):
        failed.append("max{0, n(1/q - 1/p)} < 1 - 2/r")
    if not min(n, n * (_inv(p) + _inv(q))) - 2 + 2 * _inv(r) > 0:
        failed.append("min{n, n(1/p + 1/q)} - 2 + 2/r > 0")
    return Admissibility(not failed, tuple(failed))


def stability_window(n: int, p: float, q: float, r: float, sigma: float) -> Admissibility:
    """Exponent window of the asymptotic stability result for periodic solutions."""
    failed = []
    if not 1 <= p < n:
        failed.append("1 <= p < n")
    if not 1 <= q < 2 * n:
        failed.append("1 <= q < 2n")
    if not _inv(q) - _inv(p) < 1.0 / n:
        failed.append("1/q - 1/p < 1/n")
    if not (1 <= sigma and math.isfinite(sigma)):
        failed.append("1 <= sigma < inf")
    lo = max(0.0, 1 - n / 2 * min(1.0, 2 * _inv(q), _inv(p) + _inv(q)))
    hi = 0.5 - n / 2 * max(0.0, _inv(q) - _inv(p))
    if not lo < _inv(r) < hi:
        failed.append(f"{lo:.4g} < 1/r < {hi:.4g}")
    return Admissibility(not failed, tuple(failed))


# ---------------------------------------------------------------------------
# random inputs


def default_grid(dim: int = 2, N: int = 32, L: float = 2 * math.pi) -> Grid:
    return Grid(dim, L, N)


def _band(grid: Grid, k_max: float | None) -> float:
    return k_max if k_max is not None else 0.45 * grid.k_dealias


def random_trajectory(grid: Grid, seed: int, length: float, n_samples: int, k_max: float | None = None,
                      slope: float | None = None) -> Trajectory:
    """``u(t) = cos(w t + phi) a + sin(w t + phi) b`` with seeded random fields ``a``, ``b``.

    The default spectral slope ``2 - 2n`` spreads the critical ``B^{n/2-1}_{2,1}``
    norm evenly over dyadic shells, so refining the grid adds scales without
    changing their relative weight.
    """
    slope = critical_slope(grid.dim) if slope is None else slope
    rng = np.random.default_rng(seed)
    s1, s2 = (int(x) for x in rng.integers(0, 2**31, size=2))
    km = _band(grid, k_max)
    a = random_field(grid, s1, k_max=km, slope=slope)
    b = random_field(grid, s2, k_max=km, slope=slope)
    w = rng.uniform(0.0, 4 * math.pi / length)
    phi = rng.uniform(0.0, 2 * math.pi)
    dt = length / (n_samples - 1)
    samples = [a * math.cos(w * n * dt + phi) + b * math.sin(w * n * dt + phi) for n in range(n_samples)]
    return Trajectory(grid, 0.0, dt, samples)


def critical_slope(dim: int) -> float:
    return 2.0 - 2.0 * dim


def heat_flow(a: SpectralField, length: float, n_samples: int, t0: float = 0.0) -> Trajectory:
    dt = length / (n_samples - 1)
    return Trajectory(a.grid, t0, dt, [heat_propagate(a, n * dt) for n in range(n_samples)])


def duhamel_bilinear(u: Trajectory, v: Trajectory) -> Trajectory:
    """``int_{t0}^t e^{(t-s) Lap} P div(u (x) v) ds`` on the sample grid."""
    if u.grid != v.grid or len(u) != len(v):
        raise DimensionMismatch("trajectories must share grid and time samples")
    flux = Trajectory(u.grid, u.t0, u.dt, [nonlinear_tensor_div(a, b) for a, b in zip(u.samples, v.samples)])
    return linear_duhamel(flux)


def _seeds(seed: int, trials: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31, size=(trials,))]


def _trial_loop(trials: int, seed: int, fn: Callable[[int], tuple[float, bool]]):
    if trials < MIN_TRIALS:
        raise InvalidParameter(f"need at least {MIN_TRIALS} trials")
    ratios, trunc = [], False
    for s in _seeds(seed, trials):
        r, t = fn(s)
        ratios.append(r)
        trunc |= t
    return ratios, trunc


def _ratio(lhs: float, rhs: float) -> float:
    return 0.0 if lhs == 0 else lhs / rhs


# ---------------------------------------------------------------------------
# checks


def check_max_reg(spec: NormSpec, trials: int, seed: int, grid: Grid | None = None, r1: float | None = None,
                  form: str = "data", length: float = 1.0, n_samples: int = 257) -> RatioReport:
    """Heat-flow maximal regularity.

    ``form="data"``: ``||e^{t Lap} a||_{L~^r B^{s+2/r}} / ||a||_{B^s}``.
    ``form="duhamel"``: ``||int e^{(t-s)Lap} f||_{L~^r B^{s+2/r}} / ||f||_{L~^{r1} B^{s-2+2/r1}}``.
    """
    grid = grid or default_grid()
    r1 = spec.r if r1 is None else r1
    max_reg_admissible(spec.p, spec.sigma, spec.r, r1).require()
    if form not in ("data", "duhamel"):
        raise InvalidParameter(f"unknown form {form!r}")
    part = make_partition(grid)
    lhs_spec = NormSpec(spec.p, spec.sigma, spec.s + 2 * _inv(spec.r), spec.r)

    def trial(s):
        if form == "data":
            a = random_field(grid, s, k_max=_band(grid, None))
            lhs = chemin_lerner_report(heat_flow(a, length, n_samples), lhs_spec, part)
            rhs = besov_report(a, NormSpec(spec.p, spec.sigma, spec.s), part)
            return _ratio(lhs.value, rhs.value), lhs.truncation_warning or rhs.truncation_warning
        f = random_trajectory(grid, s, length, n_samples)
        lhs = chemin_lerner_report(linear_duhamel(f), lhs_spec, part)
        rhs = chemin_lerner_report(f, NormSpec(spec.p, spec.sigma, spec.s - 2 + 2 * _inv(r1), r1), part)
        return _ratio(lhs.value, rhs.value), lhs.truncation_warning or rhs.truncation_warning

    ratios, trunc = _trial_loop(trials, seed, trial)
    params = {"n": grid.dim, "N": grid.N, "L": grid.L, "p": spec.p, "sigma": spec.sigma, "s": spec.s,
              "r": spec.r, "r1": r1, "form": form}
    return RatioReport.from_ratios(f"max_reg_{form}", seed, ratios, params, trunc)


def besov_from_blocks(a: SpectralField, part, p: float, s: float, sigma: float) -> float:
    vals = block_norms(a.coeffs, part, p) * 2.0 ** (s * part.js)
    return lsigma(vals, sigma)


def check_bilinear(n: int, p: float, q: float, r: float, sigma: float, trials: int, seed: int,
                   grid: Grid | None = None, r1: float | None = None, length: float = 0.5,
                   n_samples: int = 33) -> RatioReport:
    """``||int e^{(t-s)Lap} P div(u (x) v)||_{L~^{r1} B^{n/q-1+2/r1}_{q,sigma}}`` over
    ``||u||_{L~^inf B^{n/p-1}_{p,sigma}} ||v||_{L~^r B^{n/q-1+2/r}_{q,sigma}}``."""
    r1 = r if r1 is None else r1
    bilinear_admissible(n, p, q, r, r1, sigma).require()
    grid = grid or default_grid(n, 16 if n == 3 else 32)
    if grid.dim != n:
        raise DimensionMismatch(f"grid dimension {grid.dim} differs from n={n}")
    part = make_partition(grid)
    out_spec = NormSpec(q, sigma, n / q - 1 + 2 * _inv(r1), r1)
    u_spec = NormSpec(p, sigma, n / p - 1, math.inf)
    v_spec = NormSpec(q, sigma, n / q - 1 + 2 * _inv(r), r)

    def trial(s):
        rng = np.random.default_rng(s)
        su, sv = (int(x) for x in rng.integers(0, 2**31, size=2))
        u = random_trajectory(grid, su, length, n_samples)
        v = random_trajectory(grid, sv, length, n_samples)
        lhs = chemin_lerner_report(duhamel_bilinear(u, v), out_spec, part)
        nu = chemin_lerner_report(u, u_spec, part)
        nv = chemin_lerner_report(v, v_spec, part)
        return _ratio(lhs.value, nu.value * nv.value), nu.truncation_warning or nv.truncation_warning

    ratios, trunc = _trial_loop(trials, seed, trial)
    params = {"n": n, "N": grid.N, "L": grid.L, "p": p, "q": q, "r": r, "r1": r1, "sigma": sigma}
    return RatioReport.from_ratios("bilinear", seed, ratios, params, trunc)


def check_triple_norm_bilinear(delta: float, trials: int, seed: int, grid: Grid | None = None,
                               length: float = 0.5, n_samples: int = 33) -> RatioReport:
    """Triple norm of the bilinear Duhamel term over the product of the inputs' triple norms."""
    grid = grid or default_grid(2, 32)
    if grid.dim != 2:
        raise DimensionMismatch("the triple norm is two-dimensional")
    part = make_partition(grid)
    if not 0 < delta <= 0.25:
        raise InvalidParameter(f"delta must lie in (0, 1/4], got {delta}")

    def trial(s):
        rng = np.random.default_rng(s)
        su, sv = (int(x) for x in rng.integers(0, 2**31, size=2))
        u = random_trajectory(grid, su, length, n_samples)
        v = random_trajectory(grid, sv, length, n_samples)
        lhs = triple_norm(duhamel_bilinear(u, v), delta, part)
        return _ratio(lhs, triple_norm(u, delta, part) * triple_norm(v, delta, part)), False

    ratios, trunc = _trial_loop(trials, seed, trial)
    params = {"n": 2, "N": grid.N, "L": grid.L, "delta": delta}
    return RatioReport.from_ratios("triple_norm_bilinear", seed, ratios, params, trunc)


def weighted_sup(traj: Trajectory, p: float, sigma: float, part, weight_exp: float = 0.25) -> float:
    """``sup_t (t - t0)^{weight_exp} ||u(t)||_{B^0_{p,sigma}}`` over the samples."""
    table = block_norm_table(traj, part, p)
    w = (traj.times - traj.t0) ** weight_exp
    return float(max(wi * lsigma(row, sigma) for wi, row in zip(w, table)))


def sup_besov(traj: Trajectory, p: float, sigma: float, part, s: float = 0.0) -> float:
    table = block_norm_table(traj, part, p) * 2.0 ** (s * part.js)
    return float(max(lsigma(row, sigma) for row in table))


def check_uniqueness_bilinears(trials: int, seed: int, grid: Grid | None = None, length: float = 0.5,
                               n_samples: int = 65, rough_slope: float = 0.0) -> tuple[RatioReport, RatioReport]:
    """Sup-in-time bilinear estimates in ``B^0_{2,inf}``.

    The first uses ``sup ||u||_{B^0_{2,1}}``; the second the weighted
    ``sup (t-t0)^{1/4} ||u||_{B^0_{4,1}}`` with ``u`` the heat flow of rough data.
    """
    grid = grid or default_grid(2, 32)
    if grid.dim != 2:
        raise DimensionMismatch("these estimates are two-dimensional")
    part = make_partition(grid)
    km = _band(grid, None)

    def lhs_of(u, v):
        return sup_besov(duhamel_bilinear(u, v), 2.0, math.inf, part)

    def trial4(s):
        rng = np.random.default_rng(s)
        su, sv = (int(x) for x in rng.integers(0, 2**31, size=2))
        u = random_trajectory(grid, su, length, n_samples)
        v = random_trajectory(grid, sv, length, n_samples)
        return _ratio(lhs_of(u, v), sup_besov(u, 2.0, 1.0, part) * sup_besov(v, 2.0, math.inf, part)), False

    def trial5(s):
        rng = np.random.default_rng(s)
        su, sv = (int(x) for x in rng.integers(0, 2**31, size=2))
        u = heat_flow(random_field(grid, su, k_max=km, slope=rough_slope), length, n_samples)
        v = random_trajectory(grid, sv, length, n_samples)
        return _ratio(lhs_of(u, v), weighted_sup(u, 4.0, 1.0, part) * sup_besov(v, 2.0, math.inf, part)), False

    r4, t4 = _trial_loop(trials, seed, trial4)
    r5, t5 = _trial_loop(trials, seed + 1, trial5)
    params = {"n": 2, "N": grid.N, "L": grid.L}
    return (RatioReport.from_ratios("uniqueness_b21", seed, r4, params, t4),
            RatioReport.from_ratios("uniqueness_weighted_b41", seed + 1, r5, params, t5))


# ---------------------------------------------------------------------------
# paraproduct ratios


def _scalar_field(grid: Grid, seed: int, k_max: float) -> SpectralField:
    return random_field(grid, seed, k_max=k_max, ncomp=1, divergence_free=False)


def _besov(u: SpectralField, part, p: float, s: float, sigma: float) -> float:
    return besov_from_blocks(u, part, p, s, sigma)


def paraproduct_ratios(kind: str, trials: int, seed: int, grid: Grid | None = None,
                       s1: float = -0.5, s2: float = 1.0, sigma: float = 2.0, sigma1: float = 2.0,
                       sigma2: float = 2.0) -> RatioReport:
    """``||T_f g||_{B^{s1+s2}_{2,sigma}} / (||f||_{B^{s1}_{inf,sigma1}} ||g||_{B^{s2}_{2,sigma}})`` for
    ``kind="T"``, or the resonant analogue ``R(f, g)`` with ``g`` in ``B^{s2}_{2,sigma2}`` for ``kind="R"``."""
    grid = grid or default_grid(2, 64)
    if kind not in ("T", "R"):
        raise InvalidParameter(f"kind must be 'T' or 'R', got {kind!r}")
    if kind == "T" and not s1 < 0:
        raise InvalidParameter("the paraproduct bound needs s1 < 0")
    if kind == "R" and not s1 + s2 > 0:
        raise InvalidParameter("the resonant bound needs s1 + s2 > 0")
    part = make_partition(grid)
    km = 0.45 * grid.k_dealias
    s = s1 + s2

    def trial(sd):
        rng = np.random.default_rng(sd)
        sf, sg = (int(x) for x in rng.integers(0, 2**31, size=2))
        f = _scalar_field(grid, sf, km)
        g = _scalar_field(grid, sg, km)
        t_fg, res, _ = bony_decomposition(f, g, part)
        out = t_fg if kind == "T" else res
        lhs = _besov(out, part, 2.0, s, sigma)
        rhs = _besov(f, part, math.inf, s1, sigma1) * _besov(g, part, 2.0, s2, sigma if kind == "T" else sigma2)
        return _ratio(lhs, rhs), False

    ratios, trunc = _trial_loop(trials, seed, trial)
    params = {"kind": kind, "N": grid.N, "L": grid.L, "s1": s1, "s2": s2, "sigma": sigma,
              "sigma1": sigma1, "sigma2": sigma2}
    return RatioReport.from_ratios(f"paraproduct_{kind}", seed, ratios, params, trunc)


def fit_resonant_exponent(s_values, trials: int, seed: int, grid: Grid | None = None, sigma: float = 2.0) -> dict:
    """Fit ``max_ratio ~ s^{-a}`` for the resonant term as ``s = s1 + s2`` decreases.

    Uses ``s1 = -1`` and ``sigma1 = sigma2 = 2`` (so ``1/sigma1 + 1/sigma2 = 1``).
    """
    s_values = np.asarray(sorted(s_values), dtype=np.float64)
    if s_values.size < 2 or np.any(s_values <= 0):
        raise InvalidParameter("need at least two positive s values")
    maxima = [paraproduct_ratios("R", trials, seed, grid, s1=-1.0, s2=1.0 + s, sigma=sigma).max_ratio
              for s in s_values]
    slope, _ = np.polyfit(np.log(s_values), np.log(maxima), 1)
    return {"s": list(map(float, s_values)), "max_ratio": list(map(float, maxima)),
            "fitted_exponent": float(-slope), "sigma": sigma}


def refinement_pair(check: Callable[[Grid], RatioReport], grid: Grid) -> tuple[RatioReport, RatioReport, float]:
    """Run a check at ``N`` and ``2N`` on the same box; return both and the max-ratio quotient."""
    fine = Grid(grid.dim, grid.L, 2 * grid.N, grid.dealias_fraction)
    a, b = check(grid), check(fine)
    q = b.max_ratio / a.max_ratio if a.max_ratio > 0 else math.inf
    return a, b, q
