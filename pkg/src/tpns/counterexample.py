"""Explicit 2D force whose solution grows in norm over whole periods.

The force is ``f = eta delta Lap g + eta^2 delta h`` with
``g = perp_grad(psi(x) cos(M x_1))`` and ``psi`` a radial bump whose Fourier
transform is 1 on the unit disc and vanishes outside radius 2. The first
Picard iterate is explicit, and the stationary part of the second one has a
closed form whose low-frequency blocks are dominated by an ``M^2`` term.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BlowupDetected, DimensionMismatch, EmptyBlockRange, GridTooCoarse, InvalidParameter
from .littlewood_paley import NormSpec, besov_of_blocks, block_norms, cutoff, make_partition
from .mild import PeriodicForce, SolverConfig, _check_initial, _n_steps, _Propagator, linear_duhamel
from .spectral import Grid, SpectralField, Trajectory, leray_project_coeffs, perp_gradient, tensor_div_coeffs

LARGE_M_MIN = 10.0


@dataclass(frozen=True)
class CounterexampleParams:
    delta: float = 0.5
    eta: float = 0.25
    M: float = 12.0
    T: float = 1.0
    t0: float = 0.0
    epsilon0: float = 0.1
    delta_max: float = 0.6
    h: PeriodicForce | None = None

    def __post_init__(self):
        if not 0 < self.delta <= self.delta_max:
            raise InvalidParameter(f"delta must lie in (0, delta_max={self.delta_max}], got {self.delta}")
        if not self.epsilon0 > 0:
            raise InvalidParameter("epsilon0 must be positive")
        if not 0 < self.eta <= 0.5:
            raise InvalidParameter(f"eta must lie in (0, 1/2], got {self.eta}")
        if not self.M > 2:
            raise InvalidParameter(f"M must exceed 2, got {self.M}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise InvalidParameter(f"T must be positive, got {self.T}")
        if self.T > 2.0 ** (1.0 / self.delta**2):
            raise InvalidParameter(f"T={self.T} exceeds 2^(1/delta^2)")
        if not math.isfinite(self.t0):
            raise InvalidParameter("t0 must be finite")
        if self.h is not None and abs(self.h.period - self.T) > 1e-12 * self.T:
            raise InvalidParameter("h must share the period T")

    @property
    def large_M_regime(self) -> bool:
        return self.M >= LARGE_M_MIN

    @property
    def k(self) -> int:
        return k_delta_T(self.delta, self.T)[0]

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "h"}
        d["h"] = None if self.h is None else {"M_t": self.h.M_t}
        d["large_M_regime"] = self.large_M_regime
        return d


def k_delta_T(delta: float, T: float) -> tuple[int, float]:
    """Number of periods ``k`` with ``2^{1/delta^2}/T <= k < 2^{1/delta^2}/T + 1``, and ``(kT)^{delta^2}``."""
    if not (delta > 0 and T > 0):
        raise InvalidParameter("delta and T must be positive")
    big = 2.0 ** (1.0 / delta**2)
    if T > big:
        raise InvalidParameter(f"T={T} exceeds 2^(1/delta^2)={big}")
    k = math.ceil(big / T)
    if k * T < big * (1 - 1e-15):
        k += 1
    check = (k * T) ** (delta**2)
    if not 2.0 - 1e-12 <= check < 4.0:
        raise InvalidParameter(f"(kT)^(delta^2)={check} outside [2, 4)")
    return k, check


# ---------------------------------------------------------------------------
# building blocks


def _require_2d(grid: Grid) -> None:
    if grid.dim != 2:
        raise DimensionMismatch("the construction lives in two dimensions")


def _psi_hat(xi_abs: np.ndarray) -> np.ndarray:
    return cutoff(xi_abs)


def build_psi(grid: Grid) -> SpectralField:
    """Periodized bump with ``psi_hat = 1`` on ``|xi| <= 1`` and ``0`` on ``|xi| >= 2``."""
    _require_2d(grid)
    if grid.k_dealias < 2.0:
        raise GridTooCoarse(f"dealiased band {grid.k_dealias:.3g} does not reach |xi| = 2")
    c = _psi_hat(grid.xi_abs) / grid.volume
    c[grid.nyquist_mask] = 0.0
    return SpectralField(grid, c, False, copy=False)


def _check_M(grid: Grid, M: float) -> None:
    if M + 2 > grid.k_dealias:
        raise GridTooCoarse(f"M + 2 = {M + 2} exceeds the dealiased band {grid.k_dealias:.3g}")


def build_g(grid: Grid, M: float) -> SpectralField:
    """``g = perp_grad(psi cos(M x_1))``, supported in ``M - 2 <= |xi| <= M + 2``."""
    _require_2d(grid)
    _check_M(grid, M)
    xi1, xi2 = grid.xi
    shifted = np.hypot(xi1 - M, xi2), np.hypot(xi1 + M, xi2)
    c = 0.5 * (_psi_hat(shifted[0]) + _psi_hat(shifted[1])) / grid.volume
    c[grid.nyquist_mask] = 0.0
    return perp_gradient(SpectralField(grid, c, copy=False))


def single_harmonic_h(grid: Grid, T: float, seed: int, M_t: int = 16, amplitude: float = 0.5) -> PeriodicForce:
    """Seeded ``h(t, x) = cos(2 pi t / T) perp_grad(cos(xi . x + phase))`` scaled to ``B^{-2}_{2,1}`` size ``amplitude``."""
    _require_2d(grid)
    rng = np.random.default_rng(seed)
    kmax = max(1, int(min(grid.k_dealias, 4.0) / grid.fundamental))
    while True:
        m = rng.integers(-kmax, kmax + 1, size=2)
        if np.any(m != 0) and np.hypot(*m) * grid.fundamental <= grid.k_dealias:
            break
    phase = rng.uniform(0, 2 * np.pi)
    c = np.zeros(grid.shape, np.complex128)
    c[m[0] % grid.N, m[1] % grid.N] += 0.5 * np.exp(1j * phase)
    c[-m[0] % grid.N, -m[1] % grid.N] += 0.5 * np.exp(-1j * phase)
    v = perp_gradient(SpectralField(grid, c, copy=False))
    part = make_partition(grid)
    size = besov_of_blocks(block_norms(v.coeffs, part, 2.0), part, -2.0, 1.0)
    v = v * (amplitude / size)
    return PeriodicForce.from_function(grid, T, M_t, lambda t: v * math.cos(2 * math.pi * t / T))


def build_force(params: CounterexampleParams, grid: Grid) -> PeriodicForce:
    """``f = eta delta Lap g + eta^2 delta h``; time-constant when ``h`` is absent."""
    g = build_g(grid, params.M)
    stationary = -grid.xi2 * g.coeffs * (params.eta * params.delta)
    if params.h is None:
        return PeriodicForce(grid, params.T, [stationary])
    if params.h.grid != grid:
        raise DimensionMismatch("h lives on a different grid")
    samples = stationary + params.eta**2 * params.delta * params.h.stack
    return PeriodicForce(grid, params.T, samples)


# ---------------------------------------------------------------------------
# explicit iterates


@dataclass
class FirstIterate:
    stationary: SpectralField
    heat: Trajectory
    duhamel_h: Trajectory
    total: Trajectory


def first_iterate(params: CounterexampleParams, grid: Grid, dt: float, n_steps: int) -> FirstIterate:
    """Closed-form parts of the first iterate on ``t0 + n dt``, ``n = 0..n_steps``.

    The ``h`` part is integrated exactly for ``h`` linear between the
    sample times, so ``dt`` should divide the knot spacing of ``h``.
    """
    if n_steps < 1 or not dt > 0:
        raise InvalidParameter("need dt > 0 and at least one step")
    g = build_g(grid, params.M)
    a = params.eta * params.delta
    times = params.t0 + dt * np.arange(n_steps + 1)
    stationary = g * (-a)
    decay = np.exp(-grid.xi2[None] * (times - params.t0)[:, None, None])
    heat_stack = a * decay[:, None] * g.coeffs[None]
    heat = Trajectory.from_stack(grid, params.t0, dt, heat_stack)
    if params.h is None:
        duh_stack = np.zeros_like(heat_stack)
    else:
        h_traj = Trajectory.from_stack(grid, params.t0, dt, np.stack([params.h.coeffs_at(t) for t in times]))
        duh_stack = params.eta**2 * params.delta * linear_duhamel(h_traj).stacked()
    duhamel_h = Trajectory.from_stack(grid, params.t0, dt, duh_stack)
    total = Trajectory.from_stack(grid, params.t0, dt, stationary.coeffs[None] + heat_stack + duh_stack)
    return FirstIterate(stationary, heat, duhamel_h, total)


def _div_product(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``div(a (x) b)`` from dealiased physical products (no projection)."""
    mask = grid.dealias_mask
    ap = grid.inverse_real(a * mask)
    bp = grid.inverse_real(b * mask)
    out = np.zeros((2,) + grid.shape, np.complex128)
    for l in range(2):
        for k in range(2):
            out[l] += 1j * grid.xi[k] * grid.forward(ap[k] * bp[l])
    return out * mask


def projected_flux(grid: Grid, M: float) -> np.ndarray:
    """``(-Lap)^{-1} P div(g (x) g)``."""
    g = build_g(grid, M)
    return leray_project_coeffs(grid, _div_product(grid, g.coeffs, g.coeffs)) * grid.inv_xi2


def second_iterate_closed_form(params: CounterexampleParams, grid: Grid, k: float, flux: np.ndarray | None = None) -> SpectralField:
    """``-(eta delta)^2 (1 - e^{kT Lap}) (-Lap)^{-1} P div(g (x) g)`` at ``t0 + kT``.

    This is the Duhamel integral of ``-P div(u11 (x) u11)`` with the
    stationary part ``u11 = -eta delta g``.
    """
    if k < 0:
        raise InvalidParameter("k must be nonnegative")
    flux = projected_flux(grid, params.M) if flux is None else flux
    factor = -np.expm1(-grid.xi2 * (k * params.T))
    return SpectralField(grid, -(params.eta * params.delta) ** 2 * factor * flux, copy=False)


def nominal_block_range(delta: float) -> tuple[int, int]:
    return math.ceil(-1.0 / (2 * delta**2)), -2


@dataclass
class LowerBoundReport:
    js: list
    full: list
    m2_part: list
    remainder: list
    nominal_range: tuple
    truncated: bool
    sum_full: float
    weighted_bound: float

    @property
    def dominance(self) -> float:
        """Smallest per-block ratio of the ``M^2`` part to the remainder."""
        return float(min(m / r if r > 0 else math.inf for m, r in zip(self.m2_part, self.remainder)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dominance"] = self.dominance
        return d


def lower_bound_blocks(params: CounterexampleParams, grid: Grid, part=None) -> LowerBoundReport:
    """Per-block ``L^2`` norms of ``Delta_j (-Lap)^{-1} P div(g (x) g)`` for ``-1/(2 delta^2) <= j <= -2``.

    Low blocks split into ``(M^2/2) Delta_j (0, d_2 psi^2)`` and
    ``(1/2) Delta_j div(perp_grad psi (x) perp_grad psi)``, both passed
    through ``(-Lap)^{-1} P``.
    """
    _require_2d(grid)
    part = part or make_partition(grid)
    lo, hi = nominal_block_range(params.delta)
    first = max(lo, part.j_min + 1)
    js = list(range(first, hi + 1))
    if not js:
        need = 2 * math.pi * 2.0 ** (1 - hi)
        raise EmptyBlockRange(
            f"box length {grid.L:.4g} resolves no block in [{lo}, {hi}]; need L >= {need:.4g}",
            required_box_length=need,
        )
    psi = build_psi(grid)
    psi_p = grid.inverse_real(psi.coeffs * grid.dealias_mask)[0]
    psi2 = grid.forward(psi_p * psi_p) * grid.dealias_mask
    m2 = np.zeros((2,) + grid.shape, np.complex128)
    m2[1] = 0.5 * params.M**2 * 1j * grid.xi[1] * psi2
    gp = perp_gradient(psi).coeffs
    rem = 0.5 * _div_product(grid, gp, gp)
    full = projected_flux(grid, params.M)
    m2 = leray_project_coeffs(grid, m2) * grid.inv_xi2
    rem = leray_project_coeffs(grid, rem) * grid.inv_xi2

    def blk(c, j):
        w = part.weight(j)
        return math.sqrt(grid.volume * float(np.sum(w * w * np.sum(np.abs(c) ** 2, axis=0))))

    full_v = [blk(full, j) for j in js]
    total = float(sum(full_v))
    return LowerBoundReport(
        js, full_v, [blk(m2, j) for j in js], [blk(rem, j) for j in js],
        (lo, hi), first > lo, total, (params.eta * params.delta) ** 2 * total,
    )


# ---------------------------------------------------------------------------
# growth experiment


@dataclass
class ExperimentReport:
    params: dict
    k: int
    kT_check: float
    window: tuple
    dt: float
    scheme: str
    times: list
    series: list
    start_norm: float
    end_norm: float
    ratio: float
    u1_sup_norm: float
    u1_end_norm: float
    u2_end_norm: float
    u21_end_norm: float
    remainder_end_norm: float
    periodicity_gap: float
    non_periodic: bool
    epsilon0: float
    exceeds_floor: bool
    exceeds_twice_epsilon0: bool
    grows: bool
    lower_bound: dict | None
    truncation: dict = field(default_factory=dict)
    final: SpectralField | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "final"}
        ratio = None if math.isinf(self.ratio) else self.ratio
        d["ratio"] = ratio
        d["norms"] = {"start": self.start_norm, "end": self.end_norm, "ratio": ratio}
        d["decomposition"] = {
            "u1_sup": self.u1_sup_norm, "u1_end": self.u1_end_norm, "u2_end": self.u2_end_norm,
            "u21_end_closed_form": self.u21_end_norm, "remainder_end": self.remainder_end_norm,
        }
        return d


def run_growth_experiment(params: CounterexampleParams, a: SpectralField, cfg: SolverConfig,
                          part=None, sample_every: int | None = None,
                          gap_tol: float = 1e-8, require_lower_bound: bool = False,
                          forced: bool = True) -> ExperimentReport:
    """Integrate the forced problem over ``k`` whole periods and compare with the iterates.

    Alongside the full solution ``u`` the run co-evolves the first iterate
    ``u1`` (linear, forced) and the second-iterate correction ``u2``
    (Duhamel of ``-P div(u1 (x) u1)``) with the same exponential scheme.
    With ``require_lower_bound`` an unresolvable low-block range raises
    ``EmptyBlockRange`` before any time stepping. ``forced=False`` switches
    the force off (control run).
    """
    grid = a.grid
    _require_2d(grid)
    _check_initial(a)
    part = part or make_partition(grid)
    spec = NormSpec(2.0, 1.0, 0.0)

    def norm(c):
        return besov_of_blocks(block_norms(c, part, 2.0), part, 0.0, 1.0)

    try:
        lb = lower_bound_blocks(params, grid, part).to_dict()
    except EmptyBlockRange:
        if require_lower_bound:
            raise
        lb = None
    start = norm(a.coeffs)
    if start > params.epsilon0:
        raise InvalidParameter(f"initial data norm {start:.3g} exceeds epsilon0={params.epsilon0}")
    k, check = k_delta_T(params.delta, params.T)
    t0, t1 = params.t0, params.t0 + k * params.T
    n = _n_steps(t0, t1, cfg.dt)
    every = sample_every or cfg.sample_every
    force = build_force(params, grid) if forced else PeriodicForce.constant(SpectralField.zeros(grid), params.T)
    prop = _Propagator.build(grid, cfg.dt)
    h = cfg.dt
    etd2 = cfg.scheme == "ETD2"

    def nl(c):
        return -tensor_div_coeffs(grid, c)

    u = a.coeffs.copy()
    u1 = np.zeros_like(u)
    u2 = np.zeros_like(u)
    n1 = nl(u1)
    u1_sup = block_norms(u1, part, 2.0)
    times, series = [t0], [start]
    for i in range(1, n + 1):
        t = t0 + (i - 1) * h
        f0 = force.coeffs_at(t)
        f1 = force.coeffs_at(t + h)
        # full solution
        N0 = nl(u) + f0
        stage = prop.E * u + prop.hphi1 * N0
        u = stage + prop.hphi2 * (nl(stage) + f1 - N0) if etd2 else stage
        # first iterate (linear, exact for piecewise-linear forcing)
        u1_new = prop.E * u1 + prop.hphi1 * f0 + prop.hphi2 * (f1 - f0)
        # second-iterate correction driven by u1
        n1_new = nl(u1_new)
        if etd2:
            u2 = prop.E * u2 + prop.hphi1 * n1 + prop.hphi2 * (n1_new - n1)
        else:
            u2 = prop.E * u2 + prop.hphi1 * n1
        u1, n1 = u1_new, n1_new
        if not np.all(np.isfinite(u)):
            raise BlowupDetected(t + h, "non-finite values in the solution")
        u1_sup = np.maximum(u1_sup, block_norms(u1, part, 2.0))
        if i % every == 0 or i == n:
            times.append(t + h)
            series.append(norm(u))
    end = series[-1]
    u1_sup_norm = besov_of_blocks(u1_sup, part, 0.0, 1.0)
    u21 = second_iterate_closed_form(params, grid, k)
    gap = norm(u - a.coeffs)
    scale = max(start, end, 1e-300)
    tail = block_norms(u, part, 2.0)
    top = float(np.max(tail)) if tail.size else 0.0
    return ExperimentReport(
        params=params.to_dict(), k=k, kT_check=check, window=(t0, t1), dt=cfg.dt, scheme=cfg.scheme,
        times=list(map(float, times)), series=list(map(float, series)),
        start_norm=start, end_norm=end, ratio=end / start if start > 0 else math.inf,
        u1_sup_norm=u1_sup_norm, u1_end_norm=norm(u1), u2_end_norm=norm(u2), u21_end_norm=norm(u21.coeffs),
        remainder_end_norm=norm(u - u1 - u2),
        periodicity_gap=gap, non_periodic=bool(gap > gap_tol * scale),
        epsilon0=params.epsilon0, exceeds_floor=bool(end > max(u1_sup_norm, params.epsilon0)),
        exceeds_twice_epsilon0=bool(end >= 2 * params.epsilon0), grows=bool(end > start), lower_bound=lb,
        truncation={
            "large_M_regime": params.large_M_regime,
            "lower_block_range_truncated": None if lb is None else lb["truncated"],
            "lowest_block_share": float(tail[0] / top) if top > 0 else 0.0,
            "norm": {"p": spec.p, "sigma": spec.sigma, "s": spec.s},
        },
        final=SpectralField(grid, u, copy=False),
    )
