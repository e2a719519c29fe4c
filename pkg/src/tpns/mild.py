"""Mild (Duhamel) solutions of the forced periodic Navier-Stokes system.

Time integration uses exponential time differencing: the heat semigroup is
applied exactly per Fourier mode and only the projected nonlinearity
``-P div(u (x) u)`` plus the force is treated explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import BlowupDetected, DimensionMismatch, InvalidParameter, InvalidTime, MeanModeNotZero, NoContraction
from .littlewood_paley import NormSpec, block_norms, besov_of_blocks, chemin_lerner_from_table, make_partition
from .spectral import Grid, SpectralField, Trajectory, leray_project_coeffs, tensor_div_coeffs

SCHEMES = ("ETD1", "ETD2")


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.01
    scheme: str = "ETD2"
    picard_tol: float = 1e-10
    picard_max_iter: int = 60
    T: float = 1.0
    samples_per_period: int = 64
    norm_p: float = 2.0
    norm_sigma: float = 1.0
    sample_every: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidParameter(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise InvalidParameter(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.picard_tol > 0:
            raise InvalidParameter("picard_tol must be positive")
        if self.picard_max_iter < 1:
            raise InvalidParameter("picard_max_iter must be at least 1")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise InvalidParameter(f"T must be positive, got {self.T}")
        if self.samples_per_period < 1:
            raise InvalidParameter("samples_per_period must be at least 1")
        if self.sample_every < 1:
            raise InvalidParameter("sample_every must be at least 1")
        NormSpec(self.norm_p, self.norm_sigma)

    @classmethod
    def for_period(cls, T: float, samples_per_period: int, **kw) -> "SolverConfig":
        """Config whose step divides the period exactly."""
        return cls(dt=T / samples_per_period, T=T, samples_per_period=samples_per_period, **kw)

    def period_consistent(self) -> bool:
        return abs(self.dt * self.samples_per_period - self.T) <= 1e-12 * self.T


# ---------------------------------------------------------------------------
# forces


def _check_solenoidal(grid: Grid, c: np.ndarray, what: str) -> None:
    scale = float(np.max(np.abs(c))) if c.size else 0.0
    if scale == 0.0:
        return
    if np.any(np.abs(c[(slice(None),) + (0,) * grid.dim]) > 1e-12 * scale):
        raise MeanModeNotZero(f"{what} must have zero mean")
    div = np.sum(grid.xi * c, axis=0)
    if float(np.max(np.abs(div))) > 1e-10 * scale * grid.k_nyquist:
        raise InvalidParameter(f"{what} must be divergence-free")


class PeriodicForce:
    """Time-periodic, divergence-free, mean-zero force sampled at ``M_t`` points of ``[0, T)``.

    Between samples the force is interpolated linearly, periodically in time.
    """

    def __init__(self, grid: Grid, period: float, samples, check: bool = True):
        if not (period > 0 and math.isfinite(period)):
            raise InvalidParameter(f"period must be positive, got {period}")
        stack = np.stack([s.coeffs if isinstance(s, SpectralField) else np.asarray(s, np.complex128) for s in samples])
        if stack.shape[1:] != (grid.dim,) + grid.shape:
            raise DimensionMismatch(f"force samples of shape {stack.shape[1:]} do not fit {grid}")
        if not np.all(np.isfinite(stack)):
            raise InvalidParameter("force samples contain non-finite values")
        if check:
            for c in stack:
                _check_solenoidal(grid, c, "force")
        self.grid = grid
        self.period = float(period)
        self.stack = stack

    @classmethod
    def constant(cls, f: SpectralField, period: float) -> "PeriodicForce":
        return cls(f.grid, period, [f])

    @classmethod
    def from_function(cls, grid: Grid, period: float, M_t: int, fn: Callable[[float], SpectralField]) -> "PeriodicForce":
        h = period / M_t
        return cls(grid, period, [fn(k * h) for k in range(M_t)])

    @property
    def M_t(self) -> int:
        return self.stack.shape[0]

    @property
    def dt(self) -> float:
        return self.period / self.M_t

    @property
    def is_constant(self) -> bool:
        return self.M_t == 1

    def coeffs_at(self, t: float) -> np.ndarray:
        if self.is_constant:
            return self.stack[0]
        x = (t % self.period) / self.dt
        n = int(math.floor(x))
        w = x - n
        n %= self.M_t
        a = self.stack[n]
        if w < 1e-14:
            return a
        return (1.0 - w) * a + w * self.stack[(n + 1) % self.M_t]

    def at(self, t: float) -> SpectralField:
        return SpectralField(self.grid, self.coeffs_at(t), copy=False)

    def scaled(self, a: float) -> "PeriodicForce":
        return PeriodicForce(self.grid, self.period, self.stack * a, check=False)

    def trajectory(self) -> Trajectory:
        """One period sampled with the endpoint ``t = T`` repeated."""
        M = max(self.M_t, 1)
        stack = np.concatenate([self.stack, self.stack[:1]]) if M > 1 else np.stack([self.stack[0], self.stack[0]])
        dt = self.dt if M > 1 else self.period
        return Trajectory.from_stack(self.grid, 0.0, dt, stack)


def _force_accessor(grid: Grid, f) -> Callable[[float], np.ndarray | None]:
    if f is None:
        return lambda t: None
    if isinstance(f, PeriodicForce):
        if f.grid != grid:
            raise DimensionMismatch("force grid differs from solution grid")
        return f.coeffs_at
    if isinstance(f, SpectralField):
        if f.grid != grid:
            raise DimensionMismatch("force grid differs from solution grid")
        c = leray_project_coeffs(grid, f.coeffs)
        return lambda t: c
    if isinstance(f, Trajectory):
        stack = np.stack([leray_project_coeffs(grid, s.coeffs) for s in f.samples])
        return lambda t: _interp_stack(stack, f.t0, f.dt, t)
    if callable(f):
        def call(t):
            v = f(t)
            c = v.coeffs if isinstance(v, SpectralField) else np.asarray(v, np.complex128)
            return leray_project_coeffs(grid, c)
        return call
    raise InvalidParameter(f"unsupported force type {type(f).__name__}")


def _interp_stack(stack: np.ndarray, t0: float, dt: float, t: float, periodic: bool = False) -> np.ndarray:
    x = (t - t0) / dt
    n_int = stack.shape[0] - 1
    if periodic:
        x %= n_int
    else:
        x = min(max(x, 0.0), float(n_int))
    n = min(int(math.floor(x)), n_int - 1)
    w = x - n
    if w < 1e-14:
        return stack[n]
    if w > 1 - 1e-14:
        return stack[n + 1]
    return (1.0 - w) * stack[n] + w * stack[n + 1]


# ---------------------------------------------------------------------------
# exponential integrators


def phi_functions(z: np.ndarray):
    """``(e^z, phi_1(z), phi_2(z))`` with ``phi_1 = (e^z-1)/z``, ``phi_2 = (e^z-1-z)/z^2``."""
    z = np.asarray(z, dtype=np.float64)
    ez = np.exp(z)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(zs)
    phi1 = np.where(small, 1 + z / 2 + z**2 / 6 + z**3 / 24 + z**4 / 120 + z**5 / 720, em1 / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z**2 / 24 + z**3 / 120 + z**4 / 720 + z**5 / 5040, (em1 - zs) / zs**2)
    return ez, phi1, phi2


@dataclass(frozen=True)
class _Propagator:
    E: np.ndarray
    hphi1: np.ndarray
    hphi2: np.ndarray

    @classmethod
    def build(cls, grid: Grid, h: float) -> "_Propagator":
        ez, p1, p2 = phi_functions(-grid.xi2 * h)
        return cls(ez, h * p1, h * p2)


def _etd_step(prop: _Propagator, uc: np.ndarray, t: float, h: float, nonlin, scheme: str) -> np.ndarray:
    n0 = nonlin(uc, t)
    a = prop.E * uc + prop.hphi1 * n0
    if scheme == "ETD1":
        return a
    return a + prop.hphi2 * (nonlin(a, t + h) - n0)


def _rhs(grid: Grid, force_at, nonlinear: bool):
    def nonlin(c, t):
        out = -tensor_div_coeffs(grid, c) if nonlinear else np.zeros_like(c)
        fc = force_at(t)
        return out if fc is None else out + fc

    return nonlin


def step_ivp(u: SpectralField, f, t: float, dt: float, scheme: str = "ETD2", nonlinear: bool = True) -> SpectralField:
    """Advance ``u`` from ``t`` to ``t + dt`` by one exponential step."""
    if scheme not in SCHEMES:
        raise InvalidParameter(f"scheme must be one of {SCHEMES}")
    if not dt > 0:
        raise InvalidParameter("dt must be positive")
    grid = u.grid
    prop = _Propagator.build(grid, dt)
    out = _etd_step(prop, u.coeffs, t, dt, _rhs(grid, _force_accessor(grid, f), nonlinear), scheme)
    if not np.all(np.isfinite(out)):
        raise BlowupDetected(t + dt, "non-finite values in the solution")
    return SpectralField(grid, out, copy=False)


def _n_steps(t0: float, t1: float, dt: float) -> int:
    if not t1 > t0:
        raise InvalidTime(f"empty interval [{t0}, {t1}]")
    n = round((t1 - t0) / dt)
    if n < 1 or abs(n * dt - (t1 - t0)) > 1e-9 * max(1.0, t1 - t0):
        raise InvalidParameter(f"dt={dt} does not divide the interval length {t1 - t0}")
    return n


def march(grid: Grid, uc: np.ndarray, t0: float, n_steps: int, dt: float, nonlin, scheme: str) -> Iterator[tuple[float, np.ndarray]]:
    """Yield ``(t, coeffs)`` after every step."""
    prop = _Propagator.build(grid, dt)
    c = uc
    for n in range(n_steps):
        t = t0 + n * dt
        c = _etd_step(prop, c, t, dt, nonlin, scheme)
        if not np.all(np.isfinite(c)):
            raise BlowupDetected(t + dt, "non-finite values in the solution")
        yield t + dt, c


def _check_initial(a: SpectralField) -> None:
    if a.ncomp != a.grid.dim:
        raise DimensionMismatch("initial data must be a vector field")
    _check_solenoidal(a.grid, a.coeffs, "initial data")


def solve_ivp(a: SpectralField, f, interval: tuple[float, float], cfg: SolverConfig,
              nonlinear: bool = True, observer: Callable[[float, np.ndarray], None] | None = None) -> Trajectory:
    """Integrate from ``u(t0) = a`` to ``t1``, storing every ``cfg.sample_every``-th step."""
    _check_initial(a)
    grid = a.grid
    t0, t1 = map(float, interval)
    n = _n_steps(t0, t1, cfg.dt)
    if n % cfg.sample_every:
        raise InvalidParameter("sample_every must divide the number of steps")
    nonlin = _rhs(grid, _force_accessor(grid, f), nonlinear)
    samples = [SpectralField(grid, a.coeffs)]
    if observer is not None:
        observer(t0, a.coeffs)
    for i, (t, c) in enumerate(march(grid, a.coeffs, t0, n, cfg.dt, nonlin, cfg.scheme), start=1):
        if i % cfg.sample_every == 0:
            samples.append(SpectralField(grid, c, copy=False))
            if observer is not None:
                observer(t, c)
    return Trajectory(grid, t0, cfg.dt * cfg.sample_every, samples)


def linear_duhamel(f: Trajectory) -> Trajectory:
    """``int_{t0}^t e^{(t-s) Delta} P f(s) ds`` with ``f`` linear between samples (exact per mode)."""
    grid = f.grid
    prop = _Propagator.build(grid, f.dt)
    a = prop.hphi1 - prop.hphi2
    b = prop.hphi2
    stack = np.stack([leray_project_coeffs(grid, s.coeffs) for s in f.samples])
    out = np.zeros_like(stack)
    for k in range(len(stack) - 1):
        out[k + 1] = prop.E * out[k] + a * stack[k] + b * stack[k + 1]
    return Trajectory.from_stack(grid, f.t0, f.dt, out)


# ---------------------------------------------------------------------------
# time-periodic problem


def periodic_duhamel_stack(grid: Grid, forcing: np.ndarray, period: float) -> np.ndarray:
    """Exact periodic Duhamel integral for a forcing stack over ``[0, T)``.

    ``forcing`` has shape ``(M, ncomp, *grid.shape)``; the returned stack has
    ``M + 1`` entries, the last one being ``t = T`` (equal to the first).
    """
    M = forcing.shape[0]
    h = period / M
    prop = _Propagator.build(grid, h)
    a = prop.hphi1 - prop.hphi2
    b = prop.hphi2
    incr = [a * forcing[k] + b * forcing[(k + 1) % M] for k in range(M)]
    acc = np.zeros_like(forcing[0])
    for k in range(M):
        acc = prop.E * acc + incr[k]
    denom = -np.expm1(-grid.xi2 * period)
    zero = denom == 0
    w0 = acc / np.where(zero, 1.0, denom)
    w0[:, zero] = 0.0
    out = np.empty((M + 1,) + forcing.shape[1:], np.complex128)
    out[0] = w0
    for k in range(M):
        out[k + 1] = prop.E * out[k] + incr[k]
    return out


def periodic_duhamel(F: PeriodicForce, t_eval=None) -> Trajectory | list[SpectralField]:
    """The unique ``T``-periodic solution of ``w' = Delta w + F`` with zero mean.

    Without ``t_eval`` the result is a trajectory on the force sample grid,
    endpoint ``t = T`` included. With ``t_eval`` a list of fields at those
    times is returned.
    """
    grid = F.grid
    zm = F.stack[(slice(None), slice(None)) + (0,) * grid.dim]
    if np.any(np.abs(zm) > 1e-14 * max(float(np.max(np.abs(F.stack))), 1e-300)):
        raise MeanModeNotZero("periodic Duhamel needs a mean-zero force")
    M = F.M_t
    stack = periodic_duhamel_stack(grid, F.stack, F.period)
    if t_eval is None:
        return Trajectory.from_stack(grid, 0.0, F.period / M, stack)
    h = F.period / M
    out = []
    for t in np.atleast_1d(np.asarray(t_eval, dtype=np.float64)):
        x = (t % F.period) / h
        n = min(int(math.floor(x)), M - 1)
        tau = (x - n) * h
        if tau <= 0:
            out.append(SpectralField(grid, stack[n]))
            continue
        # partial step of length tau with F linear from F_n towards F_{n+1}
        ez, p1, p2 = phi_functions(-grid.xi2 * tau)
        slope = (F.stack[(n + 1) % M] - F.stack[n]) / h
        c = ez * stack[n] + tau * p1 * F.stack[n] + tau * tau * p2 * slope
        out.append(SpectralField(grid, c, copy=False))
    return out


def _nonlinear_stack(grid: Grid, stack: np.ndarray) -> np.ndarray:
    return np.stack([tensor_div_coeffs(grid, c) for c in stack])


def periodic_map(F: PeriodicForce, u_stack: np.ndarray) -> np.ndarray:
    """``Phi[u]``: periodic Duhamel integral of ``P f - P div(u (x) u)``; ``u_stack`` holds ``M`` samples."""
    rhs = F.stack - _nonlinear_stack(F.grid, u_stack)
    return periodic_duhamel_stack(F.grid, rhs, F.period)


@dataclass
class PeriodicSolution:
    trajectory: Trajectory
    iterations: int
    contraction_ratios: list
    differences: list
    residual: float
    relative_residual: float
    periodicity_defect: float
    solution_norm: float
    force_norm: float
    apriori_ratio: float
    norm: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "status": "converged",
            "iterations": self.iterations,
            "contraction_ratios": list(map(float, self.contraction_ratios)),
            "differences": list(map(float, self.differences)),
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "periodicity_defect": self.periodicity_defect,
            "solution_norm": self.solution_norm,
            "force_norm": self.force_norm,
            "apriori_ratio": self.apriori_ratio,
            "norm": self.norm,
            "samples": len(self.trajectory),
            "period": self.trajectory.length,
        }


def _sup_besov(grid: Grid, stack: np.ndarray, part, spec: NormSpec) -> float:
    table = np.stack([block_norms(c, part, spec.p) for c in stack])
    return chemin_lerner_from_table(table, 1.0, spec, part)


def solve_periodic(f: PeriodicForce, cfg: SolverConfig, part=None) -> PeriodicSolution:
    """Picard iteration ``u^{k+1} = Phi[u^k]`` from ``u^0 = 0``.

    Distances are measured in ``L~inf(0, T; B^{n/p-1}_{p,sigma})``. Raises
    ``NoContraction`` when a successive-difference ratio reaches 1 or the
    iteration budget runs out.
    """
    grid = f.grid
    if abs(f.period - cfg.T) > 1e-12 * cfg.T:
        raise InvalidParameter(f"force period {f.period} differs from configured T={cfg.T}")
    if f.M_t != cfg.samples_per_period:
        if f.is_constant:
            f = PeriodicForce(grid, f.period, [f.stack[0]] * cfg.samples_per_period, check=False)
        else:
            raise InvalidParameter("force sample count differs from samples_per_period")
    if not cfg.period_consistent():
        raise InvalidParameter("dt * samples_per_period must equal T")
    part = part or make_partition(grid)
    spec = NormSpec.critical(grid.dim, cfg.norm_p, cfg.norm_sigma)
    M = f.M_t
    u = np.zeros((M,) + f.stack.shape[1:], np.complex128)
    diffs: list[float] = []
    ratios: list[float] = []
    converged = False
    new = None
    for it in range(1, cfg.picard_max_iter + 1):
        new = periodic_map(f, u)
        if not np.all(np.isfinite(new)):
            raise NoContraction(ratios, "Picard iterate became non-finite")
        d = _sup_besov(grid, new[:M] - u, part, spec)
        size = _sup_besov(grid, new[:M], part, spec)
        if diffs:
            ratio = d / diffs[-1] if diffs[-1] > 0 else 0.0
            ratios.append(ratio)
        diffs.append(d)
        u = new[:M]
        if d <= cfg.picard_tol * max(size, 1e-300):
            converged = True
            break
        if ratios and ratios[-1] >= 1.0:
            raise NoContraction(ratios, f"successive-difference ratio {ratios[-1]:.3g} >= 1 at iteration {it}")
    if not converged:
        raise NoContraction(ratios, f"no convergence within {cfg.picard_max_iter} iterations")
    final = new
    check = periodic_map(f, u)
    residual = _sup_besov(grid, check[:M] - u, part, spec)
    u_norm = _sup_besov(grid, u, part, spec)
    f_spec = NormSpec(spec.p, spec.sigma, spec.s - 2.0)
    f_norm = _sup_besov(grid, f.stack, part, f_spec)
    defect = float(np.max(np.abs(final[M] - final[0])))
    traj = Trajectory.from_stack(grid, 0.0, f.period / M, final)
    return PeriodicSolution(
        traj, it, ratios, diffs, residual,
        residual / u_norm if u_norm > 0 else 0.0, defect, u_norm, f_norm,
        u_norm / f_norm if f_norm > 0 else 0.0,
        {"p": spec.p, "sigma": spec.sigma, "s": spec.s},
    )


# ---------------------------------------------------------------------------
# perturbations of a periodic solution


class PeriodicTrajectory:
    """Periodic linear-in-time interpolation of one period of samples (endpoint included)."""

    def __init__(self, traj: Trajectory):
        self.grid = traj.grid
        self.period = traj.length
        self.dt = traj.dt
        mask = self.grid.dealias_mask
        self.phys = np.stack([self.grid.inverse_real(s.coeffs * mask) for s in traj.samples])

    def physical_at(self, t: float) -> np.ndarray:
        return _interp_stack(self.phys, 0.0, self.dt, t, periodic=True)


def perturbation_rhs(grid: Grid, base: PeriodicTrajectory):
    """``w -> -P div(U (x) w + w (x) U + w (x) w)`` with ``U`` the periodic base flow."""
    d = grid.dim
    mask = grid.dealias_mask
    xi = grid.xi
    pairs = [(k, l) for k in range(d) for l in range(k, d)]

    def nonlin(c, t):
        U = base.physical_at(t)
        W = grid.inverse_real(c * mask)
        prods = grid.forward(np.stack([U[k] * W[l] + W[k] * U[l] + W[k] * W[l] for k, l in pairs]))
        table = {}
        for idx, (k, l) in enumerate(pairs):
            table[(k, l)] = table[(l, k)] = prods[idx]
        out = np.empty_like(c)
        for l in range(d):
            out[l] = sum(1j * xi[k] * table[(k, l)] for k in range(d))
        return -leray_project_coeffs(grid, out * mask)

    return nonlin


@dataclass
class PerturbationResult:
    times: np.ndarray
    norms: np.ndarray
    trajectory: Trajectory | None
    norm: dict

    def series(self) -> list[tuple[float, float]]:
        return list(zip(map(float, self.times), map(float, self.norms)))


def solve_perturbation(w0: SpectralField, u_per: Trajectory, cfg: SolverConfig, horizon: float,
                       q: float = 2.0, sigma: float = 1.0, store: bool = False, part=None) -> PerturbationResult:
    """Evolve ``w = u - u_per`` and record ``||w(t)||_{B^{n/q-1}_{q,sigma}}`` at each stored step."""
    _check_initial(w0)
    grid = w0.grid
    if u_per.grid != grid:
        raise DimensionMismatch("periodic solution lives on a different grid")
    part = part or make_partition(grid)
    spec = NormSpec.critical(grid.dim, q, sigma)
    n = _n_steps(0.0, horizon, cfg.dt)
    nonlin = perturbation_rhs(grid, PeriodicTrajectory(u_per))
    times = [0.0]
    norms = [besov_of_blocks(block_norms(w0.coeffs, part, q), part, spec.s, sigma)]
    samples = [w0] if store else None
    for i, (t, c) in enumerate(march(grid, w0.coeffs, 0.0, n, cfg.dt, nonlin, cfg.scheme), start=1):
        if i % cfg.sample_every == 0:
            times.append(t)
            norms.append(besov_of_blocks(block_norms(c, part, q), part, spec.s, sigma))
            if store:
                samples.append(SpectralField(grid, c, copy=False))
    traj = Trajectory(grid, 0.0, cfg.dt * cfg.sample_every, samples) if store else None
    return PerturbationResult(np.array(times), np.array(norms), traj, {"q": q, "sigma": sigma, "s": spec.s})


def trajectory_agreement(t1: Trajectory, t2: Trajectory, spec: NormSpec, part=None) -> float:
    """``sup_t ||t1(t) - t2(t)||`` in the Besov norm ``spec`` over common sample times."""
    if t1.grid != t2.grid:
        raise DimensionMismatch("trajectories live on different grids")
    if len(t1) != len(t2) or abs(t1.dt - t2.dt) > 1e-12 * t1.dt or abs(t1.t0 - t2.t0) > 1e-12:
        raise InvalidParameter("trajectories must share the time grid")
    part = part or make_partition(t1.grid)
    vals = [besov_of_blocks(block_norms(a.coeffs - b.coeffs, part, spec.p), part, spec.s, spec.sigma)
            for a, b in zip(t1.samples, t2.samples)]
    return float(max(vals))
