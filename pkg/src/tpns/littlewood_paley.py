"""Dyadic frequency decomposition and the Besov / Chemin-Lerner norms built on it.

The profile is ``phi_0(r) = chi(r) - chi(2r)`` with ``chi`` a C-infinity cutoff
equal to 1 on ``r <= 1`` and 0 on ``r >= 2``. Its support is
``1/2 <= r <= 2`` and the blocks telescope to exactly 1 on ``[2^a, 2^b]``.
The partition range is chosen to cover every nonzero lattice frequency, so
``sum_j Delta_j u = u`` holds for any mean-zero field.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, GridTooCoarse, InvalidParameter, MeanModeNotZero
from .spectral import Grid, SpectralField, Trajectory

TRUNCATION_TOL = 1e-3


class TruncationWarning(UserWarning):
    """A dyadic index or norm falls outside the resolvable range."""


def smooth_step(x) -> np.ndarray:
    """C-infinity step: 0 for ``x <= 0``, 1 for ``x >= 1``, symmetric about 1/2."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    out[x >= 1] = 1.0
    mid = (x > 0) & (x < 1)
    xm = x[mid]
    a = np.exp(-1.0 / xm)
    b = np.exp(-1.0 / (1.0 - xm))
    out[mid] = a / (a + b)
    return out


def cutoff(r) -> np.ndarray:
    """Radial cutoff: 1 on ``r <= 1``, 0 on ``r >= 2``."""
    return smooth_step(2.0 - np.asarray(r, dtype=np.float64))


def lp_profile(r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    return cutoff(r) - cutoff(2.0 * r)


@dataclass(frozen=True)
class NormSpec:
    """Exponents of ``B^s_{p,sigma}`` and, for Chemin-Lerner norms, the time exponent ``r``."""

    p: float = 2.0
    sigma: float = 1.0
    s: float = 0.0
    r: float = math.inf

    def __post_init__(self):
        for name in ("p", "sigma", "r"):
            v = getattr(self, name)
            if not (v >= 1):
                raise InvalidParameter(f"{name} must lie in [1, inf], got {v}")
        if not math.isfinite(self.s):
            raise InvalidParameter(f"s must be finite, got {self.s}")

    @classmethod
    def critical(cls, dim: int, p: float = 2.0, sigma: float = 1.0, r: float = math.inf) -> "NormSpec":
        """Scaling-critical velocity norm ``B^{n/p - 1}_{p,sigma}``."""
        return cls(p, sigma, dim / p - 1.0, r)


@dataclass
class NormReport:
    norm_kind: str
    p: float
    sigma: float
    s: float
    r: float
    j_min: int
    j_max: int
    value: float
    truncation_warning: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("p", "sigma", "r"):
            if math.isinf(d[k]):
                d[k] = "inf"
        return d


@dataclass(frozen=True, eq=False)
class DyadicPartition:
    grid: Grid
    j_min: int
    j_max: int
    sharp: bool = False
    _weights: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def js(self) -> np.ndarray:
        return np.arange(self.j_min, self.j_max + 1)

    def __len__(self) -> int:
        return self.j_max - self.j_min + 1

    def contains(self, j: int) -> bool:
        return self.j_min <= j <= self.j_max

    def weight(self, j: int) -> np.ndarray:
        w = self._weights.get(j)
        if w is None:
            r = self.grid.xi_abs * 2.0 ** (-j)
            if self.sharp:
                w = ((r >= 2**-0.5) & (r < 2**0.5)).astype(np.float64)
            else:
                w = lp_profile(r)
            w[(0,) * self.grid.dim] = 0.0
            self._weights[j] = w
        return w

    def weights(self) -> list[np.ndarray]:
        return [self.weight(int(j)) for j in self.js]

    def residual(self) -> float:
        """Max over nonzero lattice frequencies of ``|sum_j phi_j - 1|``."""
        total = np.sum(self.weights(), axis=0)
        nz = (self.grid.xi2 > 0) & ~self.grid.nyquist_mask
        return float(np.max(np.abs(total[nz] - 1.0)))


def make_partition(grid: Grid, sharp: bool = False) -> DyadicPartition:
    top = float(np.max(grid.xi_abs[~grid.nyquist_mask]))
    lo = math.log2(grid.fundamental)
    hi = math.log2(top)
    if sharp:
        j_min = math.floor(lo + 0.5)
        j_max = math.floor(hi - 0.5) + 1
    else:
        j_min = math.floor(lo + 1e-12)
        j_max = math.ceil(hi - 1e-12)
    if j_max - j_min + 1 < 3:
        raise GridTooCoarse(f"grid resolves only {j_max - j_min + 1} dyadic shells")
    return DyadicPartition(grid, j_min, j_max, sharp)


def _check_partition(u_grid: Grid, part: DyadicPartition) -> None:
    if part.grid != u_grid:
        raise DimensionMismatch("partition was built for a different grid")


def dyadic_block(u: SpectralField, j: int, part: DyadicPartition) -> SpectralField:
    """``Delta_j u``; indices outside the resolvable range give the zero field."""
    _check_partition(u.grid, part)
    if not part.contains(j):
        warnings.warn(f"block {j} is outside [{part.j_min}, {part.j_max}]", TruncationWarning, stacklevel=2)
        return SpectralField.zeros(u.grid, u.ncomp)
    return SpectralField(u.grid, u.coeffs * part.weight(j), True, copy=False)


def _pointwise_magnitude(vals: np.ndarray) -> np.ndarray:
    return np.abs(vals[0]) if vals.shape[0] == 1 else np.sqrt(np.sum(vals**2, axis=0))


def _lp_of_magnitude(mag: np.ndarray, p: float, cell_volume: float) -> float:
    top = float(np.max(mag)) if mag.size else 0.0
    if top == 0.0:
        return 0.0
    if math.isinf(p):
        return top
    return top * float(cell_volume * np.sum((mag / top) ** p)) ** (1.0 / p)


def lp_norm_physical(u: SpectralField, p: float) -> float:
    """Discrete ``L^p`` norm over the box of the pointwise Euclidean magnitude."""
    if not p >= 1:
        raise InvalidParameter(f"p must lie in [1, inf], got {p}")
    return _lp_of_magnitude(_pointwise_magnitude(u.to_physical()), p, u.grid.cell_volume)


def block_norms(coeffs: np.ndarray, part: DyadicPartition, p: float) -> np.ndarray:
    """``||Delta_j u||_{L^p}`` for every ``j`` in the partition (one coefficient stack)."""
    grid = part.grid
    if p == 2:
        power = np.sum(np.abs(coeffs) ** 2, axis=0)
        return np.array([math.sqrt(grid.volume * float(np.sum(w * w * power))) for w in part.weights()])
    out = np.empty(len(part))
    for i, w in enumerate(part.weights()):
        mag = _pointwise_magnitude(grid.inverse_real(coeffs * w))
        out[i] = _lp_of_magnitude(mag, p, grid.cell_volume)
    return out


def block_norm_table(traj: Trajectory, part: DyadicPartition, p: float) -> np.ndarray:
    """Array of shape ``(n_samples, n_blocks)``."""
    _check_partition(traj.grid, part)
    return np.stack([block_norms(s.coeffs, part, p) for s in traj.samples])


def lsigma(values: np.ndarray, sigma: float) -> float:
    v = np.abs(np.asarray(values, dtype=np.float64))
    top = float(np.max(v)) if v.size else 0.0
    if top == 0.0:
        return 0.0
    if math.isinf(sigma):
        return top
    return top * float(np.sum((v / top) ** sigma)) ** (1.0 / sigma)


def time_lr(series: np.ndarray, dt: float, r: float) -> np.ndarray:
    """Trapezoid ``L^r`` norm in time of each column of ``series`` (max-scaled)."""
    series = np.abs(np.asarray(series, dtype=np.float64))
    if math.isinf(r):
        return np.max(series, axis=0)
    top = np.max(series, axis=0)
    safe = np.where(top > 0, top, 1.0)
    integ = np.trapezoid((series / safe) ** r, dx=dt, axis=0)
    return np.where(top > 0, top * integ ** (1.0 / r), 0.0)


def _weighted(values: np.ndarray, part: DyadicPartition, s: float) -> np.ndarray:
    return values * 2.0 ** (s * part.js.astype(np.float64))


def _edge_warning(weighted: np.ndarray) -> bool:
    top = float(np.max(weighted)) if weighted.size else 0.0
    if top == 0.0:
        return False
    return bool(weighted[0] > TRUNCATION_TOL * top or weighted[-1] > TRUNCATION_TOL * top)


def besov_report(u: SpectralField, spec: NormSpec, part: DyadicPartition) -> NormReport:
    _check_partition(u.grid, part)
    weighted = _weighted(block_norms(u.coeffs, part, spec.p), part, spec.s)
    return NormReport(
        "besov", spec.p, spec.sigma, spec.s, math.inf, part.j_min, part.j_max,
        lsigma(weighted, spec.sigma), _edge_warning(weighted),
    )


def besov_norm(u: SpectralField, spec: NormSpec, part: DyadicPartition) -> float:
    """``|| {2^{sj} ||Delta_j u||_{L^p}}_j ||_{l^sigma}`` over the resolvable range."""
    return besov_report(u, spec, part).value


def chemin_lerner_from_table(table: np.ndarray, dt: float, spec: NormSpec, part: DyadicPartition) -> float:
    return lsigma(_weighted(time_lr(table, dt, spec.r), part, spec.s), spec.sigma)


def chemin_lerner_report(traj: Trajectory, spec: NormSpec, part: DyadicPartition) -> NormReport:
    table = block_norm_table(traj, part, spec.p)
    weighted = _weighted(time_lr(table, traj.dt, spec.r), part, spec.s)
    return NormReport(
        "chemin_lerner", spec.p, spec.sigma, spec.s, spec.r, part.j_min, part.j_max,
        lsigma(weighted, spec.sigma), _edge_warning(weighted),
    )


def chemin_lerner_norm(traj: Trajectory, spec: NormSpec, part: DyadicPartition) -> float:
    """``|| {2^{sj} ||Delta_j u||_{L^r(I; L^p)}}_j ||_{l^sigma}`` with trapezoid time quadrature."""
    return chemin_lerner_report(traj, spec, part).value


def triple_norm_specs(delta: float) -> tuple[NormSpec, NormSpec]:
    if not 0 < delta <= 0.25:
        raise InvalidParameter(f"delta must lie in (0, 1/4], got {delta}")
    return NormSpec(2, 1, 0.0, math.inf), NormSpec(2, 2, delta**2, 2.0 / delta**2)


def triple_norm_from_table(table: np.ndarray, dt: float, delta: float, part: DyadicPartition) -> float:
    """Triple norm from a precomputed ``L^2`` block table."""
    s1, s2 = triple_norm_specs(delta)
    return chemin_lerner_from_table(table, dt, s1, part) + chemin_lerner_from_table(table, dt, s2, part) / delta


def triple_norm(traj: Trajectory, delta: float, part: DyadicPartition) -> float:
    """``||v||_{L~inf(B^0_{2,1})} + delta^{-1} ||v||_{L~^{2/delta^2}(H^{delta^2})}``."""
    if traj.grid.dim != 2:
        raise DimensionMismatch("the triple norm is defined for 2D trajectories")
    triple_norm_specs(delta)
    return triple_norm_from_table(block_norm_table(traj, part, 2.0), traj.dt, delta, part)


# ---------------------------------------------------------------------------
# Bony decomposition


def _require_mean_zero(*fields: SpectralField) -> None:
    for f in fields:
        scale = float(np.max(np.abs(f.coeffs))) if f.coeffs.size else 0.0
        if np.any(np.abs(f.zero_mode) > 1e-14 * max(scale, 1e-300)):
            raise MeanModeNotZero("paraproducts are defined on mean-zero fields")


def _physical_blocks(u: SpectralField, part: DyadicPartition) -> np.ndarray:
    c = u.coeffs * u.grid.dealias_mask
    return np.stack([u.grid.inverse_real(c * w) for w in part.weights()])


def _check_pair(f: SpectralField, g: SpectralField, part: DyadicPartition) -> None:
    if f.grid != g.grid:
        raise DimensionMismatch(f"grid mismatch: {f.grid} vs {g.grid}")
    _check_partition(f.grid, part)
    if f.ncomp != g.ncomp and 1 not in (f.ncomp, g.ncomp):
        raise DimensionMismatch(f"cannot multiply {f.ncomp} and {g.ncomp} components")
    _require_mean_zero(f, g)


def _finish(grid: Grid, phys: np.ndarray) -> SpectralField:
    return SpectralField(grid, grid.forward(phys) * grid.dealias_mask, copy=False)


def dealiased_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Componentwise ``f g`` with inputs and output truncated by the dealiasing mask."""
    grid = f.grid
    fp = grid.inverse_real(f.coeffs * grid.dealias_mask)
    gp = grid.inverse_real(g.coeffs * grid.dealias_mask)
    return _finish(grid, fp * gp)


def _low_sums(blocks: np.ndarray) -> np.ndarray:
    """``S[k] = sum_{l <= k-3} blocks[l]``."""
    csum = np.cumsum(blocks, axis=0)
    low = np.zeros_like(blocks)
    low[3:] = csum[:-3]
    return low


def bony_decomposition(f: SpectralField, g: SpectralField, part: DyadicPartition):
    """Return ``(T_f g, R(f, g), T_g f)``; the three sum to the dealiased product."""
    _check_pair(f, g, part)
    F = _physical_blocks(f, part)
    G = _physical_blocks(g, part)
    t_fg = np.sum(_low_sums(F) * G, axis=0)
    t_gf = np.sum(_low_sums(G) * F, axis=0)
    nb = len(part)
    res = np.zeros(np.broadcast_shapes(F.shape[1:], G.shape[1:]))
    for k in range(nb):
        lo, hi = max(0, k - 2), min(nb, k + 3)
        res += F[k] * np.sum(G[lo:hi], axis=0)
    grid = f.grid
    return _finish(grid, t_fg), _finish(grid, res), _finish(grid, t_gf)


def bony_T(f: SpectralField, g: SpectralField, part: DyadicPartition) -> SpectralField:
    """Paraproduct ``T_f g = sum_k (sum_{l <= k-3} Delta_l f) Delta_k g``."""
    _check_pair(f, g, part)
    F = _physical_blocks(f, part)
    G = _physical_blocks(g, part)
    return _finish(f.grid, np.sum(_low_sums(F) * G, axis=0))


def bony_R(f: SpectralField, g: SpectralField, part: DyadicPartition) -> SpectralField:
    """Resonant term ``R(f, g) = sum_k sum_{|k-l| <= 2} Delta_k f Delta_l g``."""
    return bony_decomposition(f, g, part)[1]


def besov_of_blocks(values: Sequence[float], part: DyadicPartition, s: float, sigma: float) -> float:
    return lsigma(_weighted(np.asarray(values, dtype=np.float64), part, s), sigma)
