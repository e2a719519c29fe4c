"""Fourier representation of periodic vector fields and the exact multipliers
acting on them.

Coefficients use the convention ``c_m = N^{-d} * fft(u)_m`` so that a unit
plane wave ``exp(i xi.x)`` has coefficient 1. The physical frequency of the
integer mode ``m`` is ``xi = 2 pi m / L``. The Nyquist plane (``m_i = -N/2``)
has no conjugate partner and is kept at zero everywhere.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import (
    DimensionMismatch,
    GridTooCoarse,
    InvalidFieldData,
    InvalidParameter,
    InvalidTime,
    MeanModeNotZero,
    UnsupportedScale,
)

SNAPSHOT_MAGIC = b"BNSF"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the box ``[0, L)^dim`` with ``N`` points per axis."""

    dim: int
    L: float
    N: int
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise InvalidParameter(f"dim must be 2 or 3, got {self.dim}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise InvalidParameter(f"box length must be positive, got {self.L}")
        if int(self.N) != self.N or self.N < 8 or self.N % 2:
            raise InvalidParameter(f"N must be an even integer >= 8, got {self.N}")
        if not 0 < self.dealias_fraction <= 1:
            raise InvalidParameter(f"dealias_fraction must lie in (0, 1], got {self.dealias_fraction}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def fundamental(self) -> float:
        return 2.0 * math.pi / self.L

    @property
    def k_nyquist(self) -> float:
        return math.pi * self.N / self.L

    @property
    def k_dealias(self) -> float:
        """Largest retained per-axis frequency after dealiasing."""
        return self.fundamental * math.floor(self.dealias_fraction * self.N / 2)

    @property
    def cell_volume(self) -> float:
        return (self.L / self.N) ** self.dim

    @property
    def volume(self) -> float:
        return self.L**self.dim

    @cached_property
    def m(self) -> np.ndarray:
        k1 = np.fft.fftfreq(self.N, 1.0 / self.N).astype(np.int64)
        return np.stack(np.meshgrid(*([k1] * self.dim), indexing="ij"))

    @cached_property
    def xi(self) -> np.ndarray:
        return self.fundamental * self.m

    @cached_property
    def xi2(self) -> np.ndarray:
        return np.sum(self.xi**2, axis=0)

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self.xi2)

    @cached_property
    def inv_xi2(self) -> np.ndarray:
        """``1/|xi|^2`` with the zero mode mapped to 0."""
        out = np.zeros_like(self.xi2)
        nz = self.xi2 > 0
        out[nz] = 1.0 / self.xi2[nz]
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        return np.any(self.m == -self.N // 2, axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cut = self.dealias_fraction * self.N / 2
        keep = np.all(np.abs(self.m) <= cut, axis=0)
        return keep & ~self.nyquist_mask

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        x1 = np.arange(self.N) * (self.L / self.N)
        return tuple(np.meshgrid(*([x1] * self.dim), indexing="ij"))

    def with_box_length(self, L: float) -> "Grid":
        return Grid(self.dim, L, self.N, self.dealias_fraction)

    # transforms on raw coefficient arrays (leading component axis)
    def forward(self, values: np.ndarray) -> np.ndarray:
        return sfft.fftn(values, axes=self.axes) / self.N**self.dim

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.ifftn(coeffs, axes=self.axes) * self.N**self.dim

    def inverse_real(self, coeffs: np.ndarray) -> np.ndarray:
        return self.inverse(coeffs).real


class SpectralField:
    """Fourier coefficients of a real periodic field with ``ncomp`` components.

    ``coeffs`` has shape ``(ncomp, N, ..., N)``. Instances are treated as
    immutable: operations return new fields.
    """

    __slots__ = ("grid", "coeffs", "mean_mode_zeroed")

    def __init__(self, grid: Grid, coeffs, mean_mode_zeroed: bool | None = None, copy: bool = True):
        arr = np.array(coeffs, dtype=np.complex128) if copy else np.asarray(coeffs, dtype=np.complex128)
        if arr.shape == grid.shape:
            arr = arr[np.newaxis]
        if arr.ndim != grid.dim + 1 or arr.shape[1:] != grid.shape:
            raise DimensionMismatch(f"coefficient shape {arr.shape} does not fit grid {grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidFieldData("coefficients contain non-finite values")
        self.grid = grid
        self.coeffs = arr
        if mean_mode_zeroed is None:
            mean_mode_zeroed = bool(np.all(arr[(slice(None),) + (0,) * grid.dim] == 0))
        self.mean_mode_zeroed = mean_mode_zeroed

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int | None = None) -> "SpectralField":
        ncomp = grid.dim if ncomp is None else ncomp
        return cls(grid, np.zeros((ncomp,) + grid.shape, np.complex128), True, copy=False)

    @classmethod
    def from_physical(cls, grid: Grid, values) -> "SpectralField":
        vals = np.asarray(values, dtype=np.float64)
        if vals.shape == grid.shape:
            vals = vals[np.newaxis]
        if vals.shape[1:] != grid.shape:
            raise DimensionMismatch(f"sample shape {vals.shape} does not fit grid {grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidFieldData("physical samples contain non-finite values")
        c = grid.forward(vals)
        c[:, grid.nyquist_mask] = 0.0
        return cls(grid, c, copy=False)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    @property
    def zero_mode(self) -> np.ndarray:
        return self.coeffs[(slice(None),) + (0,) * self.grid.dim]

    def to_physical(self) -> np.ndarray:
        return self.grid.inverse_real(self.coeffs)

    def imag_residual(self) -> float:
        """Largest imaginary part of the physical field relative to its magnitude."""
        z = self.grid.inverse(self.coeffs)
        scale = np.max(np.abs(z))
        return float(np.max(np.abs(z.imag)) / scale) if scale > 0 else 0.0

    def l2_norm(self) -> float:
        return float(math.sqrt(self.grid.volume * np.sum(np.abs(self.coeffs) ** 2)))

    def inner(self, other: "SpectralField") -> float:
        _check_same_grid(self, other)
        return float(self.grid.volume * np.sum(self.coeffs * np.conj(other.coeffs)).real)

    def with_mean_zeroed(self) -> "SpectralField":
        c = self.coeffs.copy()
        c[(slice(None),) + (0,) * self.grid.dim] = 0.0
        return SpectralField(self.grid, c, True, copy=False)

    def _like(self, coeffs) -> "SpectralField":
        return SpectralField(self.grid, coeffs, copy=False)

    def __add__(self, other):
        _check_same_grid(self, other)
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return self._like(self.coeffs - other.coeffs)

    def __neg__(self):
        return self._like(-self.coeffs)

    def __mul__(self, a):
        if isinstance(a, SpectralField):
            return NotImplemented
        return self._like(self.coeffs * float(a))

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self._like(self.coeffs / float(a))

    def __repr__(self):
        return f"SpectralField(ncomp={self.ncomp}, grid={self.grid})"


def _check_same_grid(*fields: SpectralField) -> None:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise DimensionMismatch(f"grid mismatch: {f.grid} vs {g}")


@dataclass
class Trajectory:
    """Uniformly sampled field history ``u(t0 + n dt)``."""

    grid: Grid
    t0: float
    dt: float
    samples: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.samples) < 2:
            raise InvalidParameter("a trajectory needs at least two samples")
        if not self.dt > 0:
            raise InvalidParameter(f"dt must be positive, got {self.dt}")
        for s in self.samples:
            if s.grid != self.grid:
                raise DimensionMismatch("trajectory samples must share the grid")

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, i) -> SpectralField:
        return self.samples[i]

    def __iter__(self) -> Iterator[SpectralField]:
        return iter(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def length(self) -> float:
        return (len(self.samples) - 1) * self.dt

    @property
    def t1(self) -> float:
        return self.t0 + self.length

    def map(self, fn: Callable[[SpectralField], SpectralField]) -> "Trajectory":
        return Trajectory(self.grid, self.t0, self.dt, [fn(s) for s in self.samples])

    def scaled(self, a: float) -> "Trajectory":
        return self.map(lambda s: s * a)

    def stacked(self) -> np.ndarray:
        return np.stack([s.coeffs for s in self.samples])

    @classmethod
    def from_stack(cls, grid: Grid, t0: float, dt: float, stack: np.ndarray) -> "Trajectory":
        return cls(grid, t0, dt, [SpectralField(grid, c, copy=False) for c in stack])


# ---------------------------------------------------------------------------
# sampling and exact Fourier multipliers


def sample_function(grid: Grid, fn: Callable[..., np.ndarray]) -> SpectralField:
    """Transform ``fn(x_1, ..., x_d)`` sampled at the grid points.

    ``fn`` returns either a scalar array of the grid shape or a stack of
    components.
    """
    vals = np.asarray(fn(*grid.coords), dtype=np.float64)
    if vals.ndim == 0:
        vals = np.full(grid.shape, float(vals))
    return SpectralField.from_physical(grid, vals)


def leray_project_coeffs(grid: Grid, c: np.ndarray) -> np.ndarray:
    xi = grid.xi
    dot = np.sum(xi * c, axis=0) * grid.inv_xi2
    out = c - xi * dot
    out[(slice(None),) + (0,) * grid.dim] = 0.0
    return out


def leray_project(u: SpectralField) -> SpectralField:
    """Apply ``I - xi xi^T / |xi|^2`` mode by mode; the mean mode is removed."""
    if u.ncomp != u.grid.dim:
        raise DimensionMismatch("Leray projection needs a vector field")
    return SpectralField(u.grid, leray_project_coeffs(u.grid, u.coeffs), True, copy=False)


def heat_propagate(u: SpectralField, t: float) -> SpectralField:
    if t < 0:
        raise InvalidTime(f"heat semigroup needs t >= 0, got {t}")
    return SpectralField(u.grid, u.coeffs * np.exp(-u.grid.xi2 * t), u.mean_mode_zeroed, copy=False)


def divergence(u: SpectralField) -> SpectralField:
    if u.ncomp != u.grid.dim:
        raise DimensionMismatch("divergence needs a vector field")
    return SpectralField(u.grid, 1j * np.sum(u.grid.xi * u.coeffs, axis=0), copy=False)


def gradient(s: SpectralField) -> SpectralField:
    if s.ncomp != 1:
        raise DimensionMismatch("gradient needs a scalar field")
    return SpectralField(s.grid, 1j * s.grid.xi * s.coeffs[0], copy=False)


def laplacian(u: SpectralField) -> SpectralField:
    return SpectralField(u.grid, -u.grid.xi2 * u.coeffs, copy=False)


def perp_gradient(s: SpectralField) -> SpectralField:
    """``(-d_2 s, d_1 s)`` for a scalar field on a 2D grid."""
    if s.grid.dim != 2 or s.ncomp != 1:
        raise DimensionMismatch("perp_gradient needs a scalar field on a 2D grid")
    xi = s.grid.xi
    c = s.coeffs[0]
    return SpectralField(s.grid, np.stack([-1j * xi[1] * c, 1j * xi[0] * c]), True, copy=False)


def inverse_laplacian(u: SpectralField) -> SpectralField:
    """``(-Delta)^{-1}``: divide every nonzero mode by ``|xi|^2``."""
    scale = float(np.max(np.abs(u.coeffs))) if u.coeffs.size else 0.0
    if np.any(np.abs(u.zero_mode) > 1e-14 * max(scale, 1e-300)):
        raise MeanModeNotZero("(-Delta)^{-1} is only defined on mean-zero fields")
    return SpectralField(u.grid, u.coeffs * u.grid.inv_xi2, True, copy=False)


def dealias(u: SpectralField) -> SpectralField:
    return SpectralField(u.grid, u.coeffs * u.grid.dealias_mask, copy=False)


def tensor_div_coeffs(grid: Grid, uc: np.ndarray, vc: np.ndarray | None = None, project: bool = True) -> np.ndarray:
    """Coefficients of ``P div(u (x) v)``, with ``(div(u (x) v))_l = sum_k d_k(u_k v_l)``.

    Inputs and output are truncated by the dealiasing mask; ``vc=None`` means
    ``v = u`` and exploits the symmetry of ``u (x) u``.
    """
    d = grid.dim
    mask = grid.dealias_mask
    up = grid.inverse_real(uc * mask)
    xi = grid.xi
    if vc is None:
        pairs = [(k, l) for k in range(d) for l in range(k, d)]
        prods = grid.forward(np.stack([up[k] * up[l] for k, l in pairs]))
        table = {}
        for idx, (k, l) in enumerate(pairs):
            table[(k, l)] = table[(l, k)] = prods[idx]
    else:
        vp = grid.inverse_real(vc * mask)
        pairs = [(k, l) for k in range(d) for l in range(d)]
        prods = grid.forward(np.stack([up[k] * vp[l] for k, l in pairs]))
        table = {pair: prods[idx] for idx, pair in enumerate(pairs)}
    out = np.empty((d,) + grid.shape, np.complex128)
    for l in range(d):
        acc = 1j * xi[0] * table[(0, l)]
        for k in range(1, d):
            acc += 1j * xi[k] * table[(k, l)]
        out[l] = acc
    out *= mask
    if project:
        out = leray_project_coeffs(grid, out)
    return out


def nonlinear_tensor_div(u: SpectralField, v: SpectralField) -> SpectralField:
    """Dealiased ``P div(u (x) v)``."""
    _check_same_grid(u, v)
    if u.ncomp != u.grid.dim or v.ncomp != v.grid.dim:
        raise DimensionMismatch("tensor divergence needs vector fields")
    vc = None if v is u else v.coeffs
    return SpectralField(u.grid, tensor_div_coeffs(u.grid, u.coeffs, vc), True, copy=False)


class ScaleResult(NamedTuple):
    field: SpectralField
    dropped_modes: int
    dropped_energy_fraction: float


def _power_of_two_exponent(lam: float) -> int:
    if not (lam > 0 and math.isfinite(lam)):
        raise UnsupportedScale(f"scale must be a positive power of two, got {lam}")
    k = round(math.log2(lam))
    if abs(k) > 16 or 2.0**k != lam:
        raise UnsupportedScale(f"scale must be 2^k with |k| <= 16, got {lam}")
    return k


def scale_field(u: SpectralField, lam: float, rescale_box: bool = True) -> ScaleResult:
    """Velocity scaling ``u_lam(x) = lam * u(lam x)`` for ``lam = 2^k``.

    With ``rescale_box`` (default) the result lives on the box ``L / lam``: the
    coefficient array is reused, every physical frequency is multiplied by
    ``lam`` and nothing is lost, so LP block ``j`` becomes block ``j + k``.
    Without it the result stays on the original lattice; the coefficient of
    mode ``m`` moves to ``lam m`` and modes leaving the lattice are dropped.
    On a fixed torus ``u(lam x)`` repeats ``lam^d`` times, so its ``L^p``
    norms do not pick up the whole-space Jacobian.
    """
    k = _power_of_two_exponent(lam)
    grid = u.grid
    total = float(np.sum(np.abs(u.coeffs) ** 2))
    if rescale_box:
        return ScaleResult(SpectralField(grid.with_box_length(grid.L / lam), u.coeffs * lam, u.mean_mode_zeroed), 0, 0.0)
    if k == 0:
        return ScaleResult(SpectralField(grid, u.coeffs, u.mean_mode_zeroed), 0, 0.0)
    m = grid.m
    half = grid.N // 2
    if k > 0:
        factor = 2**k
        target = m * factor
        keep = np.all(np.abs(target) < half, axis=0)
    else:
        factor = 2 ** (-k)
        keep = np.all(m % factor == 0, axis=0)
        target = m // factor
    keep &= ~grid.nyquist_mask
    out = np.zeros_like(u.coeffs)
    idx = tuple(np.mod(target[i][keep], grid.N) for i in range(grid.dim))
    out[(slice(None),) + idx] = lam * u.coeffs[:, keep]
    tiny = 1e-14 * float(np.max(np.abs(u.coeffs))) if u.coeffs.size else 0.0
    lost = ~keep & np.any(np.abs(u.coeffs) > tiny, axis=0)
    dropped_energy = float(np.sum(np.abs(u.coeffs[:, ~keep]) ** 2))
    frac = dropped_energy / total if total > 0 else 0.0
    return ScaleResult(SpectralField(grid, out, copy=False), int(np.count_nonzero(lost)), frac)


# ---------------------------------------------------------------------------
# seeded random fields


def random_field(
    grid: Grid,
    seed: int,
    k_max: float | None = None,
    k_min: float = 0.0,
    slope: float = -2.0,
    ncomp: int | None = None,
    divergence_free: bool = True,
    rms: float = 1.0,
) -> SpectralField:
    """Gaussian random field with ``|c(xi)|^2 ~ |xi|^slope`` for ``k_min < |xi| <= k_max``.

    Coefficients are drawn on a canonical lattice fixed by ``(L, k_max)``, so
    the same seed gives the same function on every resolution that resolves
    the band.
    """
    ncomp = grid.dim if ncomp is None else ncomp
    if k_max is None:
        k_max = 0.9 * grid.k_dealias
    mk = int(math.floor(k_max / grid.fundamental + 1e-9))
    if mk < 1:
        raise GridTooCoarse(f"k_max={k_max} is below the fundamental frequency {grid.fundamental}")
    if mk > grid.dealias_fraction * grid.N / 2:
        raise GridTooCoarse(f"k_max={k_max} exceeds the dealiasing cutoff {grid.k_dealias}")
    rng = np.random.default_rng(seed)
    can = (2 * mk + 1,) * grid.dim
    z = rng.standard_normal((ncomp,) + can) + 1j * rng.standard_normal((ncomp,) + can)
    z = 0.5 * (z + np.conj(np.flip(z, axis=tuple(range(1, grid.dim + 1)))))
    r1 = np.arange(-mk, mk + 1)
    mm = np.stack(np.meshgrid(*([r1] * grid.dim), indexing="ij"))
    kk = grid.fundamental * np.sqrt(np.sum(mm.astype(float) ** 2, axis=0))
    band = (kk > k_min) & (kk <= k_max) & (kk > 0)
    amp = np.zeros_like(kk)
    amp[band] = kk[band] ** (slope / 2.0)
    z = z * amp
    c = np.zeros((ncomp,) + grid.shape, np.complex128)
    idx = tuple(np.mod(mm[i], grid.N) for i in range(grid.dim))
    c[(slice(None),) + idx] = z
    if divergence_free:
        if ncomp != grid.dim:
            raise DimensionMismatch("divergence-free random field needs dim components")
        c = leray_project_coeffs(grid, c)
    norm = math.sqrt(np.sum(np.abs(c) ** 2))
    if norm > 0:
        c *= rms / norm
    return SpectralField(grid, c, True, copy=False)


# ---------------------------------------------------------------------------
# snapshot files


def write_snapshot(path, u: SpectralField) -> None:
    g = u.grid
    header = struct.pack("<4sII", SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.dim)
    header += struct.pack("<" + "I" * g.dim, *([g.N] * g.dim))
    header += struct.pack("<d", g.L)
    data = np.ascontiguousarray(u.coeffs).astype("<c16", copy=False).tobytes()
    Path(path).write_bytes(header + data)


def read_snapshot(path, dealias_fraction: float = 2.0 / 3.0) -> SpectralField:
    raw = Path(path).read_bytes()
    magic, version, dim = struct.unpack_from("<4sII", raw, 0)
    if magic != SNAPSHOT_MAGIC:
        raise InvalidFieldData(f"{path}: not a field snapshot (magic {magic!r})")
    if version != SNAPSHOT_VERSION:
        raise InvalidFieldData(f"{path}: unsupported snapshot version {version}")
    off = 12
    ns = struct.unpack_from("<" + "I" * dim, raw, off)
    off += 4 * dim
    (L,) = struct.unpack_from("<d", raw, off)
    off += 8
    if len(set(ns)) != 1:
        raise InvalidFieldData(f"{path}: only cubic grids are supported, got {ns}")
    grid = Grid(dim, L, ns[0], dealias_fraction)
    per = 16 * ns[0] ** dim
    body = raw[off:]
    if len(body) % per:
        raise InvalidFieldData(f"{path}: truncated coefficient block")
    ncomp = len(body) // per
    coeffs = np.frombuffer(body, dtype="<c16").reshape((ncomp,) + grid.shape)
    return SpectralField(grid, coeffs.astype(np.complex128))


def stack_fields(fields: Sequence[SpectralField]) -> np.ndarray:
    return np.stack([f.coeffs for f in fields])
