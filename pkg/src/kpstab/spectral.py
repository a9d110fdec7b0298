"""Discrete function spaces on the cylinder [-lx, lx) x [0, 2pi).

Physical arrays have shape ``(nx, ny)`` (x first). Spectral coefficients use
the half-complex layout ``(nx // 2 + 1, ny)``: a real transform along x and a
full transform along y, scaled so that a constant field ``1`` has
``coeffs[0, 0] == 1``. Row ``k`` carries the x-wavenumber ``pi * k / lx``;
column ``j`` carries the transverse mode ``n = fftfreq(ny) * ny``.

Sampling keeps every resolved mode; the 2/3 mask is applied to the outputs of
pointwise products (``multiply`` and the flow right-hand sides).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import DegenerateField, GridMismatch, ZeroMeanViolation

ZERO_MEAN_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[-lx, lx) x [0, 2pi)``, periodic in both directions."""

    nx: int = 512
    ny: int = 32
    lx: float = 32.0
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        for name, minimum in (("nx", 16), ("ny", 4)):
            v = getattr(self, name)
            if v < minimum or v & (v - 1):
                raise ValueError(f"{name} must be a power of two >= {minimum}, got {v}")
        if not self.lx > 0:
            raise ValueError(f"lx must be positive, got {self.lx}")
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1]")

    @property
    def ly(self) -> float:
        return 2 * math.pi

    @property
    def dx(self) -> float:
        return 2 * self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def area(self) -> float:
        return 2 * self.lx * self.ly

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.nx // 2 + 1, self.ny)

    @cached_property
    def x(self) -> np.ndarray:
        return -self.lx + self.dx * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return self.dy * np.arange(self.ny)

    @cached_property
    def xi(self) -> np.ndarray:
        """x-wavenumbers of the half spectrum, shape ``(nx//2+1, 1)``."""
        return (np.pi / self.lx * np.arange(self.nx // 2 + 1))[:, None]

    @cached_property
    def n(self) -> np.ndarray:
        """Transverse mode numbers, shape ``(1, ny)``."""
        return np.rint(np.fft.fftfreq(self.ny) * self.ny)[None, :]

    @cached_property
    def inv_ixi(self) -> np.ndarray:
        """``1/(i xi)`` with the k=0 row set to zero."""
        out = np.zeros_like(self.xi, dtype=complex)
        out[1:] = 1.0 / (1j * self.xi[1:])
        return out

    @cached_property
    def mask(self) -> np.ndarray:
        kmax = int(self.dealias_fraction * self.nx / 2)
        nmax = int(self.dealias_fraction * self.ny / 2)
        k = np.arange(self.nx // 2 + 1)[:, None]
        keep = (k <= kmax) & (np.abs(self.n) <= nmax)
        keep &= k < self.nx // 2
        keep &= self.n != -self.ny // 2
        return keep

    @cached_property
    def row_weight(self) -> np.ndarray:
        """Multiplicity of each half-spectrum row in the full spectrum."""
        w = np.full((self.nx // 2 + 1, 1), 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.nx * factor, self.ny * factor, self.lx, self.dealias_fraction)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real field on the cylinder stored by its Fourier coefficients."""

    coeffs: np.ndarray
    grid: Grid = field(repr=False)

    def __post_init__(self):
        if self.coeffs.shape != self.grid.spectral_shape:
            raise GridMismatch(
                f"coefficient shape {self.coeffs.shape} != {self.grid.spectral_shape}"
            )

    # arithmetic -----------------------------------------------------------
    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise GridMismatch("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return SpectralField(self.coeffs + other.coeffs, self.grid)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return SpectralField(self.coeffs - other.coeffs, self.grid)
        return NotImplemented

    def __neg__(self):
        return SpectralField(-self.coeffs, self.grid)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return SpectralField(self.coeffs * scalar, self.grid)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self.coeffs / scalar, self.grid)

    # convenience ----------------------------------------------------------
    def physical(self) -> np.ndarray:
        return to_physical(self)

    def norm(self) -> float:
        return l2_norm(self)

    def x_means(self) -> np.ndarray:
        """k=0 row of the coefficients: x-mean of every transverse mode."""
        return self.coeffs[0]


def zeros(grid: Grid) -> SpectralField:
    return SpectralField(np.zeros(grid.spectral_shape, dtype=complex), grid)


def to_spectral(values: np.ndarray, grid: Grid, dealias: bool = False) -> SpectralField:
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.nx, grid.ny):
        raise GridMismatch(f"array shape {values.shape} != {(grid.nx, grid.ny)}")
    c = sfft.rfftn(values, axes=(1, 0)) / (grid.nx * grid.ny)
    if dealias:
        c *= grid.mask
    return SpectralField(c, grid)


def to_physical(f: SpectralField) -> np.ndarray:
    g = f.grid
    return sfft.irfftn(f.coeffs * (g.nx * g.ny), s=(g.ny, g.nx), axes=(1, 0))


def from_function(func, grid: Grid, dealias: bool = False) -> SpectralField:
    """Sample ``func(X, Y)`` on the grid mesh."""
    X, Y = grid.mesh()
    return to_spectral(np.broadcast_to(func(X, Y), X.shape), grid, dealias)


def from_profile(values_x: np.ndarray, grid: Grid, dealias: bool = False) -> SpectralField:
    """y-independent field from samples on the x-grid."""
    return to_spectral(np.repeat(np.asarray(values_x)[:, None], grid.ny, axis=1), grid, dealias)


def resample(f: SpectralField, grid: Grid) -> SpectralField:
    """The same trigonometric polynomial on another grid with the same ``lx``.

    Refining pads with zeros; coarsening truncates. Nyquist modes are dropped,
    so a refine-then-coarsen round trip is exact for fields without them.
    """
    if grid.lx != f.grid.lx:
        raise GridMismatch("resample needs equal lx")
    src, out = f.grid, np.zeros(grid.spectral_shape, dtype=complex)
    kx = min(src.nx, grid.nx) // 2
    ny = min(src.ny, grid.ny) // 2
    for j_src, n in enumerate(src.n[0].astype(int)):
        if abs(n) >= ny:
            continue
        out[:kx, n % grid.ny] = f.coeffs[:kx, j_src]
    return SpectralField(out, grid)


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.coeffs * f.grid.mask, f.grid)


def multiply(*fields: SpectralField) -> SpectralField:
    """Dealiased pointwise product of real fields."""
    grid = fields[0].grid
    prod = to_physical(fields[0])
    for f in fields[1:]:
        prod = prod * to_physical(f)
    return to_spectral(prod, grid, dealias=True)


def shift(f: SpectralField, s: float) -> SpectralField:
    """Return ``x -> f(x + s)`` by Fourier phase multiplication."""
    return SpectralField(f.coeffs * np.exp(1j * f.grid.xi * s), f.grid)


# derivatives ---------------------------------------------------------------
def _check_zero_mean(f: SpectralField, tol: float, rows: np.ndarray) -> None:
    scale = rms(f)
    means = np.abs(f.coeffs[0, rows])
    if means.size and means.max() > tol * max(scale, np.finfo(float).tiny):
        raise ZeroMeanViolation(
            f"x-mean {means.max():.3e} exceeds {tol:.1e} * rms {scale:.3e}"
        )


def dX(f: SpectralField) -> SpectralField:
    return SpectralField(1j * f.grid.xi * f.coeffs, f.grid)


def dY(f: SpectralField) -> SpectralField:
    return SpectralField(1j * f.grid.n * f.coeffs, f.grid)


def dXinv(f: SpectralField, tol: float = ZERO_MEAN_TOL) -> SpectralField:
    """Periodic antiderivative; every transverse mode must have zero x-mean."""
    _check_zero_mean(f, tol, slice(None))
    return SpectralField(f.grid.inv_ixi * f.coeffs, f.grid)


def dXinv_dY(f: SpectralField, tol: float = ZERO_MEAN_TOL) -> SpectralField:
    """``dx^{-1} dy f``; only the n != 0 modes need zero x-mean."""
    _check_zero_mean(f, tol, f.grid.n[0] != 0)
    return SpectralField(f.grid.inv_ixi * (1j * f.grid.n) * f.coeffs, f.grid)


def dXinv_dY_local(f: SpectralField, tol: float = ZERO_MEAN_TOL) -> SpectralField:
    """``dx^{-1} dy f`` normalized to vanish at the left seam ``x = -lx``.

    For a field supported away from the seam this is the whole-line
    antiderivative ``int_{-inf}^x dy f``. It differs from :func:`dXinv_dY`
    by an x-constant per transverse mode, which matters as soon as the result
    is multiplied by another field.
    """
    out = dXinv_dY(f, tol)
    left = sfft.fft(to_physical(out)[0]) / f.grid.ny
    out.coeffs[0] -= left
    return out


def remove_x_means(f: SpectralField, keep_n0: bool = True) -> SpectralField:
    """Zero the k=0 coefficient of the transverse modes (n != 0 only by default)."""
    c = f.coeffs.copy()
    if keep_n0:
        c[0, f.grid.n[0] != 0] = 0.0
    else:
        c[0] = 0.0
    return SpectralField(c, f.grid)


# quadrature ----------------------------------------------------------------
def rms(f: SpectralField) -> float:
    g = f.grid
    return float(np.sqrt(np.sum(g.row_weight * np.abs(f.coeffs) ** 2)))


def l2_norm(f: SpectralField) -> float:
    return rms(f) * math.sqrt(f.grid.area)


def inner(f: SpectralField, g: SpectralField) -> float:
    """L2 scalar product ``(f, g)`` on the cylinder (Parseval)."""
    grid = f.grid
    return float(grid.area * np.sum(grid.row_weight * (f.coeffs * g.coeffs.conj()).real))


def integrate(values: np.ndarray, grid: Grid) -> float:
    """Trapezoid (periodic) quadrature of physical samples."""
    return float(np.sum(values) * grid.dx * grid.dy)


@dataclass(frozen=True)
class WeightSpec:
    """Sigmoid weight ``chi_eps(x + x0) = (1 + tanh(eps (x + x0))) / 2``."""

    eps: float = 0.1
    x0: float = 0.0

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")

    def chi(self, x, order: int = 0):
        """Weight or one of its first three x-derivatives."""
        e = self.eps
        t = np.tanh(e * (np.asarray(x) + self.x0))
        s2 = 1.0 - t * t
        if order == 0:
            return 0.5 * (1.0 + t)
        if order == 1:
            return 0.5 * e * s2
        if order == 2:
            return -e * e * s2 * t
        if order == 3:
            return -(e**3) * s2 * (s2 - 2 * t * t)
        raise ValueError("order must be 0..3")

    def periodic_chi(self, x, lx: float, order: int = 0):
        """Smooth ``2 lx``-periodic image sum of the weight.

        Kinks at ``-x0 + 2 m lx`` alternate with anti-kinks half a period
        away. On a periodic grid this is the weight for which integration by
        parts, and hence the local energy identity, holds exactly.
        """
        x = np.asarray(x, dtype=float)
        reach = int(math.ceil(40.0 / (self.eps * lx))) + 2
        out = np.zeros_like(x)
        for m in range(-reach, reach + 1):
            out += self.chi(x - 2 * m * lx, order) - self.chi(x - (2 * m + 1) * lx, order)
        return out

    def moved(self, dx0: float) -> "WeightSpec":
        return WeightSpec(self.eps, self.x0 + dx0)


@dataclass(frozen=True)
class EnormBreakdown:
    l2: float
    dx: float
    dxinv_dy: float | None
    e_total: float | None

    @property
    def dxinv_dy_available(self) -> bool:
        return self.dxinv_dy is not None

    @classmethod
    def build(cls, l2, dx, dxinv_dy):
        total = None if dxinv_dy is None else math.sqrt(l2**2 + dx**2 + dxinv_dy**2)
        return cls(float(l2), float(dx), None if dxinv_dy is None else float(dxinv_dy), total)

    def as_row(self) -> list:
        return [self.l2, self.dx, self.dxinv_dy, self.e_total]


def eNorm(f: SpectralField, tol: float = ZERO_MEAN_TOL) -> EnormBreakdown:
    try:
        v = l2_norm(dXinv_dY(f, tol))
    except ZeroMeanViolation:
        v = None
    return EnormBreakdown.build(l2_norm(f), l2_norm(dX(f)), v)


def e_norm(f: SpectralField) -> float:
    """Scalar E-norm; raises if the x^{-1} y component is unavailable."""
    return math.sqrt(l2_norm(f) ** 2 + l2_norm(dX(f)) ** 2 + l2_norm(dXinv_dY(f)) ** 2)


def weighted_l2(values: np.ndarray, grid: Grid, weight: WeightSpec) -> float:
    chi = weight.chi(grid.x)[:, None]
    return math.sqrt(integrate(chi * values**2, grid))


def e_norm_local(f: SpectralField, tol: float = ZERO_MEAN_TOL) -> float:
    """E-norm with the whole-line antiderivative (for localized fields).

    Pass ``tol=inf`` when ``f`` is a difference of nearly equal fields, whose
    round-off x-means are large relative to the difference itself.
    """
    return math.sqrt(l2_norm(f) ** 2 + l2_norm(dX(f)) ** 2 + l2_norm(dXinv_dY_local(f, tol)) ** 2)


def weightedENorm(
    f: SpectralField, weight: WeightSpec, tol: float = ZERO_MEAN_TOL, local: bool = False
) -> EnormBreakdown:
    g = f.grid
    anti = dXinv_dY_local if local else dXinv_dY
    try:
        v = weighted_l2(to_physical(anti(f, tol)), g, weight)
    except ZeroMeanViolation:
        v = None
    return EnormBreakdown.build(
        weighted_l2(to_physical(f), g, weight), weighted_l2(to_physical(dX(f)), g, weight), v
    )


def lp_norm(f: SpectralField, p: float) -> float:
    u = to_physical(f)
    return integrate(np.abs(u) ** p, f.grid) ** (1.0 / p)


def sobolevRatio(f: SpectralField, p: float) -> float:
    """``|u|_{L^p}`` over the anisotropic product ``l2^a dx^b (dx^-1 dy)^c``."""
    if not 2 <= p <= 6:
        raise ValueError("p must lie in [2, 6]")
    u = to_physical(f)
    lp = integrate(np.abs(u) ** p, f.grid) ** (1.0 / p)
    l2 = math.sqrt(integrate(u * u, f.grid))
    a, b, c = (6 - p) / (2 * p), (p - 2) / p, (p - 2) / (2 * p)
    dx = l2_norm(dX(f))
    v = l2_norm(dXinv_dY(f))
    floor = 1e-14 * max(l2, 1e-300)
    if l2 == 0 or (b > 0 and dx <= floor) or (c > 0 and v <= floor):
        raise DegenerateField(f"degenerate factor: l2={l2:.3e} dx={dx:.3e} dxinv_dy={v:.3e}")
    return lp / (l2**a * dx**b * v**c)
