"""Line soliton, kink, and the Miura maps built on them.

The kink ``Q_c`` has different limits at the two ends of the x-axis, so it can
never be an honest periodic field. It only ever enters as a bounded multiplier
against localized perturbations. For that multiplier we use the periodized
profile

    Q_per(x) = s [tanh(s x) - tanh(s (x - lx)) - tanh(s (x + lx))],  s = sqrt(c/2),

which agrees with ``Q_c`` away from the seam, bends back through an anti-kink
at ``x = +-lx``, and is smooth and periodic to within ``exp(-2 s lx)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import spectral as sp
from .errors import BufferViolation, ZeroMeanViolation
from .spectral import Grid, SpectralField

BUFFER_FRACTION = 0.1
BUFFER_TOL = 1e-8


def _s(c: float) -> float:
    if not c > 0:
        raise ValueError(f"speed parameter must be positive, got {c}")
    return math.sqrt(c / 2.0)


def phi(c: float, x):
    """Line soliton profile ``c sech^2(sqrt(c/2) x)``."""
    s = _s(c)
    return c / np.cosh(s * np.asarray(x, dtype=float)) ** 2


def kinkQ(c: float, x):
    s = _s(c)
    return s * np.tanh(s * np.asarray(x, dtype=float))


def kinkQprime(c: float, x):
    s = _s(c)
    return s * s / np.cosh(s * np.asarray(x, dtype=float)) ** 2


def kinkQsecond(c: float, x):
    s = _s(c)
    t = np.tanh(s * np.asarray(x, dtype=float))
    return -2 * s**3 * (1 - t * t) * t


def dphi_dc(c: float, x):
    """Derivative of ``phi(c, x)`` with respect to the speed ``c``."""
    s = _s(c)
    x = np.asarray(x, dtype=float)
    sech2 = 1.0 / np.cosh(s * x) ** 2
    return sech2 - c * sech2 * np.tanh(s * x) * x / (2 * s)


def dQ_dc(c: float, x):
    s = _s(c)
    x = np.asarray(x, dtype=float)
    t = np.tanh(s * x)
    return (t + s * x * (1 - t * t)) / (4 * s)


def wrap(x, lx: float):
    """Map positions into ``[-lx, lx)``."""
    return (np.asarray(x) + lx) % (2 * lx) - lx


def kink_periodic(c: float, x, lx: float, order: int = 0):
    """Periodized kink (``order=0``) or its first/second derivative."""
    s = _s(c)
    x = wrap(x, lx)
    if order == 0:
        f = lambda z: np.tanh(z)
        pref = s
    elif order == 1:
        f = lambda z: 1.0 / np.cosh(z) ** 2
        pref = s * s
    elif order == 2:
        f = lambda z: -2 * np.tanh(z) / np.cosh(z) ** 2
        pref = s**3
    else:
        raise ValueError("order must be 0, 1 or 2")
    return pref * (f(s * x) - f(s * (x - lx)) - f(s * (x + lx)))


@dataclass(frozen=True, eq=False)
class KinkBackground:
    """Kink samples on the x-grid, shifted by ``shift`` (profile ``Q_c(x + shift)``)."""

    c: float
    shift: float
    q: np.ndarray
    dq: np.ndarray
    q_per: np.ndarray
    dq_per: np.ndarray

    @classmethod
    def build(cls, grid: Grid, c: float, shift: float = 0.0) -> "KinkBackground":
        return _background(grid, float(c), float(shift))

    @property
    def phi(self) -> np.ndarray:
        return 2.0 * self.dq


@lru_cache(maxsize=64)
def _background(grid: Grid, c: float, shift: float) -> KinkBackground:
    x = grid.x + shift
    bg = KinkBackground(
        c,
        shift,
        kinkQ(c, x),
        kinkQprime(c, x),
        kink_periodic(c, x, grid.lx),
        kink_periodic(c, x, grid.lx, order=1),
    )
    for arr in (bg.q, bg.dq, bg.q_per, bg.dq_per):
        arr.setflags(write=False)
    return bg


def phi_field(grid: Grid, c: float, shift: float = 0.0) -> SpectralField:
    return sp.from_profile(phi(c, wrap(grid.x + shift, grid.lx)), grid)


def kinkprime_field(grid: Grid, c: float, shift: float = 0.0) -> SpectralField:
    return sp.from_profile(kinkQprime(c, wrap(grid.x + shift, grid.lx)), grid)


# localization ----------------------------------------------------------------
def buffer_fraction(w: SpectralField, fraction: float = BUFFER_FRACTION) -> float:
    """Share of the E-density of ``w`` that sits in the outer x-buffer."""
    g = w.grid
    dens = sp.to_physical(w) ** 2 + sp.to_physical(sp.dX(w)) ** 2
    try:
        dens = dens + sp.to_physical(sp.dXinv_dY_local(w)) ** 2
    except ZeroMeanViolation:
        pass
    total = dens.sum()
    if total == 0:
        return 0.0
    outer = np.abs(g.x) >= (1.0 - fraction) * g.lx
    return float(dens[outer].sum() / total)


def check_localized(w: SpectralField, tol: float = BUFFER_TOL) -> None:
    frac = buffer_fraction(w)
    if frac >= tol:
        raise BufferViolation(f"buffer E-mass fraction {frac:.3e} >= {tol:.1e}")


# Miura maps --------------------------------------------------------------------
def miuraPlus(v: SpectralField, c: float) -> SpectralField:
    """``dx v + dx^{-1} dy v - v^2 + c/2`` for a periodic field ``v``."""
    return _miura(v, c, +1)


def miuraMinus(v: SpectralField, c: float) -> SpectralField:
    return _miura(v, c, -1)


def _miura(v: SpectralField, c: float, sign: int) -> SpectralField:
    out = _derivative_part(v, sign) - sp.multiply(v, v)
    out.coeffs[0, 0] += c / 2.0
    return out


def _derivative_part(w: SpectralField, sign: int) -> SpectralField:
    return sign * sp.dX(w) + sp.dXinv_dY(w)


def linear_part(w: SpectralField, c: float, shift: float, sign: int) -> SpectralField:
    """``sign dx w + dx^{-1} dy w - 2 Q_c(x+shift) w`` with the periodic antiderivative.

    The kink is a fixed smooth multiplier, so its product is taken by plain
    collocation; only products nonlinear in ``w`` are masked.
    """
    bg = KinkBackground.build(w.grid, c, shift)
    prod = sp.to_spectral(bg.q_per[:, None] * sp.to_physical(w), w.grid)
    return _derivative_part(w, sign) - 2.0 * prod


def miuraPlusComposite(w: SpectralField, c: float, shift: float = 0.0, check: bool = True) -> SpectralField:
    """``M_+^c(Q_c(. + shift) + w)`` evaluated without ever forming the kink field.

    The x-constant of ``dx^{-1} dy w`` in each transverse mode is the one that
    makes the image mean-free, so the result is admissible KP-II data. For a
    localized ``w`` whose images already have zero x-means this is the
    whole-line antiderivative.
    """
    if check:
        check_localized(w)
    g = w.grid
    out = phi_field(g, c, shift) + linear_part(w, c, shift, +1) - sp.multiply(w, w)
    return sp.remove_x_means(out)


def miuraMinusComposite(w: SpectralField, c: float, shift: float = 0.0, check: bool = True) -> SpectralField:
    """``M_-^c(Q_c(. + shift) + w) = L_{c,shift} w - w^2`` (mean-free, as above)."""
    if check:
        check_localized(w)
    return sp.remove_x_means(linear_part(w, c, shift, -1) - sp.multiply(w, w))


def seam_image(grid: Grid, c: float, shift: float = 0.0) -> SpectralField:
    """``M_-^c(Q_per)``: the line soliton that the periodized kink's anti-kink carries.

    On the torus ``||M_-(Q_per + w)||`` is the conserved quantity, and it
    equals ``||seam_image + miuraMinusComposite(w)||``.
    """
    bg = KinkBackground.build(grid, c, shift)
    qf = sp.from_profile(bg.q_per, grid)
    q = bg.q_per[:, None] * np.ones((1, grid.ny))
    out = -1 * sp.dX(qf) - sp.to_spectral(q * q, grid)
    out.coeffs[0, 0] += c / 2.0
    return out


def resolution_rule(c: float, lx: float, points_per_width: float = 6.0) -> int:
    """Smallest power-of-two nx resolving ``phi_c`` with the given points per width."""
    need = points_per_width * math.sqrt(c / 2.0) * 2 * lx
    return max(16, 1 << math.ceil(math.log2(need)))
