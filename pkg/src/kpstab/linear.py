"""Linearized Miura operators around the kink and their mode-by-mode inverses.

``L_c = dx + dx^{-1} dy - 2 Q_c`` and its adjoint ``LL_c = -dx + dx^{-1} dy - 2 Q_c``.
Acting on localized perturbations, ``dx^{-1}`` is the whole-line antiderivative
(zero to the left of the support). After a Fourier transform in y, mode ``n``
of ``L_c u = f`` reads, for the potential ``U`` with ``u = U'``,

    L:     U'' + i n U - 2 Q U' = f
    L_ADJ: -U'' + i n U - 2 Q U' = f

and for ``n = 0`` the first-order equations ``u' - 2Qu = f`` and ``-u' - 2Qu = f``.
The default backend solves these by dense Fourier collocation on the x-grid.
Two independent routes (fundamental solutions with a Green kernel, and the
fixed-point map ``T_n``) are provided for verification.
"""

from __future__ import annotations

import cmath
import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from . import spectral as sp
from .errors import NonConvergence, RangeViolation
from .profiles import KinkBackground, check_localized, kinkQ, kinkQprime, phi
from .spectral import Grid, SpectralField, WeightSpec

log = logging.getLogger(__name__)

ORTHO_TOL = 1e-8


class Variant(str, enum.Enum):
    L = "L"
    L_ADJ = "L_ADJ"


# operators on 2-D fields ---------------------------------------------------------
def _apply(w: SpectralField, c: float, sign: int, shift: float, check: bool) -> SpectralField:
    if check:
        check_localized(w)
    bg = KinkBackground.build(w.grid, c, shift)
    prod = sp.to_spectral(bg.q_per[:, None] * sp.to_physical(w), w.grid)
    return sign * sp.dX(w) + sp.dXinv_dY_local(w) - 2.0 * prod


def applyL(w: SpectralField, c: float, shift: float = 0.0, check: bool = True) -> SpectralField:
    """``L_c w = w_x + dx^{-1} w_y - 2 Q_c w`` for a localized, x-mean-free ``w``."""
    return _apply(w, c, +1, shift, check)


def applyLAdj(w: SpectralField, c: float, shift: float = 0.0, check: bool = True) -> SpectralField:
    """``LL_c w = -w_x + dx^{-1} w_y - 2 Q_c w``; it annihilates ``Q_c'``."""
    return _apply(w, c, -1, shift, check)


def applyLAdjSigned(w: SpectralField, c: float, shift: float = 0.0, check: bool = True) -> SpectralField:
    """The L2 adjoint of :func:`applyL`. It is ``applyLAdj`` itself (sign +1).

    ``dx`` is skew and ``dx^{-1} dy`` is a product of two skew operators, so
    only the ``dx`` term changes sign.
    """
    return applyLAdj(w, c, shift, check)


# exponents -------------------------------------------------------------------------
@dataclass(frozen=True)
class ExponentSet:
    """Growth rates of the homogeneous mode equation at ``x -> +inf`` (plus) and ``-inf`` (minus)."""

    mu_plus: complex
    mu_minus: complex
    lambda_plus: complex
    lambda_minus: complex
    n: int = 0
    c: float = 2.0
    variant: Variant = Variant.L

    def sign_structure_holds(self) -> bool:
        return min(self.mu_plus.real, self.mu_minus.real) > 0 > max(
            self.lambda_plus.real, self.lambda_minus.real
        )

    def as_dict(self) -> dict:
        out = {}
        for k in ("mu_plus", "mu_minus", "lambda_plus", "lambda_minus"):
            z = getattr(self, k)
            out[k] = [z.real, z.imag]
        return {"n": self.n, "c": self.c, "variant": Variant(self.variant).value, **out}


def exponents(n: int, c: float, variant: Variant | str = Variant.L) -> ExponentSet:
    """Closed-form roots ``r`` of the constant-coefficient limits.

    With ``s = sqrt(c/2)`` the limit of ``Q_c`` at ``+-inf`` is ``+-s``:

    * L:     ``r^2 -+ 2 s r + i n = 0``  so ``mu^+- = +-s + sqrt(s^2 - i n)``, ``lambda^+- = +-s - sqrt(...)``
    * L_ADJ: ``r^2 +- 2 s r - i n = 0``  so ``mu^+- = -+s + sqrt(s^2 + i n)``, ``lambda^+- = -+s - sqrt(...)``

    Square roots use the principal branch (nonnegative real part). At
    ``c = 2`` these reduce to ``+-1 + sqrt(1 - i n)`` and ``-+1 + sqrt(1 + i n)``.
    """
    variant = Variant(variant)
    if not c > 0:
        raise ValueError("c must be positive")
    s = math.sqrt(c / 2.0)
    if variant is Variant.L:
        r = cmath.sqrt(complex(s * s, -n))
        return ExponentSet(s + r, -s + r, s - r, -s - r, n, c, variant)
    r = cmath.sqrt(complex(s * s, n))
    return ExponentSet(-s + r, s + r, -s - r, s - r, n, c, variant)


# 1-D mode machinery ---------------------------------------------------------------
@dataclass
class ModeProblem:
    n: int
    c: float
    variant: Variant
    rhs: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.variant = Variant(self.variant)
        self.rhs = np.asarray(self.rhs, dtype=complex)
        if self.rhs.shape != (self.grid.nx,):
            raise ValueError(f"rhs must have shape ({self.grid.nx},)")


@dataclass
class ModeSolution:
    u: np.ndarray
    h1_norm: float
    dxinv_norm: float
    bound_constant: float
    residual: float
    n: int = 0
    backend: str = "collocation"
    multiplier: complex = 0.0
    potential: np.ndarray | None = None

    def as_row(self) -> dict:
        return {
            "n": self.n,
            "backend": self.backend,
            "h1_norm": self.h1_norm,
            "dxinv_norm": self.dxinv_norm,
            "bound_constant": self.bound_constant,
            "residual": self.residual,
        }


class ModeOps:
    """Fourier collocation matrices on the x-grid (periodic, kink periodized)."""

    def __init__(self, grid: Grid, c: float):
        self.grid, self.c = grid, float(c)
        nx = grid.nx
        k = np.fft.fftfreq(nx, d=1.0 / nx)
        self.xi = np.pi / grid.lx * k
        odd = 1j * self.xi.copy()
        odd[nx // 2] = 0.0
        self.sym1 = odd
        self.sym2 = -self.xi**2
        inv = np.zeros(nx, complex)
        nz = self.xi != 0
        inv[nz] = 1.0 / (1j * self.xi[nz])
        inv[nx // 2] = 0.0
        self.sym_inv = inv
        eye = np.eye(nx)
        F = np.fft.fft(eye, axis=0)
        self.D1 = np.fft.ifft(self.sym1[:, None] * F, axis=0).real
        self.D2 = np.fft.ifft(self.sym2[:, None] * F, axis=0).real
        bg = KinkBackground.build(grid, c, 0.0)
        self.q = np.array(bg.q_per)
        self.dq = np.array(bg.dq_per)
        self.x = grid.x
        self.dx = grid.dx
        # torus kernel/cokernel of the first-order mode-0 operators
        anti = self.antiderivative(self.q).real
        g = np.exp(-2.0 * (anti - anti.max()))
        self.soliton_like = g / np.linalg.norm(g)  # exp(-2 int Q): localized at the kink
        h = np.exp(2.0 * (anti - anti.max()))
        self.seam_like = h / np.linalg.norm(h)  # exp(+2 int Q): localized at the seam
        self.qprime_exact = kinkQprime(c, self.x)

    # spectral helpers on complex 1-D arrays
    def d1(self, u):
        return np.fft.ifft(self.sym1 * np.fft.fft(u))

    def d2(self, u):
        return np.fft.ifft(self.sym2 * np.fft.fft(u))

    def antiderivative(self, u):
        """Periodic zero-mean antiderivative of the mean-free part of ``u``."""
        return np.fft.ifft(self.sym_inv * np.fft.fft(u))

    def local_antiderivative(self, u):
        a = self.antiderivative(u)
        return a - a[0]

    def l2(self, u) -> float:
        return float(np.sqrt(np.sum(np.abs(u) ** 2) * self.dx))

    def h1(self, u) -> float:
        return float(np.sqrt(self.l2(u) ** 2 + self.l2(self.d1(u)) ** 2))

    # operators
    def matrix(self, n: int, variant: Variant) -> np.ndarray:
        """Matrix acting on the potential ``U`` (n != 0) or on ``u`` itself (n = 0)."""
        Q = self.q[:, None]
        if n == 0:
            sgn = 1.0 if variant is Variant.L else -1.0
            return sgn * self.D1 - 2.0 * np.diag(self.q)
        sgn = 1.0 if variant is Variant.L else -1.0
        return sgn * self.D2 + 1j * n * np.eye(self.grid.nx) - 2.0 * Q * self.D1

    def apply(self, u: np.ndarray, n: int, variant: Variant) -> np.ndarray:
        """Mode ``n`` of the 2-D operator applied to ``u(x) e^{iny}``."""
        sgn = 1.0 if variant is Variant.L else -1.0
        out = sgn * self.d1(u) - 2.0 * self.q * u
        if n != 0:
            out = out + 1j * n * self.local_antiderivative(u)
        return out


@lru_cache(maxsize=16)
def mode_ops(grid: Grid, c: float) -> ModeOps:
    return ModeOps(grid, float(c))


@lru_cache(maxsize=256)
def _lu(grid: Grid, c: float, n: int, variant: Variant):
    ops = mode_ops(grid, c)
    A = ops.matrix(n, variant)
    if n == 0:
        nx = grid.nx
        # The collocation first derivative annihilates the Nyquist saw-tooth, which
        # would otherwise be a spurious kernel; it is bordered out like the seam mode.
        saw = (-1.0) ** np.arange(nx) / math.sqrt(nx)
        B = np.zeros((nx + 2, nx + 2), dtype=complex)
        B[:nx, :nx] = A
        B[:nx, nx + 1] = saw
        B[nx + 1, :nx] = saw
        if variant is Variant.L:
            # cokernel ~ phi (true); spurious torus kernel ~ seam mode, removed by the constraint
            B[:nx, nx] = ops.soliton_like
            B[nx, :nx] = ops.seam_like
        else:
            # kernel ~ Q' (true, fixed by u _|_ Q'); spurious torus cokernel ~ seam mode
            B[:nx, nx] = ops.seam_like
            qn = ops.qprime_exact / np.linalg.norm(ops.qprime_exact)
            B[nx, :nx] = qn
        return sla.lu_factor(B)
    return sla.lu_factor(A.astype(complex))


def _finish(ops: ModeOps, prob: ModeProblem, u, U, backend, multiplier=0.0) -> ModeSolution:
    f = prob.rhs
    res = ops.apply(u, prob.n, prob.variant) - f
    fn = ops.l2(f)
    h1 = ops.h1(u)
    dxi = ops.l2(ops.local_antiderivative(u)) if prob.n != 0 else 0.0
    bound = (h1 + abs(prob.n) * dxi) / fn if fn > 0 else 0.0
    return ModeSolution(
        u=u,
        h1_norm=h1,
        dxinv_norm=dxi,
        bound_constant=bound,
        residual=ops.l2(res) / max(fn, np.finfo(float).tiny),
        n=prob.n,
        backend=backend,
        multiplier=multiplier,
        potential=U,
    )


def _range_gate(ops: ModeOps, f0: np.ndarray, tol: float) -> float:
    qp = ops.qprime_exact
    denom = ops.l2(qp) * ops.l2(f0)
    ratio = abs(np.sum(f0 * qp) * ops.dx) / denom if denom > 0 else 0.0
    if ratio > tol:
        raise RangeViolation(f"(f0, Q') / (|f0| |Q'|) = {ratio:.3e} exceeds {tol:.1e}")
    return ratio


def solveMode0(f0, c: float, variant: Variant | str, grid: Grid, tol: float = ORTHO_TOL) -> ModeSolution:
    """Solve the n = 0 equation by bordered collocation.

    Variant L needs ``f0 _|_ Q_c'`` (else :class:`RangeViolation`). Variant
    L_ADJ returns the solution orthogonal to ``Q_c'``.
    """
    variant = Variant(variant)
    prob = ModeProblem(0, c, variant, f0, grid)
    ops = mode_ops(grid, c)
    if variant is Variant.L:
        _range_gate(ops, prob.rhs, tol)
    sol = sla.lu_solve(_lu(grid, float(c), 0, variant), np.concatenate([prob.rhs, [0.0, 0.0]]))
    u = sol[: grid.nx]
    return _finish(ops, prob, u, None, "collocation", sol[grid.nx])


def solveMode0Explicit(f0, c: float, variant: Variant | str, grid: Grid, side: str = "split") -> np.ndarray:
    """Integral formulas for the n = 0 solution, evaluated without amplification.

    Variant L: ``u(x) = int_{-inf}^x phi(t) f(t) / phi(x) dt = -int_x^inf ...``.
    ``side`` picks the left integral, the right one, or (default) the left one
    for ``x <= 0`` and the right one for ``x > 0``; there every kernel ratio is
    at most one, so round-off is never magnified.

    Variant L_ADJ: ``u = alpha phi - I(f)`` with ``I(f)(x) = phi(x) int_0^x f / phi``
    and ``alpha = (I(f), phi) / |phi|^2`` (solution orthogonal to ``phi``).
    """
    variant = Variant(variant)
    quad = _CellQuadrature(grid, c)
    f0 = np.asarray(f0, dtype=complex)
    if variant is Variant.L:
        left = quad.cumulative(f0, +1, from_left=True)
        right = -quad.cumulative(f0, +1, from_left=False)
        if side == "left":
            return left
        if side == "right":
            return right
        return np.where(grid.x <= 0, left, right)
    I = quad.from_origin(f0)
    ph = phi(c, grid.x)
    alpha = np.sum(I * ph) / np.sum(ph * ph)
    return alpha * ph - I


class _CellQuadrature:
    """Gauss-Legendre on every grid cell, with the integrand resampled spectrally."""

    NODES = 8

    def __init__(self, grid: Grid, c: float):
        self.grid, self.c = grid, c
        t, w = np.polynomial.legendre.leggauss(self.NODES)
        h = grid.dx
        x = grid.x
        self.nodes = (x[:, None] + 0.5 * h * (t[None, :] + 1.0)).ravel()
        self.weights = np.tile(0.5 * h * w, grid.nx)
        k = np.fft.fftfreq(grid.nx, d=1.0 / grid.nx)
        xi = np.pi / grid.lx * k
        keep = np.abs(k) < grid.nx // 2
        self._xi = xi[keep]
        self._keep = keep
        self._phase = np.exp(1j * np.outer(self.nodes - x[0], self._xi))
        self.phi_nodes = phi(c, self.nodes)

    def resample(self, f):
        coef = np.fft.fft(f)[self._keep] / self.grid.nx
        return self._phase @ coef

    def cell_integrals(self, g_nodes):
        return (g_nodes * self.weights).reshape(self.grid.nx, self.NODES).sum(axis=1)

    def cumulative(self, f, power: int, from_left: bool):
        """``int phi(t)^power f(t) dt / phi(x)^power`` from the chosen end to each grid point."""
        g = self.resample(f) * self.phi_nodes**power
        cells = self.cell_integrals(g)
        xg = self.grid.x
        ph = phi(self.c, xg) ** power
        if from_left:
            acc = np.concatenate([[0.0], np.cumsum(cells)[:-1]])
        else:
            acc = np.cumsum(cells[::-1])[::-1]
        return acc / ph

    def from_origin(self, f):
        """``I(f)(x) = phi(x) int_0^x f / phi``."""
        g = self.resample(f) / self.phi_nodes
        cells = self.cell_integrals(g)
        nx = self.grid.nx
        mid = nx // 2  # grid.x[mid] == 0
        acc = np.zeros(nx, dtype=complex)
        acc[mid + 1 :] = np.cumsum(cells[mid:-1])
        acc[:mid] = -np.cumsum(cells[:mid][::-1])[::-1]
        return acc * phi(self.c, self.grid.x)


def solveModeN(problem: ModeProblem) -> ModeSolution:
    """Default backend: dense collocation for the potential ``U``, then ``u = U'``."""
    if problem.n == 0:
        raise ValueError("use solveMode0 for n = 0")
    ops = mode_ops(problem.grid, problem.c)
    U = sla.lu_solve(_lu(problem.grid, float(problem.c), int(problem.n), problem.variant), problem.rhs)
    u = ops.d1(U)
    return _finish(ops, problem, u, U, "collocation")


# fixed-point route ------------------------------------------------------------------
def _tn_symbols(ops: ModeOps, n: int, variant: Variant):
    sgn = 1.0 if variant is Variant.L else -1.0
    # L: (d^2 + i n) u = 2 (Qu)' + f'     L_ADJ: (i n - d^2) u = 2 (Qu)' + f'
    denom = sgn * ops.sym2 + 1j * n
    return ops.sym1 / denom


def tn_apply(ops: ModeOps, u, n: int, variant: Variant):
    return 2.0 * np.fft.ifft(_tn_symbols(ops, n, variant) * np.fft.fft(ops.q * u))


def tn_norm(grid: Grid, c: float, n: int, variant: Variant | str = Variant.L) -> float:
    """Operator norm of ``T_n`` on ``H^1`` of the x-grid, from its dense matrix."""
    variant = Variant(variant)
    ops = mode_ops(grid, c)
    nx = grid.nx
    F = np.fft.fft(np.eye(nx), axis=0)
    T = 2.0 * np.fft.ifft(_tn_symbols(ops, n, variant)[:, None] * np.fft.fft(ops.q[:, None] * np.eye(nx), axis=0), axis=0)
    w = np.sqrt(1.0 + ops.xi**2)
    # conjugate to the Fourier basis, weighted by the H^1 symbol
    That = F @ T @ np.linalg.inv(F)
    M = (w[:, None] * That) / w[None, :]
    return float(np.linalg.norm(M, 2))


def solveModeN_fixed_point(problem: ModeProblem, max_iter: int = 200, tol: float = 1e-12) -> ModeSolution:
    """Iterate ``u = T_n u + g_n``. Converges when ``|T_n| < 1`` (large ``|n|``)."""
    ops = mode_ops(problem.grid, problem.c)
    n, var = problem.n, problem.variant
    sym = _tn_symbols(ops, n, var)
    g = np.fft.ifft(sym * np.fft.fft(problem.rhs))
    u = g.copy()
    for it in range(max_iter):
        new = tn_apply(ops, u, n, var) + g
        step = ops.h1(new - u)
        u = new
        if step <= tol * max(ops.h1(u), np.finfo(float).tiny):
            return _finish(ops, problem, u, None, "fixed_point")
        if not np.isfinite(step) or step > 1e6 * max(ops.h1(g), 1e-300):
            break
    raise NonConvergence(f"T_n iteration did not converge for n={n} ({var.value})")


def measure_n0(grid: Grid, c: float, variant: Variant | str = Variant.L, n_max: int | None = None) -> tuple[int, dict]:
    """Smallest ``n0`` with ``|T_n| <= 1/2`` for all ``n0 <= |n| <= n_max``."""
    n_max = n_max or grid.ny // 2
    norms = {n: tn_norm(grid, c, n, variant) for n in range(1, n_max + 1)}
    n0 = None
    for n in range(n_max, 0, -1):
        if norms[n] <= 0.5:
            n0 = n
        else:
            break
    return (n0 if n0 is not None else -1), norms


# Green-kernel route --------------------------------------------------------------------
@dataclass
class FundamentalPair:
    """Decaying solutions ``v^+`` (at +inf) and ``w^-`` (at -inf) of the homogeneous mode ODE."""

    n: int
    c: float
    variant: Variant
    x_max: float
    sol_plus: object
    sol_minus: object

    def values(self, x):
        """Return ``(v, v', w, w')`` at points ``x`` (dense output of the ODE solves)."""
        x = np.asarray(x, float)
        vp = self.sol_plus.sol(x)
        wm = self.sol_minus.sol(x)
        return vp[0] + 1j * vp[1], vp[2] + 1j * vp[3], wm[0] + 1j * wm[1], wm[2] + 1j * wm[3]

    def wronskian(self, x):
        v, dv, w, dw = self.values(x)
        return v * dw - dv * w


def _ode_rhs(n, c, variant):
    sgn = 1.0 if Variant(variant) is Variant.L else -1.0

    def rhs(x, y):
        u = y[0] + 1j * y[1]
        du = y[2] + 1j * y[3]
        q = kinkQ(c, x)
        dq = kinkQprime(c, x)
        # L: u'' = 2 (Q u)' - i n u      L_ADJ: u'' = -2 (Q u)' + i n u
        d2 = sgn * (2.0 * (q * du + dq * u)) - sgn * 1j * n * u
        return [du.real, du.imag, d2.real, d2.imag]

    return rhs


@lru_cache(maxsize=64)
def fundamental_pair(n: int, c: float, variant: Variant | str = Variant.L, x_max: float = 12.0) -> FundamentalPair:
    """Integrate the decaying solutions inward from ``+-x_max``.

    Each starts on the exact decaying exponential of the constant-coefficient
    limit. Integrating toward the kink is the stable direction for both.
    """
    variant = Variant(variant)
    e = exponents(n, c, variant)
    rhs = _ode_rhs(n, c, variant)
    opts = dict(method="DOP853", rtol=1e-13, atol=1e-30, first_step=1e-3, dense_output=True)
    lam = e.lambda_plus
    y0 = [1.0, 0.0, lam.real, lam.imag]
    sp_ = solve_ivp(rhs, (x_max, -x_max), y0, **opts)
    mu = e.mu_minus
    y0 = [1.0, 0.0, mu.real, mu.imag]
    sm = solve_ivp(rhs, (-x_max, x_max), y0, **opts)
    if not (sp_.success and sm.success):
        raise NonConvergence(f"fundamental-solution integration failed for n={n}")
    return FundamentalPair(n, c, variant, x_max, sp_, sm)


def wronskian_check(n: int, c: float, variant: Variant | str = Variant.L, x_span: float = 10.0, points: int = 201) -> float:
    """Max relative deviation of ``W(x)/W(0)`` from ``cosh^2`` (L) or ``sech^2`` (L_ADJ) of ``s x``."""
    variant = Variant(variant)
    pair = fundamental_pair(n, c, variant, max(12.0, x_span + 2.0))
    x = np.linspace(-x_span, x_span, points)
    W = pair.wronskian(x) / pair.wronskian(np.array([0.0]))[0]
    s = math.sqrt(c / 2)
    target = np.cosh(s * x) ** 2 if variant is Variant.L else 1.0 / np.cosh(s * x) ** 2
    return float(np.max(np.abs(W - target) / target))


def green_kernel(n: int, c: float, variant: Variant | str, x, t) -> np.ndarray:
    """``G_n(x, t)`` on the outer product of ``x`` and ``t``."""
    pair = fundamental_pair(n, c, Variant(variant))
    vx, _, wx, _ = pair.values(x)
    vt, _, wt, _ = pair.values(t)
    Wt = pair.wronskian(t)
    X = np.asarray(x)[:, None]
    T = np.asarray(t)[None, :]
    return np.where(X > T, -vx[:, None] * wt[None, :] / Wt[None, :], -wx[:, None] * vt[None, :] / Wt[None, :])


def solveModeN_green(problem: ModeProblem, x_max: float = 12.0) -> ModeSolution:
    """``u_n(x) = int G_n(x, t) f_n'(t) dt`` by cell-wise Gauss-Legendre quadrature.

    Uses the exact kink, so the right-hand side must be supported in ``|x| < x_max``.
    The separable form of the kernel turns the integral into two cumulative sums.
    """
    g = problem.grid
    ops = mode_ops(g, problem.c)
    pair = fundamental_pair(problem.n, problem.c, problem.variant, x_max)
    inside = np.abs(g.x) <= x_max
    xs = g.x[inside]
    h = g.dx
    tq, wq = np.polynomial.legendre.leggauss(8)
    nodes = (xs[:-1, None] + 0.5 * h * (tq[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * h * wq, xs.size - 1)
    fp = ops.d1(problem.rhs)
    k = np.fft.fftfreq(g.nx, d=1.0 / g.nx)
    keep = np.abs(k) < g.nx // 2
    coef = np.fft.fft(fp)[keep] / g.nx
    fnodes = np.exp(1j * np.outer(nodes - g.x[0], ops.xi[keep])) @ coef
    v, _, w, _ = pair.values(nodes)
    W = pair.wronskian(nodes)
    a_cells = (w * fnodes / W * weights).reshape(xs.size - 1, -1).sum(1)
    b_cells = (v * fnodes / W * weights).reshape(xs.size - 1, -1).sum(1)
    A = np.concatenate([[0.0], np.cumsum(a_cells)])  # int_{-x_max}^{x} w f'/W
    B = np.concatenate([np.cumsum(b_cells[::-1])[::-1], [0.0]])  # int_x^{x_max} v f'/W
    vx, _, wx, _ = pair.values(xs)
    u = np.zeros(g.nx, dtype=complex)
    # the Green kernel belongs to the monic operator; L_ADJ has leading coefficient -1
    sgn = 1.0 if problem.variant is Variant.L else -1.0
    u[inside] = -sgn * (vx * A + wx * B)
    return _finish(ops, problem, u, None, "green")


def green_decay_fit(n: int, c: float, variant: Variant | str = Variant.L, span: float = 8.0) -> dict:
    """Fit ``|G_n(x,t)| <= K exp(-rate |x-t|)`` with the predicted rate."""
    variant = Variant(variant)
    s = math.sqrt(c / 2)
    if variant is Variant.L:
        rate = cmath.sqrt(complex(s * s, -n)).real - s
    else:
        rate = cmath.sqrt(complex(s * s, n)).real - s
    x = np.linspace(-span, span, 81)
    G = np.abs(green_kernel(n, c, variant, x, x))
    dist = np.abs(x[:, None] - x[None, :])
    K = float(np.max(G * np.exp(rate * dist)))
    return {"n": n, "rate": rate, "K": K}


# full-field solve -----------------------------------------------------------------------
def _mode_split(f: SpectralField) -> np.ndarray:
    """Columns ``f_n(x)`` with ``f = sum_n f_n(x) e^{i n y}``."""
    return np.fft.fft(sp.to_physical(f), axis=1) / f.grid.ny


def _mode_join(cols: np.ndarray, grid: Grid) -> SpectralField:
    phys = np.fft.ifft(cols * grid.ny, axis=1).real
    return sp.to_spectral(phys, grid)


@dataclass
class FullSolveReport:
    field: SpectralField
    modes: list
    bound_constant: float
    projected: float = 0.0


def solveFull(
    f: SpectralField,
    c: float,
    variant: Variant | str = Variant.L,
    project: bool = False,
    tol: float = ORTHO_TOL,
    report: bool = False,
):
    """Invert ``L_c`` or ``LL_c`` mode by mode.

    Variant L requires ``f _|_ phi_c``; with ``project=True`` the offending
    component is removed (and its size logged) instead of raising. Variant
    L_ADJ returns the preimage orthogonal to ``Q_c'``.
    """
    variant = Variant(variant)
    g = f.grid
    cols = _mode_split(f)
    ops = mode_ops(g, c)
    projected = 0.0
    if variant is Variant.L:
        qp = ops.qprime_exact
        coef = np.sum(cols[:, 0] * qp) / np.sum(qp * qp)
        rel = abs(coef) * ops.l2(qp) / max(ops.l2(cols[:, 0]), np.finfo(float).tiny)
        if rel > tol:
            if not project:
                raise RangeViolation(f"f is not orthogonal to phi_c (relative overlap {rel:.3e})")
            log.warning("projecting out a phi_c component of relative size %.3e", rel)
            cols[:, 0] = cols[:, 0] - coef * qp
            projected = rel
    out = np.zeros_like(cols)
    sols = []
    ns = np.fft.fftfreq(g.ny, d=1.0 / g.ny).astype(int)
    done = {}
    for j, n in enumerate(ns):
        if -n in done and n != -n:
            out[:, j] = np.conj(out[:, done[-n]])
            continue
        if n == 0:
            sol = solveMode0(cols[:, j], c, variant, g, tol=np.inf)
        else:
            sol = solveModeN(ModeProblem(int(n), c, variant, cols[:, j], g))
        out[:, j] = sol.u
        sols.append(sol)
        done[n] = j
    field_out = _mode_join(out, g)
    bound = sp.e_norm_local(field_out) / max(f.norm(), np.finfo(float).tiny)
    if report:
        return FullSolveReport(field_out, sols, bound, projected)
    return field_out


# coercivity -------------------------------------------------------------------------------
def project_off_qprime(w: SpectralField, c: float) -> SpectralField:
    g = w.grid
    qp = sp.from_profile(kinkQprime(c, g.x), g)
    return w - qp * (sp.inner(w, qp) / sp.inner(qp, qp))


def coercivity_ratio(w: SpectralField, c: float, variant: Variant | str, weight: WeightSpec | None = None) -> float:
    variant = Variant(variant)
    op = applyL if variant is Variant.L else applyLAdj
    img = op(w, c, check=False)
    if weight is None:
        return sp.l2_norm(img) / sp.e_norm_local(w)
    num = sp.weighted_l2(sp.to_physical(img), w.grid, weight)
    return num / sp.weightedENorm(w, weight, local=True).e_total


@dataclass
class CoercivityReport:
    variant: str
    c: float
    ensemble_size: int
    min_ratio: float
    median_ratio: float
    per_offset: dict = field(default_factory=dict)
    mode_constants: dict = field(default_factory=dict)
    kernel_decay: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def coercivityProbe(
    c: float,
    variant: Variant | str,
    ensemble_size: int,
    grid: Grid,
    weight: WeightSpec | None = None,
    offsets=None,
    seed: int = 0,
    draws: list | None = None,
) -> CoercivityReport:
    """Minimum of ``|op w| / |w|_E`` over a random localized ensemble.

    For variant L_ADJ each draw is projected off ``Q_c'`` first. With a
    weight, ``x0`` sweeps ``offsets`` (default: -lx/3, 0, lx/3) and the
    minimum is taken over draws and offsets.
    """
    from .ensembles import ensemble

    variant = Variant(variant)
    if draws is None:
        draws = ensemble(grid, 1.0, ensemble_size, seed)
    if variant is Variant.L_ADJ:
        draws = [project_off_qprime(w, c) for w in draws]
    per_offset = {}
    if weight is None:
        ratios = np.array([coercivity_ratio(w, c, variant) for w in draws])
    else:
        if offsets is None:
            offsets = (-grid.lx / 3, 0.0, grid.lx / 3)
        allr = []
        for x0 in offsets:
            wt = WeightSpec(weight.eps, float(x0))
            r = np.array([coercivity_ratio(w, c, variant, wt) for w in draws])
            per_offset[str(float(x0))] = {"min": float(r.min()), "median": float(np.median(r))}
            allr.append(r)
        ratios = np.concatenate(allr)
    return CoercivityReport(
        variant.value, c, len(draws), float(ratios.min()), float(np.median(ratios)), per_offset
    )


def mode_bound_table(grid: Grid, c: float, variant: Variant | str = Variant.L, n_values=None) -> dict:
    """Measured ``C(n)`` of the mode estimate: the largest ``(|u|_{H^1} + |n| |dx^{-1} u|) / |f|``.

    Computed as the inverse smallest singular value of the mode operator in
    the Hilbert version of the norm pair, restricted to right-hand sides
    supported away from the seam (the inner 80% of the domain).
    """
    variant = Variant(variant)
    ops = mode_ops(grid, c)
    n_values = n_values or range(1, grid.ny // 2 + 1)
    inner = np.abs(grid.x) <= 0.8 * grid.lx
    table = {}
    for n in n_values:
        A = ops.matrix(int(n), variant)
        Ainv = np.linalg.inv(A)[:, inner]  # f (inner support) -> U
        # |u|^2 + |u'|^2 + n^2 |U|^2 with u = U'
        N = np.vstack([ops.D1 @ Ainv, ops.D2 @ Ainv, abs(n) * Ainv]) * math.sqrt(ops.dx)
        smax = np.linalg.norm(N, 2) / math.sqrt(ops.dx)
        table[int(n)] = float(smax)
    return table
