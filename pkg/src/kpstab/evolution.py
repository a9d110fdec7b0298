"""Time integration of KP-II and of the mKP-II kink perturbation, with diagnostics.

Both flows are written as ``u_t = L u + N(u)`` with ``L`` diagonal in Fourier
space. Fields may be stored in a frame moving at ``frame_speed`` (lab position
``x = z + frame_speed * t``); this only adds ``frame_speed * i xi`` to ``L``.
The k=0 coefficient of every n != 0 mode is frozen: the singular symbol
``n^2 / xi`` has no value there, and ``N`` is projected off that row.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import kernels
from . import spectral as sp
from .errors import BlowupDetected, NanDetected, SmallnessViolation
from .profiles import KinkBackground, check_localized
from .spectral import Grid, SpectralField, WeightSpec

log = logging.getLogger(__name__)

BLOWUP_LEVEL = 1e6
STABILITY_BUDGET = 2.8
LOCAL_ANTIDERIVATIVE = True


class Equation(str, enum.Enum):
    KP2 = "KP2"
    MKP2 = "MKP2_PERTURBATION"


class Scheme(str, enum.Enum):
    ETDRK4 = "ETDRK4"
    IFRK4 = "IFRK4"


@dataclass(frozen=True)
class FlowSpec:
    equation: Equation = Equation.KP2
    c: float = 2.0
    dt: float = 5e-4
    t_end: float = 1.0
    scheme: Scheme = Scheme.ETDRK4
    dealias: bool = True
    frame_speed: float = 0.0
    nonlinear: bool = True
    observe_every: int = 100
    sponge: float = 0.0
    sponge_start: float = 0.85
    sponge_end: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "equation", Equation(self.equation))
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.observe_every < 1:
            raise ValueError("observe_every must be >= 1")
        if self.sponge < 0 or not 0 < self.sponge_start < self.sponge_end <= 1:
            raise ValueError("sponge strength must be >= 0 and 0 < sponge_start < sponge_end <= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def explicit_rates(self, grid: Grid, amplitude: float = 0.0) -> dict:
        """Largest frequencies of the explicitly treated terms.

        For the kink perturbation flow the coupling ``6 Q_c' dx^{-1} dy w`` is
        the stiff one: it peaks at the lowest x-wavenumber and the highest
        retained transverse mode, where ``n / xi`` is largest.
        """
        xi_max = np.pi / grid.lx * int(grid.dealias_fraction * grid.nx / 2)
        rates = {"sponge": self.sponge}
        if self.equation is Equation.MKP2:
            rates["advection"] = 6 * (self.c / 2 + amplitude) ** 2 * xi_max
            n_max = int(grid.dealias_fraction * grid.ny / 2)
            rates["nonlocal"] = 6 * (self.c / 2) * n_max / (np.pi / grid.lx)
        else:
            rates["advection"] = 6 * amplitude * xi_max
        return rates

    def max_stable_dt(self, grid: Grid, amplitude: float = 0.0) -> float:
        top = max(self.explicit_rates(grid, amplitude).values())
        return STABILITY_BUDGET / top if top > 0 else math.inf

    def check_budget(self, grid: Grid, amplitude: float = 0.0) -> None:
        """Explicit-part check: every explicit frequency times dt within the RK4 budget."""
        rates = self.explicit_rates(grid, amplitude)
        name, top = max(rates.items(), key=lambda kv: kv[1])
        if self.dt * top > STABILITY_BUDGET:
            raise ValueError(
                f"dt={self.dt} exceeds the explicit budget: {name} rate {top:.4g} allows "
                f"dt <= {STABILITY_BUDGET / top:.3g}"
            )

    def config_hash(self, grid: Grid, extra: dict | None = None) -> str:
        payload = {"flow": _jsonable(asdict(self)), "grid": asdict(grid), "extra": extra or {}}
        return config_hash(payload)


def _jsonable(d):
    return {k: (v.value if isinstance(v, enum.Enum) else v) for k, v in d.items()}


def config_hash(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# right-hand sides -------------------------------------------------------------
def linear_symbol(grid: Grid, frame_speed: float = 0.0) -> np.ndarray:
    """``i (xi^3 - 3 n^2 / xi) + frame_speed i xi``; zero on the k=0 row."""
    xi, n = grid.xi, grid.n
    L = np.zeros(grid.spectral_shape, dtype=complex)
    L[1:] = 1j * (xi[1:] ** 3 - 3 * n**2 / xi[1:]) + 1j * frame_speed * xi[1:]
    return L


def _finish(grid: Grid, c_hat: np.ndarray, dealias: bool) -> np.ndarray:
    if dealias:
        c_hat *= grid.mask
    c_hat[0, grid.n[0] != 0] = 0.0
    return c_hat


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t * t)


def sponge_profile(grid: Grid, strength: float, start: float = 0.85, end: float = 1.0) -> np.ndarray:
    """Damping rate as a function of ``a = |x| / lx``.

    With ``end = 1`` it ramps from 0 at ``a = start`` up to ``strength`` at the
    seam. With ``end < 1`` it is a band: up over the first third of
    ``[start, end]``, flat, and back to zero at ``end``. The band leaves the
    seam undamped, which matters when a stationary structure sits there (the
    periodized antikink of the kink background): damping it destabilizes the
    kink/antikink pair on short domains.
    """
    a = np.abs(grid.x) / grid.lx
    if end >= 1.0:
        return strength * _smoothstep((a - start) / (1 - start))
    ramp = (end - start) / 3
    return strength * _smoothstep((a - start) / ramp) * _smoothstep((end - a) / ramp)


def kp2_nonlinear(
    coeffs: np.ndarray, grid: Grid, dealias: bool = True, sponge: np.ndarray | None = None
) -> np.ndarray:
    u = sp.to_physical(SpectralField(coeffs, grid))
    out = -3j * grid.xi * sp.to_spectral(u * u, grid).coeffs
    if sponge is not None:
        out -= sp.to_spectral(sponge[:, None] * u, grid).coeffs
    return _finish(grid, out, dealias)


def background_shift(c: float, frame_speed: float, t: float) -> float:
    """Position offset of the kink ``Q_c(x + c t)`` seen in the moving frame."""
    return (c + frame_speed) * t


def mkp2_nonlinear(
    coeffs: np.ndarray,
    grid: Grid,
    c: float,
    t: float,
    frame_speed: float = 0.0,
    dealias: bool = True,
    sponge: np.ndarray | None = None,
) -> np.ndarray:
    bg = KinkBackground.build(grid, c, background_shift(c, frame_speed, t))
    f = SpectralField(coeffs, grid)
    w = sp.to_physical(f)
    wx = sp.to_physical(sp.dX(f))
    Vf = sp.dXinv_dY(f, tol=np.inf)
    if LOCAL_ANTIDERIVATIVE:
        # x-constant of dx^{-1} dy w per mode: the one for which the Miura images are mean-free
        Vf.coeffs[0] = sp.to_spectral(w * (w + 2 * bg.q_per[:, None]), grid).coeffs[0]
        Vf.coeffs[0, 0] = 0.0
    V = sp.to_physical(Vf)
    flux, src = kernels.mkp2_terms(w, wx, V, bg.q_per, bg.dq_per)
    if sponge is not None:
        src = src - sponge[:, None] * w
    out = 2j * grid.xi * sp.to_spectral(flux, grid).coeffs + sp.to_spectral(src, grid).coeffs
    return _finish(grid, out, dealias)


def kp2Rhs(u: SpectralField, frame_speed: float = 0.0, nonlinear: bool = True) -> SpectralField:
    """Time derivative of integrated KP-II; the k=0 row of the result is zero."""
    sp.dXinv_dY(u)
    out = linear_symbol(u.grid, frame_speed) * u.coeffs
    if nonlinear:
        out = out + kp2_nonlinear(u.coeffs, u.grid)
    out[0, u.grid.n[0] != 0] = 0.0
    return SpectralField(out, u.grid)


def mkp2PerturbationRhs(
    w: SpectralField, t: float, c: float, frame_speed: float = 0.0, check: bool = True
) -> SpectralField:
    """Right-hand side of the mKP-II equation for ``w`` around ``Q_c(x + c t)``."""
    if check:
        check_localized(w)
    sp.dXinv_dY(w)
    g = w.grid
    out = linear_symbol(g, frame_speed) * w.coeffs + mkp2_nonlinear(w.coeffs, g, c, t, frame_speed)
    out[0, g.n[0] != 0] = 0.0
    return SpectralField(out, g)


# steppers -----------------------------------------------------------------------
def _phi_functions(z: np.ndarray, contour_points: int = 32):
    """ETDRK4 coefficient functions by contour averaging (stable near z = 0)."""
    r = np.exp(2j * np.pi * (np.arange(1, contour_points + 1) - 0.5) / contour_points)
    zc = z[..., None] + r
    ez = np.exp(zc)
    ez2 = np.exp(zc / 2)
    q = ((ez2 - 1) / zc).mean(-1)
    f1 = ((-4 - zc + ez * (4 - 3 * zc + zc**2)) / zc**3).mean(-1)
    f2 = ((2 + zc + ez * (zc - 2)) / zc**3).mean(-1)
    f3 = ((-4 - 3 * zc - zc**2 + ez * (4 - zc)) / zc**3).mean(-1)
    return q, f1, f2, f3


class Stepper:
    """Fixed-step exponential integrator for ``u_t = L u + N(u, t)``."""

    def __init__(self, L: np.ndarray, nonlin: Callable[[np.ndarray, float], np.ndarray], dt: float, scheme: Scheme):
        self.L, self.N, self.dt, self.scheme = L, nonlin, dt, Scheme(scheme)
        z = dt * L
        self.E = np.exp(z)
        self.E2 = np.exp(z / 2)
        if self.scheme is Scheme.ETDRK4:
            q, f1, f2, f3 = _phi_functions(z)
            self.Q, self.f1, self.f2, self.f3 = dt * q, dt * f1, dt * f2, dt * f3

    def step(self, u: np.ndarray, t: float) -> np.ndarray:
        if self.scheme is Scheme.ETDRK4:
            return self._etdrk4(u, t)
        return self._ifrk4(u, t)

    def _etdrk4(self, u, t):
        h = self.dt
        Nu = self.N(u, t)
        a = kernels.etd_stage(self.E2, u, self.Q, Nu)
        Na = self.N(a, t + h / 2)
        b = kernels.etd_stage(self.E2, u, self.Q, Na)
        Nb = self.N(b, t + h / 2)
        c = kernels.etd_stage(self.E2, a, self.Q, 2 * Nb - Nu)
        Nc = self.N(c, t + h)
        return kernels.etd_combine(self.E, u, self.f1, self.f2, self.f3, Nu, Na, Nb, Nc)

    def _ifrk4(self, u, t):
        h, E, E2 = self.dt, self.E, self.E2
        k1 = self.N(u, t)
        k2 = self.N(E2 * (u + 0.5 * h * k1), t + h / 2)
        k3 = self.N(E2 * u + 0.5 * h * k2, t + h / 2)
        k4 = self.N(E * u + h * E2 * k3, t + h)
        return E * u + h / 6 * (E * k1 + 2 * E2 * (k2 + k3) + k4)


# integration --------------------------------------------------------------------
@dataclass
class TimeSeries:
    times: list = field(default_factory=list)
    records: list = field(default_factory=list)
    config_hash: str = ""

    def append(self, t: float, record: dict) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError("times must be strictly increasing")
        self.times.append(float(t))
        self.records.append({"time": float(t), "config_hash": self.config_hash, **record})

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.records], dtype=float)

    def __len__(self):
        return len(self.times)


Observer = Callable[[float, SpectralField], dict]


def norm_observer(t: float, f: SpectralField) -> dict:
    e = sp.eNorm(f)
    return {"l2": e.l2, "dx": e.dx, "dxinv_dy": e.dxinv_dy, "e_total": e.e_total}


@dataclass
class IntegrationResult:
    series: TimeSeries
    final: SpectralField
    t_final: float
    steps: int
    snapshots: list = field(default_factory=list)


def make_stepper(grid: Grid, spec: FlowSpec) -> Stepper:
    L = linear_symbol(grid, spec.frame_speed)
    damp = sponge_profile(grid, spec.sponge, spec.sponge_start, spec.sponge_end) if spec.sponge > 0 else None
    if not spec.nonlinear:
        if damp is None:
            N = lambda u, t: np.zeros_like(u)
        else:
            N = lambda u, t: _finish(grid, -sp.to_spectral(damp[:, None] * sp.to_physical(SpectralField(u, grid)), grid).coeffs, spec.dealias)
    elif spec.equation is Equation.KP2:
        N = lambda u, t: kp2_nonlinear(u, grid, spec.dealias, damp)
    else:
        N = lambda u, t: mkp2_nonlinear(u, grid, spec.c, t, spec.frame_speed, spec.dealias, damp)
    return Stepper(L, N, spec.dt, spec.scheme)


def integrate(
    u0: SpectralField,
    spec: FlowSpec,
    observers: Iterable[Observer] = (norm_observer,),
    keep_every: int | None = None,
    start_step: int = 0,
    config_extra: dict | None = None,
    checkpoint: Callable[[int, float, SpectralField], None] | None = None,
    checkpoint_every: int | None = None,
) -> IntegrationResult:
    """Advance ``u0`` to ``spec.t_end``.

    Observers run every ``spec.observe_every`` steps and at the final step;
    ``keep_every`` additionally stores full field snapshots for post-processing.
    ``start_step`` resumes a run whose state ``u0`` was saved at that step.
    """
    grid = u0.grid
    if spec.equation is Equation.MKP2:
        check_localized(u0)
        spec.check_budget(grid)
    sp.dXinv_dY(u0)
    stepper = make_stepper(grid, spec)
    series = TimeSeries(config_hash=spec.config_hash(grid, config_extra))
    observers = list(observers)
    u = u0.coeffs.copy()
    n_steps = spec.n_steps
    snaps = []

    def observe(step, coeffs):
        t = step * spec.dt
        f = SpectralField(coeffs, grid)
        rec = {}
        for ob in observers:
            rec.update(ob(t, f))
        series.append(t, rec)

    if start_step == 0 or start_step % spec.observe_every == 0:
        observe(start_step, u)
    if keep_every and start_step % keep_every == 0:
        snaps.append((start_step * spec.dt, SpectralField(u.copy(), grid)))
    for step in range(start_step, n_steps):
        u = stepper.step(u, step * spec.dt)
        done = step + 1
        if done % 50 == 0 or done == n_steps:
            _guard(u, grid, done * spec.dt)
        if done % spec.observe_every == 0 or done == n_steps:
            observe(done, u)
        if keep_every and done % keep_every == 0:
            snaps.append((done * spec.dt, SpectralField(u.copy(), grid)))
        if checkpoint and checkpoint_every and done % checkpoint_every == 0:
            checkpoint(done, done * spec.dt, SpectralField(u.copy(), grid))
    return IntegrationResult(series, SpectralField(u, grid), n_steps * spec.dt, n_steps, snaps)


def _guard(u: np.ndarray, grid: Grid, t: float) -> None:
    if not np.all(np.isfinite(u)):
        raise NanDetected(f"non-finite coefficients at t={t:.6g}")
    size = sp.l2_norm(SpectralField(u, grid))
    if size > BLOWUP_LEVEL:
        raise BlowupDetected(f"L2 norm {size:.3e} exceeds {BLOWUP_LEVEL:.0e} at t={t:.6g}")


# diagnostics ----------------------------------------------------------------------
def l2Drift(series: TimeSeries, key: str = "l2") -> float:
    vals = series.column(key)
    if vals.size == 0 or vals[0] == 0:
        return 0.0 if vals.size == 0 or np.all(vals == 0) else float("inf")
    return float(np.max(np.abs(vals - vals[0])) / vals[0])


def _weight(weight: WeightSpec, x, grid: Grid, order: int, periodic: bool):
    return weight.periodic_chi(x, grid.lx, order) if periodic else weight.chi(x, order)


def weighted_mass(
    f: SpectralField, weight: WeightSpec, position_offset: float = 0.0, periodic: bool = False
) -> float:
    """``int u^2 chi(x + x0 + position_offset)`` by periodic trapezoid."""
    g = f.grid
    u = sp.to_physical(f)
    chi = _weight(weight, g.x + position_offset, g, 0, periodic)[:, None]
    return sp.integrate(chi * u * u, g)


def kato_rhs(
    f: SpectralField,
    weight: WeightSpec,
    c1: float,
    t: float,
    frame_speed: float = 0.0,
    periodic: bool = False,
) -> tuple[float, dict]:
    """Right side of the Kato identity for the moving weight ``chi(x + x0 - c1 t)``.

    ``int (-3 u_x^2 - 3 (dx^-1 dy u)^2 + 4 u^3) chi' + int u^2 (chi''' - c1 chi')``.
    """
    g = f.grid
    pos = g.x + (frame_speed - c1) * t
    u = sp.to_physical(f)
    ux = sp.to_physical(sp.dX(f))
    V = sp.to_physical(sp.dXinv_dY(f))
    d1 = _weight(weight, pos, g, 1, periodic)[:, None]
    d3 = _weight(weight, pos, g, 3, periodic)[:, None]
    terms = {
        "dx": sp.integrate(-3 * ux**2 * d1, g),
        "dxinv_dy": sp.integrate(-3 * V**2 * d1, g),
        "cubic": sp.integrate(4 * u**3 * d1, g),
        "third": sp.integrate(u**2 * d3, g),
        "drift": sp.integrate(-c1 * u**2 * d1, g),
    }
    return sum(terms.values()), terms


def time_derivative(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Fourth-order finite differences on a uniform time grid (one-sided at the ends)."""
    t = np.asarray(times, float)
    v = np.asarray(values, float)
    h = t[1] - t[0]
    if v.size < 5:
        return np.gradient(v, h)
    d = np.empty_like(v)
    d[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    fwd = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    d[0] = fwd @ v[:5]
    d[1] = np.array([-3, -10, 18, -6, 1]) / (12 * h) @ v[:5]
    d[-1] = -fwd @ v[-5:][::-1]
    d[-2] = -(np.array([-3, -10, 18, -6, 1]) / (12 * h)) @ v[-5:][::-1]
    return d


def katoBalance(
    u_series: list[tuple[float, SpectralField]],
    weight: WeightSpec,
    c1: float,
    frame_speed: float = 0.0,
    periodic: bool = True,
) -> TimeSeries:
    """Compare the differenced rate of ``int u^2 chi`` with the Kato right side.

    With ``periodic`` (the default) the weight is its periodic image sum, for
    which the identity is exact on the torus. The bare sigmoid jumps at the
    seam and picks up the flux of every wave that wraps around.
    """
    times = np.array([t for t, _ in u_series])
    mass = np.array(
        [weighted_mass(f, weight, (frame_speed - c1) * t, periodic) for t, f in u_series]
    )
    lhs = time_derivative(times, mass)
    out = TimeSeries()
    for i, (t, f) in enumerate(u_series):
        rhs, terms = kato_rhs(f, weight, c1, t, frame_speed, periodic)
        scale = max(abs(v) for v in terms.values()) if terms else 0.0
        out.append(t, {
            "mass": mass[i],
            "lhs_rate": lhs[i],
            "rhs_value": rhs,
            "residual": lhs[i] - rhs,
            "term_scale": scale,
        })
    return out


def monotonicityProbe(
    u0: SpectralField,
    weight: WeightSpec,
    c1: float,
    spec: FlowSpec,
    delta: float = 0.05,
    keep_every: int = 1,
) -> TimeSeries:
    """Track ``I(t) = int u^2 chi(x + x0 - c1 t)`` along a KP-II run."""
    size = u0.norm()
    if size > delta * (1 + 1e-12):
        raise SmallnessViolation(f"|u0|_L2 = {size:.4g} exceeds delta = {delta:.4g}")
    fs = spec.frame_speed

    def obs(t, f):
        return {"weighted_mass": weighted_mass(f, weight, (fs - c1) * t), "l2": f.norm()}

    spec = FlowSpec(**{**asdict(spec), "observe_every": keep_every})
    res = integrate(u0, spec, observers=[obs])
    series = res.series
    m = series.column("weighted_mass")
    inc = np.diff(m)
    for rec, d in zip(series.records[1:], inc):
        rec["increment"] = float(d)
    series.records[0]["increment"] = 0.0
    return series


def max_increment(series: TimeSeries) -> float:
    inc = np.diff(series.column("weighted_mass"))
    return float(inc.max()) if inc.size else 0.0
