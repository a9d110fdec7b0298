"""Seeded random perturbations that are localized, smooth and have zero x-means."""

from __future__ import annotations

import numpy as np

from . import spectral as sp
from .spectral import Grid, SpectralField

WINDOW_POWER = 12


def window(grid: Grid, inner: float = 0.8) -> np.ndarray:
    """Super-Gaussian window equal to ``1/e`` at ``|x| = 0.75 * inner * lx``.

    At the edge of the inner region it is already below ``1e-13``, so the
    outer buffer is clean to machine precision.
    """
    half = 0.75 * inner * grid.lx
    return np.exp(-np.abs(grid.x / half) ** WINDOW_POWER)


def random_perturbation(
    grid: Grid,
    delta: float,
    seed: int,
    norm: str = "E",
    band: float = 1.0 / 3.0,
    inner: float = 0.8,
    transverse: bool = True,
) -> SpectralField:
    """A field ``w = dx U`` with ``U`` random, band-limited and windowed.

    Writing the field as an x-derivative makes every x-mean vanish exactly, so
    ``dx^{-1} dy w`` is always defined. ``U`` is also made mean-free so that
    ``dx^{-1} w = U`` is localized. ``norm`` selects whether ``delta`` is
    the ``E``-norm or the plain ``L2`` norm of the result.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    rng = np.random.default_rng(seed)
    kmax = max(1, int(band * grid.nx / 2))
    nmax = max(0, int(band * grid.ny / 2)) if transverse else 0
    coeffs = np.zeros(grid.spectral_shape, dtype=complex)
    n = grid.n[0]
    cols = np.abs(n) <= nmax
    shape = (kmax + 1, int(cols.sum()))
    decay = np.exp(-0.5 * (np.arange(kmax + 1)[:, None] / (0.5 * kmax)) ** 2)
    coeffs[: kmax + 1, cols] = decay * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    win = window(grid, inner)
    U = sp.to_spectral(sp.to_physical(SpectralField(coeffs, grid)) * win[:, None], grid).coeffs
    # Give U itself zero x-means, so the antiderivative of w stays localized too.
    bump = sp.from_profile(win, grid).coeffs[:, :1]
    U = U - bump * (U[:1] / bump[0, 0])
    w = sp.dX(SpectralField(U, grid))
    size = sp.e_norm(w) if norm == "E" else w.norm()
    if size == 0:
        return w
    return w * (delta / size)


def ensemble(grid: Grid, delta: float, count: int, seed: int, **kw) -> list[SpectralField]:
    seeds = np.random.SeedSequence(seed).generate_state(count)
    return [random_perturbation(grid, delta, int(s), **kw) for s in seeds]

