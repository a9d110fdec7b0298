import math

import numpy as np
import pytest

from kpstab import evolution as ev
from kpstab import spectral as sp
from kpstab.ensembles import random_perturbation
from kpstab.errors import BlowupDetected, BufferViolation, SmallnessViolation
from kpstab.evolution import Equation, FlowSpec, Scheme, integrate
from kpstab.profiles import phi_field


def test_flow_spec_validation():
    for bad in (dict(dt=0.0), dict(t_end=-1.0), dict(observe_every=0), dict(sponge=-1.0),
                dict(sponge_start=0.9, sponge_end=0.8), dict(scheme="RK2")):
        with pytest.raises(ValueError):
            FlowSpec(**bad)
    spec = FlowSpec(equation="MKP2_PERTURBATION", scheme="IFRK4")
    assert spec.equation is Equation.MKP2 and spec.scheme is Scheme.IFRK4
    assert FlowSpec(dt=0.1, t_end=1.0).n_steps == 10


def test_budget_check(grid):
    FlowSpec(Equation.MKP2, dt=4e-3).check_budget(grid)
    with pytest.raises(ValueError, match="nonlocal"):
        FlowSpec(Equation.MKP2, dt=5e-3).check_budget(grid)
    with pytest.raises(ValueError):
        FlowSpec(Equation.MKP2, dt=0.1).check_budget(grid)
    # the nonlocal rate scales with ny and nx, so refining both halves the limit
    spec = FlowSpec(Equation.MKP2, dt=1e-3)
    assert spec.max_stable_dt(grid.refined()) == pytest.approx(spec.max_stable_dt(grid) / 2, rel=0.1)


def test_config_hash_is_deterministic(grid):
    a = FlowSpec(dt=1e-3).config_hash(grid, {"k": 1})
    assert a == FlowSpec(dt=1e-3).config_hash(grid, {"k": 1})
    assert a != FlowSpec(dt=2e-3).config_hash(grid, {"k": 1})
    assert len(a) == 16


def test_linear_symbol_zero_row_and_values(small_grid):
    g = small_grid
    L = ev.linear_symbol(g, frame_speed=1.5)
    assert np.all(L[0] == 0)
    xi, n = g.xi[3, 0], g.n[0, 2]
    assert L[3, 2] == pytest.approx(1j * (xi**3 - 3 * n**2 / xi + 1.5 * xi))


def test_phi_functions_match_closed_forms():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 50
    z = np.array([1e-3j, 0.5 + 1j, 10j, -10j, -3.0 + 0j])
    got = ev._phi_functions(z)

    def closed(zz):
        zz = mpmath.mpc(zz)
        e = mpmath.exp(zz)
        return (
            (mpmath.exp(zz / 2) - 1) / zz,
            (-4 - zz + e * (4 - 3 * zz + zz * zz)) / zz**3,
            (2 + zz + e * (zz - 2)) / zz**3,
            (-4 - 3 * zz - zz * zz + e * (4 - zz)) / zz**3,
        )

    for i, zz in enumerate(z):
        for arr, ref in zip(got, closed(zz)):
            assert abs(arr[i] - complex(ref)) <= 1e-12 * abs(complex(ref))


@pytest.mark.parametrize("scheme", ["ETDRK4", "IFRK4"])
def test_linear_flow_is_exact(small_grid, scheme):
    g = small_grid
    u0 = random_perturbation(g, 0.05, 2, norm="L2")
    spec = FlowSpec(dt=0.05, t_end=1.0, nonlinear=False, scheme=scheme, dealias=False)
    res = integrate(u0, spec)
    exact = np.exp(ev.linear_symbol(g) * 1.0) * u0.coeffs
    np.testing.assert_allclose(res.final.coeffs, exact, atol=1e-13)
    assert res.steps == 20 and res.t_final == pytest.approx(1.0)


@pytest.mark.parametrize("scheme", ["ETDRK4", "IFRK4"])
def test_line_soliton_is_stationary_in_its_frame(grid, scheme):
    u0 = phi_field(grid, 2.0)
    res = integrate(u0, FlowSpec(dt=1e-3, t_end=0.5, scheme=scheme, frame_speed=4.0, observe_every=100))
    assert np.abs(res.final.physical() - u0.physical()).max() < 1e-6


def test_line_soliton_translates_at_twice_its_speed(grid):
    u0 = phi_field(grid, 2.0)
    res = integrate(u0, FlowSpec(dt=1e-3, t_end=1.0, observe_every=1000))
    exact = phi_field(grid, 2.0, -4.0)
    assert np.abs(res.final.physical() - exact.physical()).max() < 1e-6


def test_observers_and_snapshots(small_grid):
    u0 = random_perturbation(small_grid, 0.05, 1, norm="L2")
    spec = FlowSpec(dt=0.01, t_end=0.1, observe_every=3)
    res = integrate(u0, spec, keep_every=5)
    assert res.series.times == pytest.approx([0.0, 0.03, 0.06, 0.09, 0.1])
    assert [round(t, 12) for t, _ in res.snapshots] == [0.0, 0.05, 0.1]
    rec = res.series.records[0]
    assert set(rec) >= {"time", "config_hash", "l2", "dx", "dxinv_dy", "e_total"}
    assert rec["config_hash"] == res.series.config_hash


def test_checkpoint_resume_is_bit_exact(small_grid):
    u0 = random_perturbation(small_grid, 0.05, 4, norm="L2")
    spec = FlowSpec(dt=0.01, t_end=0.2, observe_every=5)
    saved = {}
    full = integrate(u0, spec, checkpoint=lambda s, t, f: saved.__setitem__(s, f), checkpoint_every=10)
    assert sorted(saved) == [10, 20]
    resumed = integrate(saved[10], spec, start_step=10)
    assert np.array_equal(resumed.final.coeffs, full.final.coeffs)
    assert resumed.series.times == full.series.times[2:]


def test_blowup_guard(small_grid):
    big = sp.from_profile(1e7 * np.exp(-small_grid.x**2), small_grid)
    with pytest.raises(BlowupDetected):
        integrate(big, FlowSpec(dt=1e-3, t_end=0.1, nonlinear=False))


def test_mkp_flow_requires_localized_data(small_grid):
    edge = sp.from_profile(np.exp(-((small_grid.x + 30) ** 2)), small_grid)
    with pytest.raises(BufferViolation):
        integrate(edge, FlowSpec(Equation.MKP2, dt=1e-3, t_end=0.01))


def test_time_series_rules():
    s = ev.TimeSeries(config_hash="abc")
    s.append(0.0, {"l2": 1.0})
    s.append(1.0, {"l2": 1.5})
    with pytest.raises(ValueError):
        s.append(1.0, {"l2": 2.0})
    assert ev.l2Drift(s) == pytest.approx(0.5)
    assert len(s) == 2 and s.records[1]["config_hash"] == "abc"


def test_fourth_order_time_derivative_is_exact_on_quartics():
    t = np.linspace(0, 1, 21)
    v = 3 * t**4 - t**3 + 2 * t
    np.testing.assert_allclose(ev.time_derivative(t, v), 12 * t**3 - 3 * t**2 + 2, atol=1e-10)


def test_sponge_profiles(grid):
    ramp = ev.sponge_profile(grid, 10.0, 0.85)
    assert ramp[np.abs(grid.x) < 0.85 * grid.lx].max() == 0.0
    assert ramp.max() == pytest.approx(10.0, rel=1e-3)
    band = ev.sponge_profile(grid, 10.0, 0.55, 0.8)
    a = np.abs(grid.x) / grid.lx
    assert band[(a < 0.55) | (a > 0.8)].max() == 0.0
    assert band.max() == pytest.approx(10.0)


def test_sponge_only_removes_mass(small_grid):
    u0 = random_perturbation(small_grid, 0.05, 6, norm="L2", inner=2.0)
    res = integrate(u0, FlowSpec(dt=5e-3, t_end=1.0, sponge=20.0, observe_every=20))
    l2 = res.series.column("l2")
    assert np.all(np.diff(l2) <= 1e-12) and l2[-1] < l2[0]


def test_kato_identity_terms_for_a_quiet_field(small_grid):
    w = sp.WeightSpec(0.2)
    rhs, terms = ev.kato_rhs(sp.zeros(small_grid), w, 1.0, 0.0)
    assert rhs == 0.0 and set(terms) == {"dx", "dxinv_dy", "cubic", "third", "drift"}


def test_monotonicity_probe_checks_smallness(small_grid):
    u0 = random_perturbation(small_grid, 0.2, 1, norm="L2")
    with pytest.raises(SmallnessViolation):
        ev.monotonicityProbe(u0, sp.WeightSpec(0.1), 1.0, FlowSpec(dt=1e-2, t_end=0.1), delta=0.05)


def test_weighted_mass_tracks_weight(small_grid):
    g = small_grid
    u = sp.from_profile(np.exp(-g.x**2), g)
    full = u.norm() ** 2
    w = sp.WeightSpec(1.0)
    left = ev.weighted_mass(u, w, position_offset=-20.0)
    right = ev.weighted_mass(u, w, position_offset=20.0)
    assert left < 1e-12 * full and math.isclose(right, full, rel_tol=1e-12)
