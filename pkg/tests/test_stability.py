import json
import math

import numpy as np
import pytest

from kpstab import spectral as sp
from kpstab import stability as S
from kpstab.ensembles import random_perturbation
from kpstab.errors import NotInNeighborhood, OutOfTube, WindowExitedDomain
from kpstab.profiles import phi_field


def test_jacobian_entry_is_four_pi(grid):
    assert S.jacobian_diagonal(2.0, grid) == pytest.approx(4 * math.pi, abs=1e-10)
    # the closed form (3 / 4c) |phi_c|^2 on the cylinder
    assert 3 / 8 * phi_field(grid, 2.0).norm() ** 2 == pytest.approx(4 * math.pi, abs=1e-10)


def test_modulation_recovers_a_pure_translation(grid):
    raw = S._kink_difference(grid, 2.0, 0.3, 0.0)
    mod = S.modulationDecompose(raw, 2.0)
    assert mod.gamma == pytest.approx(0.3, abs=1e-10)
    assert sp.e_norm_local(mod.w) < 1e-9
    assert mod.ortho_residual <= S.ORTHO_TOL


def test_modulation_agrees_with_golden_section(grid):
    bump = sp.from_profile(0.01 * np.exp(-grid.x**2), grid)
    mod = S.modulationDecompose(bump, 2.0)
    assert mod.gamma == pytest.approx(S.golden_gamma(bump, 2.0, -0.1, 0.1), abs=1e-8)
    qp = S._profile(S.kinkQprime, 2.0, grid, mod.gamma)
    assert abs(sp.inner(mod.w, qp)) <= 1e-8 * mod.w.norm() * qp.norm()


def test_large_translation_stays_on_the_orbit(grid):
    raw = S._kink_difference(grid, 2.0, 3.0, 0.0)
    assert sp.e_norm_local(raw) > S.tube_radius(2.0, grid)
    mod = S.modulationDecompose(raw, 2.0, gamma_guess=2.5)
    assert mod.gamma == pytest.approx(3.0, abs=1e-9)


def test_modulation_rejects_fields_outside_the_tube(grid):
    big = random_perturbation(grid, 5.0, 1)
    with pytest.raises(OutOfTube):
        S.modulationDecompose(big, 2.0)
    far = random_perturbation(grid, 100.0, 1)
    with pytest.raises(OutOfTube):
        S.modulationDecompose(far, 2.0)


def test_lyapunov_functional_is_quadratic_near_the_kink(grid):
    w = S.project_off(random_perturbation(grid, 1.0, 2, band=0.125), 2.0)
    vals = []
    for eps in (1e-3, 2e-3):
        mod = S.modulationDecompose(eps * w, 2.0)
        vals.append(S.lyapunovFunctional(mod, 2.0))
    assert vals[1][0] / vals[0][0] == pytest.approx(4.0, rel=1e-2)
    assert vals[0][1] > 0.5
    zero = S.ModulationState(0.0, sp.zeros(grid), 0.0)
    val, ratio = S.lyapunovFunctional(zero, 2.0)
    assert val == 0.0 and math.isnan(ratio)


def test_miura_inverse_of_the_soliton_itself(grid):
    res = S.miuraInverse(sp.zeros(grid), 2.0)
    assert res.k == 2.0 and res.v.norm() == 0.0 and res.newton_iters == 0


def test_miura_inverse_round_trip(grid):
    v = random_perturbation(grid, 1.0, 11, band=0.125)
    v = v * (0.01 / sp.e_norm_local(v))
    u = S.miura_forward(2.01, v) - phi_field(grid, 2.0)
    res = S.miuraInverse(u, 2.0, delta_inv=0.1)
    assert abs(res.k - 2.01) < 1e-8
    assert sp.e_norm_local(res.v - v, tol=np.inf) < 1e-7
    assert res.history[-1] <= res.history[0]


def test_miura_inverse_neighborhood(grid):
    u = random_perturbation(grid, 0.2, 1, norm="L2")
    with pytest.raises(NotInNeighborhood):
        S.miuraInverse(u, 2.0)


def test_kp_distance_finds_the_shift(grid):
    u = phi_field(grid, 2.0, 0.004)
    dist, gam = S.kp_distance(u, 2.0, 0.0)
    assert dist < 1e-6 and gam == pytest.approx(0.004, abs=1e-6)


def test_half_plane_residual(grid):
    u = phi_field(grid, 2.0, 0.0)
    sharp, smooth = S.half_plane_residual(u, 2.0, 0.0, -5.0)
    assert sharp < 1e-12 and smooth < 1e-12
    bump = u + sp.from_profile(0.1 * np.exp(-((grid.x - 10) ** 2)), grid)
    right, _ = S.half_plane_residual(bump, 2.0, 0.0, 0.0)
    left, _ = S.half_plane_residual(bump, 2.0, 0.0, 20.0)
    assert right > 0.05 and left < 1e-10


def test_kink_side_data_has_requested_size(grid):
    u = S.kink_side_data(grid, 2.0, 0.02, 3, 1 / 3)
    assert u.norm() == pytest.approx(0.02, rel=1e-12)
    assert S.kink_side_data(grid, 2.0, 0.0, 3, 1 / 3).norm() == 0.0


def test_config_serialises(grid):
    cfg = S.StabilityConfig(grid=grid)
    payload = json.loads(json.dumps(cfg.as_dict()))
    assert payload["grid"]["nx"] == 512 and payload["sponge_end"] is None


def test_short_orbital_run(small_grid):
    # no absorbing band: the Miura mass is then conserved
    cfg = S.StabilityConfig(grid=small_grid, delta=0.01, t_end=0.5, dt=5e-3, observe_every=50, sponge=0.0)
    res = S.orbitalStabilityExperiment(cfg)
    s = res.series
    assert len(s) == 3
    # an infimum over shifts, so at most the data size
    assert 0.009 < s.records[0]["kp_distance"] <= 0.01
    assert res.summary["sup_kp_distance"] <= 0.011
    assert res.summary["conserved_drift"] < 1e-6
    assert np.all(np.isfinite(s.column("lyapunov")))


def test_zero_perturbation_orbital_run(small_grid):
    cfg = S.StabilityConfig(grid=small_grid, delta=0.0, t_end=0.1, dt=5e-3, observe_every=10)
    res = S.orbitalStabilityExperiment(cfg)
    assert res.summary["sup_kp_distance"] == 0.0 and res.k == 2.0


def test_asymptotic_run_respects_the_admissible_time(small_grid):
    cfg = S.StabilityConfig(grid=small_grid, delta=0.01, t_end=60.0, dt=5e-3)
    with pytest.raises(WindowExitedDomain):
        S.asymptoticStabilityExperiment(cfg)
    assert S.admissible_time(cfg, 2.0) == pytest.approx(32 / 6)


def test_weighted_embedding_ratios(grid):
    w = random_perturbation(grid, 0.1, 4)
    wt = sp.WeightSpec(0.1)
    r2 = S.weightedEmbeddingCheck(w, wt, 2)
    assert 0 < r2.wimbed <= 1.0 and not r2.degenerate
    r4 = S.weightedEmbeddingCheck(w, wt, 4)
    r4b = S.weightedEmbeddingCheck(3 * w, wt, 4)
    assert r4b.wimbed == pytest.approx(r4.wimbed, rel=1e-10)
    assert r4b.ias == pytest.approx(r4.ias, rel=1e-10)
    assert S.weightedEmbeddingCheck(sp.zeros(grid), wt, 4).degenerate
    with pytest.raises(ValueError):
        S.weightedEmbeddingCheck(w, wt, 8)
