import json
import math

import numpy as np
import pytest

from kpstab import linear as L
from kpstab import spectral as sp
from kpstab.ensembles import random_perturbation
from kpstab.errors import NonConvergence, RangeViolation
from kpstab.profiles import kinkQprime, phi_field


@pytest.fixture(scope="module")
def ops(grid):
    return L.mode_ops(grid, 2.0)


def _manufactured(ops, grid, n, variant):
    x = grid.x
    if n == 0:
        u = np.exp(-((x - 0.7) ** 2) / 3) * (1 + 0.3j * x)
        if variant == "L_ADJ":
            qp = kinkQprime(2.0, x)
            u = u - qp * np.sum(u * qp) / np.sum(qp * qp)
        return u
    U = np.exp(-((x - 1.3) ** 2) / 4) * (1 + 0.5j * np.sin(x))
    return ops.d1(U)


def test_exponents_closed_form_at_c2():
    e = L.exponents(1, 2.0, "L")
    r = complex(np.sqrt(1 - 1j))
    assert e.mu_plus == pytest.approx(1 + r) and e.lambda_minus == pytest.approx(-1 - r)
    assert e.as_dict()["variant"] == "L"
    with pytest.raises(ValueError):
        L.exponents(1, 0.0)


@pytest.mark.parametrize("variant", ["L", "L_ADJ"])
def test_exponents_are_roots_of_the_limit_equations(variant):
    s = 1.0
    for n in range(1, 20):
        e = L.exponents(n, 2.0, variant)
        sign = 1 if variant == "L" else -1
        # L: r^2 -+ 2 s r + i n = 0 at +-inf; L_ADJ: r^2 +- 2 s r - i n = 0
        for r, side in ((e.mu_plus, +1), (e.lambda_plus, +1), (e.mu_minus, -1), (e.lambda_minus, -1)):
            assert abs(r * r - sign * side * 2 * s * r + sign * 1j * n) < 1e-12
        assert e.sign_structure_holds()


@pytest.mark.parametrize("variant", ["L", "L_ADJ"])
@pytest.mark.parametrize("n", [0, 1, 8])
def test_collocation_recovers_manufactured_solution(grid, ops, n, variant):
    u = _manufactured(ops, grid, n, variant)
    f = ops.apply(u, n, L.Variant(variant))
    if n == 0:
        sol = L.solveMode0(f, 2.0, variant, grid, tol=np.inf)
    else:
        sol = L.solveModeN(L.ModeProblem(n, 2.0, variant, f, grid))
    assert np.linalg.norm(sol.u - u) <= 1e-9 * np.linalg.norm(u)
    assert sol.residual < 1e-8 and sol.bound_constant > 0


@pytest.mark.parametrize("variant", ["L", "L_ADJ"])
def test_explicit_mode0_formula_agrees(grid, ops, variant):
    u = _manufactured(ops, grid, 0, variant)
    f = ops.apply(u, 0, L.Variant(variant))
    got = L.solveMode0Explicit(f, 2.0, variant, grid)
    assert np.linalg.norm(got - u) <= 1e-10 * np.linalg.norm(u)


def test_mode0_range_condition(grid):
    phi_vals = phi_field(grid, 2.0).physical()[:, 0]
    with pytest.raises(RangeViolation):
        L.solveMode0(phi_vals, 2.0, "L", grid)
    with pytest.raises(ValueError):
        L.solveModeN(L.ModeProblem(0, 2.0, "L", phi_vals, grid))
    with pytest.raises(ValueError):
        L.ModeProblem(1, 2.0, "L", phi_vals[:10], grid)


@pytest.mark.parametrize("variant", ["L", "L_ADJ"])
@pytest.mark.parametrize("n", [1, 4])
def test_green_route_agrees_with_collocation(grid, ops, n, variant):
    u = _manufactured(ops, grid, n, variant)
    f = ops.apply(u, n, L.Variant(variant))
    sol = L.solveModeN_green(L.ModeProblem(n, 2.0, variant, f, grid))
    assert np.linalg.norm(sol.u - u) <= 1e-9 * np.linalg.norm(u)
    assert L.wronskian_check(n, 2.0, variant) < 1e-9


def test_fixed_point_route(grid, ops):
    u = _manufactured(ops, grid, 8, "L")
    f = ops.apply(u, 8, L.Variant.L)
    sol = L.solveModeN_fixed_point(L.ModeProblem(8, 2.0, "L", f, grid))
    assert np.linalg.norm(sol.u - u) <= 1e-10 * np.linalg.norm(u)
    f1 = ops.apply(_manufactured(ops, grid, 1, "L"), 1, L.Variant.L)
    with pytest.raises(NonConvergence):
        L.solveModeN_fixed_point(L.ModeProblem(1, 2.0, "L", f1, grid))


def test_fixed_point_map_norm_scales_like_inverse_root_n():
    g = sp.Grid(256, 16, 32.0)
    norms = {n: L.tn_norm(g, 2.0, n) for n in (4, 16)}
    assert norms[4] / norms[16] == pytest.approx(2.0, rel=0.02)
    assert norms[4] == pytest.approx(math.sqrt(2 / 4), rel=0.02)


def test_green_kernel_decays_at_predicted_rate():
    fit = L.green_decay_fit(2, 2.0)
    assert fit["rate"] > 0 and np.isfinite(fit["K"]) and fit["K"] < 10


def test_full_operator_identities(grid):
    phic = phi_field(grid, 2.0)
    assert L.applyLAdj(phic, 2.0, check=False).norm() <= 1e-10 * phic.norm()
    a = random_perturbation(grid, 1.0, 1, band=0.125)
    b = random_perturbation(grid, 1.0, 2, band=0.125)
    lhs = sp.inner(L.applyL(a, 2.0), b)
    rhs = sp.inner(a, L.applyLAdjSigned(b, 2.0))
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_full_solves_round_trip(grid):
    w = random_perturbation(grid, 1.0, 3, band=0.125)
    back = L.solveFull(L.applyL(w, 2.0), 2.0, "L")
    assert (back - w).norm() <= 1e-9 * w.norm()
    w2 = L.project_off_qprime(random_perturbation(grid, 1.0, 4, band=0.125), 2.0)
    back2 = L.solveFull(L.applyLAdj(w2, 2.0), 2.0, "L_ADJ", report=True)
    assert (back2.field - w2).norm() <= 1e-9 * w2.norm()
    assert back2.bound_constant > 0 and back2.projected == 0.0


def test_full_solve_range_gate(grid):
    bad = phi_field(grid, 2.0) + random_perturbation(grid, 0.01, 5)
    with pytest.raises(RangeViolation):
        L.solveFull(bad, 2.0, "L")
    rep = L.solveFull(bad, 2.0, "L", project=True, report=True)
    assert rep.projected > 0.1


def test_coercivity_probe_report(grid):
    rep = L.coercivityProbe(2.0, "L", 8, grid, seed=3)
    assert 0 < rep.min_ratio <= rep.median_ratio
    data = json.loads(rep.to_json())
    assert data["ensemble_size"] == 8 and data["variant"] == "L"
    wrep = L.coercivityProbe(2.0, "L_ADJ", 4, grid, weight=sp.WeightSpec(0.1))
    assert len(wrep.per_offset) == 3 and wrep.min_ratio > 0


def test_mode_bound_table_is_finite(grid):
    tab = L.mode_bound_table(grid, 2.0, "L", [1, 2])
    assert set(tab) == {1, 2} and all(0 < v < 100 for v in tab.values())
