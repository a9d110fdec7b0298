import os
import subprocess
import sys

import numpy as np
import pytest

from kpstab import kernels

needs_compiled = pytest.mark.skipif(kernels.compiled_impl is None, reason="compiled extension not built")


def _args(rng, name):
    shape = (257, 32)
    cplx = lambda: rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    real = lambda *s: rng.standard_normal(s or shape)
    if name == "mkp2_terms":
        return (real(), real(), real(), real(257), real(257))
    if name == "etd_stage":
        return (cplx(), cplx(), cplx(), cplx())
    if name == "etd_combine":
        return tuple(cplx() for _ in range(9))
    return (real(), real(257))


@needs_compiled
@pytest.mark.parametrize("name", sorted(kernels.numpy_impl))
def test_compiled_kernels_match_numpy(name):
    rng = np.random.default_rng(7)
    args = _args(rng, name)
    ref = kernels.numpy_impl[name](*args)
    got = kernels.compiled_impl[name](*args)
    if isinstance(ref, tuple):
        for r, g in zip(ref, got):
            np.testing.assert_allclose(np.asarray(g), r, rtol=1e-13, atol=1e-13)
    else:
        np.testing.assert_allclose(np.asarray(got), ref, rtol=1e-13, atol=1e-13)


def test_backend_name_is_consistent():
    assert kernels.BACKEND in ("cython", "numpy")
    assert (kernels.BACKEND == "cython") == (kernels.compiled_impl is not None)


def test_environment_forces_pure_python():
    env = {**os.environ, "KPSTAB_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "import kpstab; print(kpstab.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_a_step_is_backend_independent(small_grid):
    """One mKP step with each implementation gives the same coefficients."""
    from kpstab.ensembles import random_perturbation
    from kpstab.evolution import FlowSpec, make_stepper

    w = random_perturbation(small_grid, 0.02, 3, band=0.125)
    spec = FlowSpec("MKP2_PERTURBATION", c=2.0, dt=5e-3, frame_speed=-2.0)
    stepper = make_stepper(small_grid, spec)
    results = []
    for impl in filter(None, (kernels.numpy_impl, kernels.compiled_impl)):
        saved = {k: getattr(kernels, k) for k in impl}
        try:
            for k, fn in impl.items():
                setattr(kernels, k, fn)
            results.append(stepper.step(w.coeffs, 0.0))
        finally:
            for k, fn in saved.items():
                setattr(kernels, k, fn)
    for r in results[1:]:
        np.testing.assert_allclose(r, results[0], rtol=0, atol=1e-15 * np.abs(results[0]).max())
