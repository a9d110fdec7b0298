"""Compare the compiled kernels with the numpy fallback.

Run ``python3 benchmarks/bench_backends.py``. Part one times each kernel in
isolation on arrays of the default grid size. Part two times a full mKP-II
perturbation step in two fresh interpreters, one forced onto the fallback
with ``KPSTAB_PURE_PYTHON=1``.
"""

import json
import os
import subprocess
import sys
import timeit

import numpy as np

from kpstab import kernels

STEP_SNIPPET = r"""
import json, timeit
from kpstab import kernels
from kpstab.spectral import Grid
from kpstab.ensembles import random_perturbation
from kpstab.evolution import Equation, FlowSpec, make_stepper
g = Grid(512, 32, 32.0)
w = random_perturbation(g, 0.02, 1, band=0.125)
spec = FlowSpec(Equation.MKP2, c=2.0, dt=4e-3, t_end=1.0, frame_speed=-2.0)
st = make_stepper(g, spec)
u = w.coeffs.copy()
st.step(u, 0.0)
n = 40
t = timeit.timeit(lambda: st.step(u, 0.0), number=n) / n
print(json.dumps({"backend": kernels.BACKEND, "step_ms": 1e3 * t}))
"""


def kernel_times(impl, shape=(512, 32), repeat=200):
    rng = np.random.default_rng(0)
    r = lambda: rng.standard_normal(shape)
    z = lambda: rng.standard_normal((shape[0] // 2 + 1, shape[1])) + 1j * rng.standard_normal((shape[0] // 2 + 1, shape[1]))
    w, wx, V = r(), r(), r()
    q, dq = rng.standard_normal(shape[0]), rng.standard_normal(shape[0])
    E, u, Q, N = z(), z(), z(), z()
    args9 = [z() for _ in range(9)]
    out = {}
    out["mkp2_terms"] = timeit.timeit(lambda: impl["mkp2_terms"](w, wx, V, q, dq), number=repeat) / repeat
    out["etd_stage"] = timeit.timeit(lambda: impl["etd_stage"](E, u, Q, N), number=repeat) / repeat
    out["etd_combine"] = timeit.timeit(lambda: impl["etd_combine"](*args9), number=repeat) / repeat
    out["weighted_sum"] = timeit.timeit(lambda: impl["weighted_sum"](w, q), number=repeat) / repeat
    return {k: 1e6 * v for k, v in out.items()}


def step_time(pure: bool):
    env = dict(os.environ)
    if pure:
        env["KPSTAB_PURE_PYTHON"] = "1"
    else:
        env.pop("KPSTAB_PURE_PYTHON", None)
    res = subprocess.run([sys.executable, "-c", STEP_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    print(f"import-time backend: {kernels.BACKEND}")
    rows = {"numpy": kernel_times(kernels.numpy_impl)}
    if kernels.compiled_impl:
        rows["cython"] = kernel_times(kernels.compiled_impl)
    print(f"{'kernel':<14}" + "".join(f"{k + ' (us)':>16}" for k in rows))
    for name in rows["numpy"]:
        print(f"{name:<14}" + "".join(f"{rows[k][name]:>16.1f}" for k in rows))
    print()
    for pure in (True, False):
        r = step_time(pure)
        print(f"full mKP-II step, backend {r['backend']:<7}: {r['step_ms']:.2f} ms")


if __name__ == "__main__":
    main()
