"""Elementwise hot loops, compiled when the extension is available.

``BACKEND`` reports which implementation was picked at import ("cython" or
"numpy"). Setting ``KPSTAB_PURE_PYTHON=1`` forces the numpy versions.
"""

from __future__ import annotations

import os

import numpy as np


def _np_mkp2_terms(w, wx, V, q, dq):
    qc = q[:, None]
    flux = w * (3 * qc * qc + w * (3 * qc + w))
    src = -6.0 * (wx + dq[:, None]) * V
    return flux, src


def _np_etd_stage(E2, u, Q, N):
    return E2 * u + Q * N


def _np_etd_combine(E, u, f1, f2, f3, Nu, Na, Nb, Nc):
    return E * u + f1 * Nu + 2 * f2 * (Na + Nb) + f3 * Nc


def _np_weighted_sum(values, weight):
    return float(np.dot(weight, values.sum(axis=1)))


numpy_impl = {
    "mkp2_terms": _np_mkp2_terms,
    "etd_stage": _np_etd_stage,
    "etd_combine": _np_etd_combine,
    "weighted_sum": _np_weighted_sum,
}

compiled_impl = None
if os.environ.get("KPSTAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _ck

        compiled_impl = {
            "mkp2_terms": _ck.mkp2_terms,
            "etd_stage": _ck.etd_stage,
            "etd_combine": _ck.etd_combine,
            "weighted_sum": _ck.weighted_sum,
        }
    except ImportError:
        compiled_impl = None

_active = compiled_impl or numpy_impl
BACKEND = "cython" if compiled_impl else "numpy"

mkp2_terms = _active["mkp2_terms"]
etd_stage = _active["etd_stage"]
etd_combine = _active["etd_combine"]
weighted_sum = _active["weighted_sum"]
