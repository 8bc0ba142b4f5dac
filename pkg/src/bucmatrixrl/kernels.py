"""Backend selection for the hot loops.

The compiled ``_kernels`` extension is used when importable; otherwise the
NumPy versions in ``_kernels_py``. Set ``BUCMRL_PURE_PYTHON=1`` to force the
fallback.
"""
import os

from . import _kernels_py

if os.environ.get("BUCMRL_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

backward_induction = _impl.backward_induction
rollout = _impl.rollout
sherman_morrison_update = _impl.sherman_morrison_update
feature_potentials = _impl.feature_potentials

__all__ = [
    "BACKEND",
    "backward_induction",
    "rollout",
    "sherman_morrison_update",
    "feature_potentials",
]
