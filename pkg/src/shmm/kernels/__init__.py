"""Stencil kernels with a compiled core and a pure-numpy fallback.

The compiled extension is used when it imports; set ``SHMM_PURE_PYTHON=1`` to
force the fallback. ``BACKEND`` names the active implementation.
"""

import os

from shmm.kernels import _stencil_py as python_backend

compiled_backend = None
if os.environ.get("SHMM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from shmm.kernels import _stencil as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

flux_divergence = _impl.flux_divergence
flux_average = _impl.flux_average
micro_relax = _impl.micro_relax
advdiff_rhs = _impl.advdiff_rhs

__all__ = ["BACKEND", "flux_divergence", "flux_average", "micro_relax", "advdiff_rhs"]
