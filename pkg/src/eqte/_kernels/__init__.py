"""Numerical kernels for tail fitting.

The compiled extension (``_gpdcore``) and the pure-Python reference
(``_reference``) implement the same deterministic algorithm. The compiled
backend is preferred at import time; set ``EQTE_PURE_PYTHON=1`` to force
the reference implementation (used by the parity tests and benchmarks).
"""

import os

if os.environ.get("EQTE_PURE_PYTHON"):
    from . import _reference as _backend
else:
    try:
        from . import _gpdcore as _backend  # type: ignore[attr-defined]
    except ImportError:  # extension not built; fall back silently
        from . import _reference as _backend

BACKEND_NAME = _backend.NAME
fit_gpd = _backend.fit_gpd
ad_statistic = _backend.ad_statistic
ad_bootstrap_count = _backend.ad_bootstrap_count

XI_MIN = _backend.XI_MIN
XI_MAX = _backend.XI_MAX
XI_ZERO_TOL = _backend.XI_ZERO_TOL
