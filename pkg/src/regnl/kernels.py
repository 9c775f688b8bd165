"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``REGNL_PURE_PYTHON=1``
to force the numpy fallback (handy for debugging and for the benchmark).
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("REGNL_PURE_PYTHON") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
PENALTY_WEIGHT: float = _kernels_py.PENALTY_WEIGHT
STABILITY_MARGIN: float = _kernels_py.STABILITY_MARGIN

train_full_batch = _impl.train_full_batch
css_residuals = _impl.css_residuals
css_penalized = _impl.css_penalized
stability_violation = _impl.stability_violation
dropout_scales = _impl.dropout_scales
dropout_threshold = _impl.dropout_threshold


def available_backends() -> dict:
    """Map of backend name to module, for side-by-side comparisons."""
    backends = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        backends["compiled"] = _kernels
    return backends
