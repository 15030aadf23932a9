"""Selects the compiled kernels when available, otherwise the NumPy ones.

Set ``DDISAC_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("DDISAC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _kernels_py
else:
    _impl = _kernels_py

slice_labels = _impl.slice_labels
count_bit_errors = _impl.count_bit_errors
slice_count_errors = _impl.slice_count_errors

__all__ = ["BACKEND", "slice_labels", "count_bit_errors", "slice_count_errors"]
