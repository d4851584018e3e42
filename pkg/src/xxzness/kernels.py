"""Backend selection for the hot kernel.

The compiled extension is used when it imports; XXZNESS_PURE=1 forces the
numpy fallback.
"""
import os

from ._tridiag_py import propagate_log as propagate_log_py

try:
    from ._tridiag_ext import propagate_log as propagate_log_ext
except ImportError:  # extension not built
    propagate_log_ext = None

if propagate_log_ext is not None and os.environ.get("XXZNESS_PURE", "") not in ("1", "true"):
    propagate_log = propagate_log_ext
    BACKEND = "cython"
else:
    propagate_log = propagate_log_py
    BACKEND = "python"
