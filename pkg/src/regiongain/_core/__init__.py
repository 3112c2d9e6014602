"""Backend selection: compiled kernels when available, numpy/python otherwise.

Set ``REGION_GAIN_PURE=1`` to force the pure-python fallback (used by the
backend benchmark and for debugging).
"""

import os

if os.environ.get("REGION_GAIN_PURE"):
    from . import _fallback as _impl
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _fallback as _impl

BACKEND = _impl.BACKEND
BLOWUP_NORM = _impl.BLOWUP_NORM
eval_one = _impl.eval_one
eval_many = _impl.eval_many
rk4 = _impl.rk4
rk45 = _impl.rk45
