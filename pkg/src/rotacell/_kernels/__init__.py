"""Hot per-orientation channel kernels with a compiled core.

The compiled Cython extension is preferred; a pure NumPy twin with the
same contract is selected at import time when the extension is missing
or when ``ROTACELL_PURE_KERNELS=1`` is set.  Both backends are exercised
against each other in the test suite.
"""

import os

from . import pure

if os.environ.get("ROTACELL_PURE_KERNELS", "") == "1":
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = pure
        BACKEND = "pure"

eval_channel = _impl.eval_channel
eval_channel_grad = _impl.eval_channel_grad
eval_hessian = _impl.eval_hessian

# the flat second-order-cone kernels only exist compiled; the conic
# engine keeps a vectorized NumPy path and switches on this handle
CONE = _impl if BACKEND == "compiled" else None

__all__ = [
    "BACKEND",
    "CONE",
    "eval_channel",
    "eval_channel_grad",
    "eval_hessian",
    "pure",
]
