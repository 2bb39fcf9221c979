"""Hot kernels with a compiled core and a pure-Python fallback.

The compiled extension is used when it was built and importable, unless
``ADPRIOR_PURE_PYTHON=1`` is set. ``BACKEND`` names the active choice.
"""
import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("ADPRIOR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

fnv1a64 = _active.fnv1a64
fnv1a64_batch = _active.fnv1a64_batch
assign_nearest = _active.assign_nearest
sgd_epoch = _active.sgd_epoch

__all__ = [
    "BACKEND", "assign_nearest", "compiled_backend", "fnv1a64",
    "fnv1a64_batch", "python_backend", "sgd_epoch",
]
