"""Select the rollout kernel: compiled extension when importable, numpy otherwise."""

import os

from simcal.simenv import _kernels_py

_FORCE_PURE = os.environ.get("SIMCAL_PURE_PYTHON", "") not in ("", "0")

if _FORCE_PURE:
    _compiled = None
else:
    try:
        from simcal.simenv import _ckernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
kernel = _compiled if _compiled is not None else _kernels_py
python_kernel = _kernels_py
compiled_kernel = _compiled
