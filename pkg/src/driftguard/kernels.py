"""Backend selection for the hot loops.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy implementations in ``_pykernels`` take over. Setting the environment
variable ``DRIFTGUARD_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _pykernels

try:
    if os.environ.get("DRIFTGUARD_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _impl
except ImportError:
    _impl = _pykernels

BACKEND = _impl.BACKEND
GAUSSIAN = _pykernels.GAUSSIAN
RECTANGULAR = _pykernels.RECTANGULAR
EPANECHNIKOV = _pykernels.EPANECHNIKOV

binned_rows = _impl.binned_rows
restricted_survival = _impl.restricted_survival
