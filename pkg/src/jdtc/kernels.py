"""Backend selection for the hot mixture kernels.

The numba backend is used when numba imports cleanly, unless the environment
variable ``JDTC_DISABLE_NUMBA`` is set to a truthy value, in which case the
pure-numpy implementations are used. Both backends expose the same
functions: ``gm_eval``, ``ekf_scalar_update``, ``geometric_mean``,
``reduce_mixture`` and ``fuse_slot``.
"""

import os

from . import _kernels_numpy

_FLAG = os.environ.get("JDTC_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

if _DISABLED:
    _impl = _kernels_numpy
    BACKEND = "numpy"
else:
    try:
        from . import _kernels_numba as _impl

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _impl = _kernels_numpy
        BACKEND = "numpy"

gm_eval = _impl.gm_eval
ekf_scalar_update = _impl.ekf_scalar_update
geometric_mean = _impl.geometric_mean
reduce_mixture = _impl.reduce_mixture
fuse_slot = _impl.fuse_slot

__all__ = ["BACKEND", "gm_eval", "ekf_scalar_update", "geometric_mean", "reduce_mixture", "fuse_slot"]
