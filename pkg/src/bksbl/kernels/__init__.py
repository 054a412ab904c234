"""Hot-kernel backend selection.

Prefers the compiled extension ``_ckernels`` (Cython); falls back to the
pure-Python twin ``pykernels`` when the extension is unavailable or when
``BKSBL_PURE_PYTHON=1`` is set.  Both expose the same surface:

    log_kv, kv_ratio, gig_moments, gig_moments_batch,
    ell, ell_batch, gamma_stationary, gamma_stationary_batch
"""

import os

from . import pykernels

if os.environ.get("BKSBL_PURE_PYTHON") == "1":
    _impl = pykernels
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = pykernels

log_kv = _impl.log_kv
kv_ratio = _impl.kv_ratio
gig_moments = _impl.gig_moments
gig_moments_batch = _impl.gig_moments_batch
ell = _impl.ell
ell_batch = _impl.ell_batch
gamma_stationary = _impl.gamma_stationary
gamma_stationary_batch = _impl.gamma_stationary_batch

BACKEND_NAME = _impl.BACKEND_NAME


def backend_name():
    """Name of the kernel backend in use: "compiled" or "python"."""
    return BACKEND_NAME
