"""Hot-loop kernels: compiled Cython core with a pure numpy fallback.

The compiled module is used when it imports; set ``ARHMM_PURE_PYTHON=1`` to
force the fallback. ``BACKEND`` names the active implementation.
"""

import os

from . import _fallback

if os.environ.get("ARHMM_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _fallback
else:
    try:
        from . import _core as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = "cython" if _impl is not _fallback else "python"

ar_means = _impl.ar_means
log_densities = _impl.log_densities
forward = _impl.forward
loglik_grad = _impl.loglik_grad
viterbi = _impl.viterbi


def get_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")


__all__ = ["BACKEND", "ar_means", "log_densities", "forward", "loglik_grad", "viterbi", "get_backend"]
