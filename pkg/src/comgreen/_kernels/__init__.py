"""Hot numeric kernels with backend selection at import time.

The compiled Cython extension is preferred; the numpy/LAPACK fallback is
used when the extension was not built or COMGREEN_FORCE_FALLBACK is set.
"""

import os

from . import _fallback

if os.environ.get("COMGREEN_FORCE_FALLBACK"):
    _impl = _fallback
    BACKEND = "fallback"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        _impl = _fallback
        BACKEND = "fallback"

cn_sweep = _impl.cn_sweep


def available_backends():
    """Name -> cn_sweep map of importable backends (for tests/benchmarks)."""
    backends = {"fallback": _fallback.cn_sweep}
    try:
        from . import _native

        backends["native"] = _native.cn_sweep
    except ImportError:
        pass
    return backends
