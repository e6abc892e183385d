"""Kernel backend selection.

The compiled extension is used when it importable; otherwise (or when
CONNECTO_PURE_PYTHON=1 is set) the pure-numpy fallback takes over. Both
expose the same five functions with matching semantics.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("CONNECTO_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _core as _compiled

        _impl = _compiled
        BACKEND = "compiled"
    except ImportError:
        pass

enet_cd = _impl.enet_cd
best_split_dense = _impl.best_split_dense
best_split_gram = _impl.best_split_gram
random_split_multi = _impl.random_split_multi
svr_smo = _impl.svr_smo


def get_backends():
    """Return {name: module} for every available backend (for benchmarks)."""
    backends = {"python": _pykernels}
    try:
        from . import _core as compiled

        backends["compiled"] = compiled
    except ImportError:
        pass
    return backends
