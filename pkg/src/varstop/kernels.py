"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``VARSTOP_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("VARSTOP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

envelope_argmax = _impl.envelope_argmax
upper_hull = _impl.upper_hull
best_pair_variance = _impl.best_pair_variance


def backends():
    """Available implementations keyed by name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
