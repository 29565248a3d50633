"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_pykernels`` is used. Setting the environment
variable ``TOKENDYN_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("TOKENDYN_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        _ckernels = None
    else:
        _impl = _ckernels
        BACKEND = "cython"
else:
    _ckernels = None

STATUS_COMPLETED = _pykernels.STATUS_COMPLETED
STATUS_BLOWUP = _pykernels.STATUS_BLOWUP


def available_backends():
    names = {"python": _pykernels}
    if _ckernels is not None:
        names["cython"] = _ckernels
    return names


def get_backend(name=None):
    """Return the kernel module called ``name``, or the active one."""
    if name is None:
        return _impl
    try:
        return available_backends()[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available") from None


def attention_rhs(x, M, sdelta, a, want_P=False):
    return _impl.attention_rhs(x, M, sdelta, a, want_P)


def recurrent_scan(abar, bbar, c, x):
    return _impl.recurrent_scan(abar, bbar, c, x)


def rk4_run(x0, M, sdelta, a, h, n_steps, record_steps, threshold):
    return _impl.rk4_run(x0, M, sdelta, a, h, n_steps, record_steps, threshold)
