"""Kernel backend selection.

SOUNDSIGHT_KERNELS=auto (default) prefers the compiled extension and falls back
to numpy; =ext requires the extension; =py forces the fallback. Public entry
points normalize dtype/contiguity so both backends see identical inputs.
"""

import os

import numpy as np

_choice = os.environ.get("SOUNDSIGHT_KERNELS", "auto")
if _choice not in ("auto", "ext", "py"):
    raise ValueError(f"SOUNDSIGHT_KERNELS must be auto|ext|py, got {_choice!r}")

_impl = None
if _choice in ("auto", "ext"):
    try:
        from . import _ck as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "ext":
            raise
if _impl is None:
    from . import pyfallback as _impl

BACKEND = "ext" if _impl.__name__.endswith("_ck") else "py"


def _c64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def nearest_codebook(x, cb):
    """Nearest codebook row per input row; ties to the lowest index.

    x: (n, d), cb: (v, d). Returns (idx (n,) int64, squared distance (n,)).
    """
    x = _c64(x)
    cb = _c64(cb)
    if x.ndim != 2 or cb.ndim != 2 or x.shape[1] != cb.shape[1]:
        raise ValueError(f"nearest_codebook: incompatible shapes {x.shape} vs {cb.shape}")
    if cb.shape[0] == 0:
        raise ValueError("nearest_codebook: empty codebook")
    return _impl.nearest_codebook(x, cb)


def gelu_fwd(x):
    x = _c64(x)
    return _impl.gelu_fwd(x.ravel()).reshape(x.shape)


def gelu_bwd(x, gy):
    x = _c64(x)
    gy = _c64(gy)
    if x.shape != gy.shape:
        raise ValueError(f"gelu_bwd: shape mismatch {x.shape} vs {gy.shape}")
    return _impl.gelu_bwd(x.ravel(), gy.ravel()).reshape(x.shape)


def softmax_last(x):
    """Numerically stable softmax over the last axis (any leading shape)."""
    x = _c64(x)
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    return _impl.softmax_last(flat).reshape(lead + (x.shape[-1],))
