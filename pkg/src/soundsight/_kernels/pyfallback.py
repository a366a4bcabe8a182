"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled module `_ck`; selected automatically when the
extension is unavailable (or forced via SOUNDSIGHT_KERNELS=py).
"""

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

# rows per chunk in the codebook scan; bounds the (chunk, v, d) temporary
_CHUNK_ELEMS = 1 << 22


def nearest_codebook(x, cb):
    """For each row of x, index of the nearest codebook row (squared L2).

    Ties resolve to the lowest index. Returns (indices int64, squared dists).
    """
    n, d = x.shape
    v = cb.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    step = max(1, _CHUNK_ELEMS // max(1, v * d))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        diff = x[lo:hi, None, :] - cb[None, :, :]
        d2 = np.einsum("nvd,nvd->nv", diff, diff)
        best = np.argmin(d2, axis=1)  # first occurrence = lowest index
        idx[lo:hi] = best
        dist[lo:hi] = d2[np.arange(hi - lo), best]
    return idx, dist


def gelu_fwd(x):
    """Exact-erf GELU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_bwd(x, gy):
    phi = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return gy * (0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * phi)


def softmax_last(x):
    """Row-stable softmax over the last axis of a 2-D array."""
    m = np.max(x, axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=1, keepdims=True)
