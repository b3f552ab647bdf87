"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The fallback is selected automatically when numba is unavailable, or
explicitly by setting the environment variable ``CVXROBUST_DISABLE_NUMBA=1``
before import.  Both paths compute identical results; ``benchmarks/bench_kernels.py``
compares them.

Symmetric vectorization order used throughout: row-major upper triangle,
(0,0), (0,1), ..., (0,s-1), (1,1), ..., (s-1,s-1), off-diagonal entries
scaled by sqrt(2) so that <svec(M), svec(N)> = trace(MN).
"""

import math
import os

import numpy as np

_SQRT2 = math.sqrt(2.0)

_DISABLED = os.environ.get("CVXROBUST_DISABLE_NUMBA", "0") not in ("", "0")

if not _DISABLED:
    try:
        from numba import njit, prange

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def _project_psd_svecs_np(vec, sides, offsets, out):
    # group blocks of equal side so eigh runs batched
    sides = np.asarray(sides)
    offsets = np.asarray(offsets)
    for s in np.unique(sides):
        idx = np.nonzero(sides == s)[0]
        iu, ju = np.triu_indices(s)
        blk = np.empty((len(idx), s, s))
        for t, b in enumerate(idx):
            v = vec[offsets[b] : offsets[b] + s * (s + 1) // 2]
            m = blk[t]
            m[iu, ju] = v
            off = iu != ju
            m[iu[off], ju[off]] = v[off] / _SQRT2
            m[ju, iu] = m[iu, ju]
        w, V = np.linalg.eigh(blk)
        np.clip(w, 0.0, None, out=w)
        proj = (V * w[:, None, :]) @ np.swapaxes(V, -1, -2)
        for t, b in enumerate(idx):
            m = proj[t]
            packed = m[iu, ju].copy()
            off = iu != ju
            packed[off] *= _SQRT2
            out[offsets[b] : offsets[b] + s * (s + 1) // 2] = packed
    return out


if NUMBA_ENABLED:

    @njit(cache=True, parallel=True)
    def _project_psd_svecs_nb(vec, sides, offsets, out):  # pragma: no cover - compiled
        nblk = sides.shape[0]
        for b in prange(nblk):
            s = sides[b]
            off = offsets[b]
            M = np.empty((s, s))
            k = off
            for i in range(s):
                M[i, i] = vec[k]
                k += 1
                for j in range(i + 1, s):
                    val = vec[k] / _SQRT2
                    M[i, j] = val
                    M[j, i] = val
                    k += 1
            w, V = np.linalg.eigh(M)
            for t in range(s):
                if w[t] < 0.0:
                    w[t] = 0.0
            P = (V * w) @ V.T
            k = off
            for i in range(s):
                out[k] = P[i, i]
                k += 1
                for j in range(i + 1, s):
                    out[k] = P[i, j] * _SQRT2
                    k += 1
        return out


def project_psd_svecs(vec, sides, offsets, out=None):
    """Project each svec-packed symmetric block onto the PSD cone.

    vec: 1-d array holding concatenated svec blocks; sides/offsets: int arrays
    giving each block's matrix side and start offset within vec.
    """
    if out is None:
        out = np.array(vec, dtype=np.float64, copy=True)
    sides = np.ascontiguousarray(sides, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if sides.size == 0:
        return out
    if NUMBA_ENABLED:
        return _project_psd_svecs_nb(
            np.ascontiguousarray(vec, dtype=np.float64), sides, offsets, out
        )
    return _project_psd_svecs_np(np.asarray(vec, dtype=np.float64), sides, offsets, out)
