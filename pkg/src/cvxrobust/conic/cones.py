"""Cone specifications and symmetric-matrix vectorization.

svec order is row-major upper triangle with off-diagonal entries scaled by
sqrt(2); this makes svec an isometry: <svec(M), svec(N)> = trace(M N).
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import DomainError, NumericalError
from ..kernels import project_psd_svecs

SQRT2 = math.sqrt(2.0)


def svec_len(side):
    return side * (side + 1) // 2


@lru_cache(maxsize=None)
def triu_indices(side):
    return np.triu_indices(side)


@dataclass(frozen=True)
class ConeSpec:
    """Cone layout of the slack vector: equalities, then nonnegatives, then PSD blocks."""

    zero_dim: int = 0
    nonneg_dim: int = 0
    psd_blocks: tuple = ()

    def __post_init__(self):
        if self.zero_dim < 0 or self.nonneg_dim < 0 or any(s <= 0 for s in self.psd_blocks):
            raise DomainError("cone dimensions must be nonnegative, PSD sides positive")
        object.__setattr__(self, "psd_blocks", tuple(int(s) for s in self.psd_blocks))

    @property
    def psd_dim(self):
        return sum(svec_len(s) for s in self.psd_blocks)

    @property
    def total_dim(self):
        return self.zero_dim + self.nonneg_dim + self.psd_dim

    def psd_offsets(self):
        """Offsets of each PSD block within the full slack vector."""
        offs = []
        pos = self.zero_dim + self.nonneg_dim
        for s in self.psd_blocks:
            offs.append(pos)
            pos += svec_len(s)
        return np.asarray(offs, dtype=np.int64)


def svec(M):
    """Vectorize a symmetric matrix (symmetrized on entry)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"svec needs a square matrix, got shape {M.shape}")
    S = 0.5 * (M + M.T)
    iu, ju = triu_indices(M.shape[0])
    v = S[iu, ju].copy()
    v[iu != ju] *= SQRT2
    return v


def smat(v):
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DomainError("smat needs a 1-d vector")
    side = int(round((math.sqrt(8 * v.size + 1) - 1) / 2))
    if svec_len(side) != v.size:
        raise DomainError(f"length {v.size} is not a triangular number")
    iu, ju = triu_indices(side)
    M = np.zeros((side, side))
    M[iu, ju] = v
    off = iu != ju
    M[iu[off], ju[off]] = v[off] / SQRT2
    M[ju, iu] = M[iu, ju]
    return M


def project_psd(M):
    """Frobenius-nearest PSD matrix via eigenvalue clipping."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"project_psd needs a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DomainError("project_psd needs finite entries")
    S = 0.5 * (M + M.T)
    try:
        w, V = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed (max |entry| = {np.abs(S).max():.3e})"
        ) from exc
    w = np.clip(w, 0.0, None)
    return (V * w) @ V.T


def project_primal_cone(v, spec, out=None):
    """Project onto K = {0}^z x R+^l x PSD blocks (the slack cone)."""
    if out is None:
        out = np.array(v, dtype=float, copy=True)
    z, l = spec.zero_dim, spec.nonneg_dim
    out[:z] = 0.0
    np.clip(out[z : z + l], 0.0, None, out=out[z : z + l])
    if spec.psd_blocks:
        project_psd_svecs(
            out, np.asarray(spec.psd_blocks, dtype=np.int64), spec.psd_offsets(), out=out
        )
    return out


def project_dual_cone(v, spec, out=None):
    """Project onto K* = R^z x R+^l x PSD blocks (duals live here)."""
    if out is None:
        out = np.array(v, dtype=float, copy=True)
    z, l = spec.zero_dim, spec.nonneg_dim
    np.clip(out[z : z + l], 0.0, None, out=out[z : z + l])
    if spec.psd_blocks:
        project_psd_svecs(
            out, np.asarray(spec.psd_blocks, dtype=np.int64), spec.psd_offsets(), out=out
        )
    return out
