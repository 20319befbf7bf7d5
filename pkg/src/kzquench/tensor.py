"""Dense linear-algebra kernels shared by the MPS and exact engines.

Tensors are plain complex ``numpy`` arrays in C (row-major) order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class TruncationReport:
    kept_rank: int
    discarded_weight: float
    largest_discarded: float


def _check_finite(M, name="matrix"):
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")


def _svd(M):
    try:
        return scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesdd",
                                check_finite=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails on ill-conditioned input
        return scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesvd",
                                check_finite=False)


def svd_truncate(M, max_rank, sv_cutoff=0.0):
    """Truncated singular value decomposition ``M ~ U @ diag(S) @ V``.

    Singular values are kept while ``s_k > sv_cutoff * s_0`` (relative
    cutoff) and at most ``max_rank`` of them survive.

    Parameters
    ----------
    M : ndarray, shape (m, n)
    max_rank : int
        Upper bound on the kept rank.
    sv_cutoff : float
        Relative singular-value threshold.

    Returns
    -------
    U : ndarray, shape (m, k)
    S : ndarray, shape (k,)
        Descending, non-negative.
    V : ndarray, shape (k, n)
        Rows are the right singular vectors (already conjugated, i.e. ``V``
        plays the role of ``V^dagger``).
    report : TruncationReport
    """
    M = np.asarray(M)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    if sv_cutoff < 0:
        raise ValueError("sv_cutoff must be >= 0")
    _check_finite(M)

    U, S, V = _svd(M)
    if S.size == 0 or S[0] == 0.0:
        # zero matrix: keep a single (null) direction
        return U[:, :1], np.zeros(1), V[:1, :], TruncationReport(1, 0.0, 0.0)

    keep = int(np.count_nonzero(S > sv_cutoff * S[0]))
    keep = max(1, min(keep, max_rank))
    tail = S[keep:]
    report = TruncationReport(
        kept_rank=keep,
        discarded_weight=float(np.sum(tail**2)),
        largest_discarded=float(tail[0]) if tail.size else 0.0,
    )
    return U[:, :keep], S[:keep], V[:keep, :], report


def eigh(H, tol=HERMITIAN_TOL):
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    _check_finite(H)
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if np.max(np.abs(H - H.conj().T), initial=0.0) > tol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    return scipy.linalg.eigh(H, check_finite=False)


def exp_hermitian(H, scale):
    """Return ``exp(scale * H)`` for Hermitian ``H`` via its spectrum."""
    w, v = eigh(H)
    return (v * np.exp(scale * w)) @ v.conj().T
