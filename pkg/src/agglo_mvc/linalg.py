"""Dense matrix helpers: distances, kNN sparsification and the k smallest eigenpairs."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import pdist, squareform


class EigenSolverError(RuntimeError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray   # (k,) ascending
    vectors: np.ndarray  # (n, k) orthonormal columns


def pairwise_distances(X):
    """Euclidean (not squared) distance between every pair of rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    if X.shape[0] < 2:
        return np.zeros((X.shape[0], X.shape[0]))
    return squareform(pdist(X, metric="euclidean"))


def knn_mask(D, r):
    """Boolean mask of the ``r`` nearest off-diagonal entries of each row.

    Ties are resolved towards the lowest column index.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n:
        raise ValueError(f"distance matrix must be square, got shape {D.shape}")
    if not 1 <= r <= n - 1:
        raise ValueError(f"neighbour count r={r} outside [1, {n - 1}]")
    work = D.copy()
    np.fill_diagonal(work, np.inf)
    kth = np.partition(work, r - 1, axis=1)[:, r - 1:r]
    mask = work < kth
    # fill the remaining slots with the lowest-index entries equal to the r-th value
    ties = work == kth
    need = r - mask.sum(axis=1, keepdims=True)
    mask |= ties & (np.cumsum(ties, axis=1) <= need)
    return mask


def knn_sparsify(D, r):
    """Keep each row's ``r`` smallest off-diagonal distances and zero the rest.

    The result is generally not symmetric.
    """
    D = np.asarray(D, dtype=float)
    return np.where(knn_mask(D, r), D, 0.0)


def sym_eigs_smallest(M, k, sym_tol=1e-10):
    """The ``k`` algebraically smallest eigenpairs of a symmetric matrix.

    Dense LAPACK (``syevr``) restricted to the lowest index range; returns an
    :class:`EigenResult` with ascending values.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.ndim != 2 or M.shape[1] != n:
        raise ValueError(f"matrix must be square, got shape {M.shape}")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix contains non-finite values")
    asym = np.max(np.abs(M - M.T)) if n else 0.0
    if asym > sym_tol:
        raise ValueError(f"matrix is not symmetric (max |M - M^T| = {asym:.3e})")
    M = 0.5 * (M + M.T)
    try:
        values, vectors = scipy.linalg.eigh(M, subset_by_index=[0, k - 1], driver="evr")
    except np.linalg.LinAlgError as exc:
        # LAPACK reports the failing index in the message; surface it as the count
        raise EigenSolverError(f"eigensolver did not converge: {exc}", iterations=_lapack_info(exc)) from exc
    return EigenResult(values=values, vectors=vectors)


def _lapack_info(exc):
    digits = "".join(ch if ch.isdigit() else " " for ch in str(exc)).split()
    return int(digits[0]) if digits else None
