"""Rank tolerance and SVD primitives shared by every module.

All numerical rank decisions in the package go through :func:`rank_threshold`.
The default threshold is ``max(rows, cols) * eps * ref`` where ``ref`` is the
largest singular value of the matrix (or a caller-supplied operator norm).
The relative factor can be overridden globally with :func:`set_rank_rtol` or
the ``SECINDEX_RTOL`` environment variable.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.linalg

EPS = float(np.finfo(float).eps)

_rtol: float | None = None
if os.environ.get("SECINDEX_RTOL"):
    _rtol = float(os.environ["SECINDEX_RTOL"])


def set_rank_rtol(rtol: float | None) -> None:
    """Override the relative rank tolerance (``None`` restores the default)."""
    global _rtol
    if rtol is not None and not rtol > 0:
        raise ValueError(f"rank tolerance must be positive, got {rtol}")
    _rtol = rtol


def get_rank_rtol() -> float | None:
    return _rtol


def svd(M: np.ndarray, full_matrices: bool = True, compute_uv: bool = True):
    """``numpy.linalg.svd`` with a ``gesvd`` retry.

    The divide-and-conquer driver occasionally fails to converge on
    matrices with clustered singular values (rows of an orthonormal basis
    are a typical case); the QR-iteration driver handles those.
    """
    try:
        return np.linalg.svd(M, full_matrices=full_matrices, compute_uv=compute_uv)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(
            M,
            full_matrices=full_matrices,
            compute_uv=compute_uv,
            lapack_driver="gesvd",
            check_finite=False,
        )


def rank_threshold(shape: tuple[int, ...], ref: float, rtol: float | None = None) -> float:
    """Absolute cut-off; ``rtol`` overrides the default relative factor for one call."""
    if rtol is None:
        rtol = _rtol if _rtol is not None else max(shape) * EPS
    return rtol * ref


def _count(s: np.ndarray, shape, ref: float | None, rtol: float | None = None) -> int:
    if s.size == 0:
        return 0
    scale = s[0] if ref is None else ref
    if scale <= 0:
        return 0
    return int(np.count_nonzero(s > rank_threshold(shape, scale, rtol)))


def numerical_rank(M: np.ndarray, ref: float | None = None, rtol: float | None = None) -> int:
    """Rank of ``M``; ``ref`` replaces sigma_max as the threshold scale."""
    M = np.asarray(M)
    if M.size == 0:
        return 0
    s = svd(M, compute_uv=False)
    return _count(s, M.shape, ref, rtol)


def null_basis(M: np.ndarray, ref: float | None = None, rtol: float | None = None) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical null space of ``M``.

    Pass ``ref`` when ``M`` is a restriction of a larger operator whose norm
    sets the scale: a restriction that is numerically zero everywhere must
    not be judged against its own (tiny) largest singular value.
    """
    M = np.asarray(M)
    rows, cols = M.shape
    if rows == 0 or cols == 0:
        return np.eye(cols, dtype=M.dtype if M.dtype.kind == "c" else float)
    _, s, vh = svd(M, full_matrices=True)
    rank = _count(s, M.shape, ref, rtol)
    return vh[rank:].conj().T


def range_basis(M: np.ndarray, ref: float | None = None, rtol: float | None = None) -> np.ndarray:
    """Orthonormal basis of the column space of ``M``."""
    M = np.asarray(M)
    rows, cols = M.shape
    if rows == 0 or cols == 0:
        return np.zeros((rows, 0))
    u, s, _ = svd(M, full_matrices=False)
    rank = _count(s, M.shape, ref, rtol)
    return u[:, :rank]


def opnorm(M: np.ndarray) -> float:
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(svd(M, compute_uv=False)[0])


def pinv(M: np.ndarray, ref: float | None = None, rtol: float | None = None) -> np.ndarray:
    """Moore-Penrose inverse with the package rank threshold."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros(M.shape[::-1])
    u, s, vh = svd(M, full_matrices=False)
    k = _count(s, M.shape, ref, rtol)
    return (vh[:k].T / s[:k]) @ u[:, :k].T
