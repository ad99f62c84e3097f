"""Linear subspaces of a coefficient space with tolerance-governed algebra.

Every subspace carries an orthonormal basis.  Rank decisions use the shared
threshold from :mod:`secindex._linalg`; operators that restrict a matrix to a
subspace judge the restriction against the norm of the full operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import (
    get_rank_rtol,
    null_basis,
    numerical_rank,
    opnorm,
    range_basis,
    rank_threshold,
    svd,
)

# basis-containment slack for `contains`
CONTAIN_ATOL = 1e-8
# margin on the projected-kernel cut-off; measured round-off reaches ~2x the
# bare threshold on small random operators, genuine directions sit >1e7x above
PROJ_MARGIN = 10.0


@dataclass(frozen=True, eq=False)
class Subspace:
    basis: np.ndarray
    tol: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2:
            raise ValueError(f"basis must be 2-D, got shape {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def ambient(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def __repr__(self) -> str:
        return f"Subspace(dim={self.dim}, ambient={self.ambient})"

    @classmethod
    def full(cls, d: int) -> "Subspace":
        return cls(np.eye(d))

    @classmethod
    def zero(cls, d: int) -> "Subspace":
        return cls(np.zeros((d, 0)))

    @classmethod
    def span(cls, M: np.ndarray, ref: float | None = None) -> "Subspace":
        M = np.asarray(M, dtype=float)
        return cls(range_basis(M, ref), _tol(M, ref))

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.basis @ (self.basis.T @ x)


def _tol(M: np.ndarray, ref: float | None = None) -> float:
    if M.size == 0:
        return 0.0
    return rank_threshold(M.shape, opnorm(M) if ref is None else ref)


def _same_ambient(V: Subspace, W: Subspace) -> None:
    if V.ambient != W.ambient:
        raise ValueError(f"ambient mismatch: {V.ambient} vs {W.ambient}")


def kernel(M: np.ndarray) -> Subspace:
    """Numerical null space; the kernel of a ``0 x d`` matrix is all of R^d."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("kernel expects a 2-D matrix")
    return Subspace(null_basis(M), _tol(M))


def intersect(V: Subspace, W: Subspace) -> Subspace:
    _same_ambient(V, W)
    if V.dim == 0 or W.dim == 0:
        return Subspace.zero(V.ambient)
    # V a = W b  <=>  [V, -W] (a, b) = 0
    K = null_basis(np.hstack([V.basis, -W.basis]), ref=1.0)
    return Subspace.span(V.basis @ K[: V.dim], ref=1.0)


def sum(V: Subspace, W: Subspace) -> Subspace:  # noqa: A001 - V + W
    _same_ambient(V, W)
    return Subspace.span(np.hstack([V.basis, W.basis]), ref=1.0)


def _check_pair(H: np.ndarray, T: np.ndarray, d: int) -> None:
    if H.shape != T.shape:
        raise ValueError(f"H {H.shape} and T {T.shape} must have equal shapes")
    if H.shape[1] != d:
        raise ValueError(f"operators have {H.shape[1]} columns, ambient is {d}")


def _relational_image(V: Subspace, fixed: np.ndarray, moving: np.ndarray) -> Subspace:
    """``{x : moving x in fixed V}``.

    Computed as the kernel of ``moving`` followed by the projector onto the
    complement of ``range(fixed V)``; both rank decisions are scaled by the
    larger operator norm. The basis of ``range(fixed V)`` is only accurate to
    ``eps * cond(fixed V)``, so the kernel cut-off grows by that condition
    number and :data:`PROJ_MARGIN` unless a global tolerance is set.
    """
    ref = max(opnorm(fixed), opnorm(moving), 1e-300)
    cond = 1.0
    Q = np.zeros((fixed.shape[0], 0))
    if V.dim:
        u, s, _ = svd(fixed @ V.basis, full_matrices=False)
        r = int(np.count_nonzero(s > rank_threshold((fixed.shape[0], V.dim), ref)))
        Q = u[:, :r]
        if r and get_rank_rtol() is None:
            cond = PROJ_MARGIN * float(s[0] / s[r - 1])
    M = moving - Q @ (Q.T @ moving)
    tol = rank_threshold(M.shape, ref * cond)
    return Subspace(null_basis(M, ref=ref * cond), tol)


def pre_image(V: Subspace, H: np.ndarray, T: np.ndarray) -> Subspace:
    """``Pre(V) = {g : exists v in V with H v = T g}``."""
    H = np.asarray(H, dtype=float)
    T = np.asarray(T, dtype=float)
    _check_pair(H, T, V.ambient)
    return _relational_image(V, H, T)


def post_image(V: Subspace, H: np.ndarray, T: np.ndarray) -> Subspace:
    """``Post(V) = {v : exists g in V with H v = T g}``."""
    H = np.asarray(H, dtype=float)
    T = np.asarray(T, dtype=float)
    _check_pair(H, T, V.ambient)
    return _relational_image(V, T, H)


def contains(V: Subspace, W: Subspace, atol: float = CONTAIN_ATOL) -> bool:
    """``W`` is a subspace of ``V`` up to ``atol`` on the basis residual."""
    _same_ambient(V, W)
    if W.dim == 0:
        return True
    if V.dim == 0:
        return False
    resid = W.basis - V.project(W.basis)
    return float(np.linalg.norm(resid, 2)) <= atol


def mapped_dim(L: np.ndarray, V: Subspace) -> int:
    """Dimension of ``L V``."""
    L = np.asarray(L, dtype=float)
    if L.shape[1] != V.ambient:
        raise ValueError(f"L has {L.shape[1]} columns, ambient is {V.ambient}")
    if V.dim == 0 or L.shape[0] == 0:
        return 0
    return numerical_rank(L @ V.basis, ref=opnorm(L))


def in_kernel(L: np.ndarray, V: Subspace) -> bool:
    return mapped_dim(L, V) == 0


def equal(V: Subspace, W: Subspace, atol: float = CONTAIN_ATOL) -> bool:
    return V.dim == W.dim and contains(V, W, atol)
