"""Hankel matrices, persistency of excitation and past/future data blocks.

Block rows are time-major and channel-minor: row ``t * r + c`` of a depth-q
Hankel matrix of an r-channel signal holds channel ``c`` at lag ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._linalg import numerical_rank

if TYPE_CHECKING:
    from .linsys import ComponentLayout, Trajectory


def _as_samples(signal) -> np.ndarray:
    s = np.asarray(signal, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.ndim != 2:
        raise ValueError(f"signal must be (N,) or (N, r), got shape {s.shape}")
    return s


def hankel_matrix(signal, depth: int) -> np.ndarray:
    """Depth-``depth`` Hankel matrix, ``r*depth`` rows by ``N - depth + 1`` columns."""
    s = _as_samples(signal)
    N, r = s.shape
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if depth > N:
        raise ValueError(f"depth {depth} exceeds signal length {N}")
    # windows: (N - depth + 1, r, depth) -> rows ordered (lag, channel)
    win = sliding_window_view(s, depth, axis=0)
    return np.ascontiguousarray(win.transpose(2, 1, 0).reshape(depth * r, N - depth + 1))


def head(Hb: np.ndarray, block_rows: int, block_size: int) -> np.ndarray:
    """Drop the last block row."""
    _check_blocks(Hb, block_rows, block_size)
    return Hb[: (block_rows - 1) * block_size]


def tail(Hb: np.ndarray, block_rows: int, block_size: int) -> np.ndarray:
    """Drop the first block row."""
    _check_blocks(Hb, block_rows, block_size)
    return Hb[block_size:]


def _check_blocks(Hb, block_rows, block_size):
    if block_rows < 2:
        raise ValueError(f"head/tail need at least 2 block rows, got {block_rows}")
    if Hb.shape[0] != block_rows * block_size:
        raise ValueError(
            f"matrix has {Hb.shape[0]} rows, expected {block_rows} x {block_size}"
        )


def is_persistently_exciting(u, order: int) -> tuple[bool, int, int]:
    """Whether ``H_order(u)`` has full row rank; returns (flag, rank, needed)."""
    s = _as_samples(u)
    needed = s.shape[1] * order
    if order > s.shape[0]:
        return False, 0, needed
    H = hankel_matrix(s, order)
    rank = numerical_rank(H)
    return rank == needed, rank, needed


@dataclass(frozen=True, eq=False)
class HankelBlocks:
    """Past/future partition of depth-2L data Hankels and the shift matrices.

    ``H`` stacks the first 2L-1 block rows of the input and output Hankels and
    ``T`` the last 2L-1, so consecutive windows of one trajectory satisfy
    ``H g(k+1) = T g(k)``.
    """

    Up: np.ndarray
    Uf: np.ndarray
    Yp: np.ndarray
    Yf: np.ndarray
    H: np.ndarray
    T: np.ndarray
    L: int
    layout: "ComponentLayout"

    @property
    def d(self) -> int:
        return self.Up.shape[1]

    @property
    def m(self) -> int:
        return self.layout.m

    @property
    def p(self) -> int:
        return self.layout.p

    @property
    def data(self) -> np.ndarray:
        """``[Up; Uf; Yp; Yf]``."""
        return np.vstack([self.Up, self.Uf, self.Yp, self.Yf])


def build_blocks(traj: "Trajectory", L: int, layout: "ComponentLayout") -> HankelBlocks:
    if L < 1:
        raise ValueError(f"window length L must be >= 1, got {L}")
    if traj.N < 2 * L:
        raise ValueError(f"need N >= 2L = {2 * L} samples, got N = {traj.N}")
    if traj.m != layout.m or traj.p != layout.p:
        raise ValueError(
            f"trajectory has m={traj.m}, p={traj.p}; layout expects "
            f"m={layout.m}, p={layout.p}"
        )
    m, p = layout.m, layout.p
    Hu = hankel_matrix(traj.u, 2 * L)
    Hy = hankel_matrix(traj.y, 2 * L)
    H = np.vstack([head(Hu, 2 * L, m), head(Hy, 2 * L, p)])
    T = np.vstack([tail(Hu, 2 * L, m), tail(Hy, 2 * L, p)])
    blocks = HankelBlocks(
        Up=Hu[: L * m],
        Uf=Hu[L * m :],
        Yp=Hy[: L * p],
        Yf=Hy[L * p :],
        H=H,
        T=T,
        L=L,
        layout=layout,
    )
    for arr in (blocks.Up, blocks.Uf, blocks.Yp, blocks.Yf, blocks.H, blocks.T):
        arr.setflags(write=False)
    if blocks.d > 1 and not np.array_equal(H[:, 1:], T[:, :-1]):
        raise ValueError("shift identity H e_{k+1} = T e_k fails on the raw data")
    return blocks


def selector(blocks: HankelBlocks, j: int) -> np.ndarray:
    """Future rows of component ``j``: an ``L x d`` matrix."""
    lay = blocks.layout
    lay.check_component(j)
    if j <= lay.m:
        return blocks.Uf[j - 1 :: lay.m]
    return blocks.Yf[j - lay.m - 1 :: lay.p]


def protected_rows(blocks: HankelBlocks) -> np.ndarray:
    """Future rows of all protected sensors (``0 x d`` when none)."""
    lay = blocks.layout
    rows = [
        blocks.Yf[s - 1 :: lay.p] for s in lay.protected
    ]
    if not rows:
        return np.zeros((0, blocks.d))
    # interleave back into time-major order
    stacked = np.stack(rows, axis=1)  # (L, nu, d)
    return stacked.reshape(-1, blocks.d)
