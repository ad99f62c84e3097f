"""Model-based security index by brute-force search over component subsets.

Feasibility of a subset is decided on the transfer matrix from the attack to
the output: a perfectly undetectable attack supported on ``Gamma`` that uses
component ``i`` exists exactly when column ``i`` of ``G_Gamma(z)`` lies in the
rational span of the other columns, i.e. when dropping it leaves the normal
rank unchanged.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from ._linalg import null_basis, numerical_rank, opnorm, pinv, range_basis, svd
from .linsys import AttackSignal, ComponentLayout, LtiSystem, attack_structure

INF = math.inf


@dataclass
class IndexResult:
    """Outcome of an index computation for one component.

    ``value`` is an int, ``math.inf`` when no subset works, or ``None`` when
    the search stopped at ``cap`` without a verdict (``capped`` is then set).
    """

    component: int
    value: int | float | None
    witness_set: tuple[int, ...] | None = None
    witness_attack: AttackSignal | None = None
    elapsed: float = 0.0
    capped: bool = False
    cap: int | None = None
    evaluations: int = 0

    @property
    def is_finite(self) -> bool:
        return self.value is not None and self.value != INF

    def label(self) -> str:
        if self.capped:
            return f">{self.cap}"
        if self.value == INF:
            return "inf"
        return str(int(self.value))

    def lower_bound(self) -> float:
        """Smallest value consistent with the result (``cap + 1`` if capped)."""
        if self.capped:
            return self.cap + 1
        return self.value


def candidate_sets(components: Iterable[int], i: int, q: int) -> Iterator[tuple[int, ...]]:
    """Size-``q`` subsets containing ``i``, in lexicographic order."""
    others = [j for j in sorted(components) if j != i]
    for combo in itertools.combinations(others, q - 1):
        yield tuple(sorted(combo + (i,)))


def _circle_points(A: np.ndarray, count: int, radius: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    eig = np.linalg.eigvals(A) if A.size else np.zeros(0)
    pts = []
    for _ in range(100 * count):
        z = radius * np.exp(2j * np.pi * rng.random())
        if eig.size == 0 or np.min(np.abs(eig - z)) > 1e-6 * max(1.0, radius):
            pts.append(z)
            if len(pts) == count:
                return np.array(pts)
    raise RuntimeError("could not draw evaluation points away from the spectrum")


class TransferMatrix:
    """``G(z) = C (zI - A)^{-1} B_a + D_a`` sampled at fixed points.

    Attack columns are selected per subset, so one instance serves every
    feasibility check on the same plant.
    """

    def __init__(
        self,
        sys: LtiSystem,
        layout: ComponentLayout,
        n_points: int = 7,
        radius: float = 1.05,
        seed: int = 0,
    ):
        self.sys = sys
        self.layout = layout
        st = attack_structure(sys, layout)
        self.points = _circle_points(sys.A, n_points, radius, seed)
        n = sys.n
        self.G = np.stack(
            [
                sys.C @ np.linalg.solve(z * np.eye(n) - sys.A, st.B_a) + st.D_a
                for z in self.points
            ]
        )

    def columns(self, gamma: Iterable[int]) -> list[int]:
        return [self.layout.attack_column(j) for j in sorted(gamma)]

    def normal_rank(self, gamma: Iterable[int]) -> int:
        cols = self.columns(gamma)
        if not cols:
            return 0
        return max(numerical_rank(Gz[:, cols]) for Gz in self.G)

    def feasible(self, gamma: Iterable[int], i: int) -> bool:
        gamma = set(gamma)
        if i not in gamma:
            raise ValueError(f"component {i} is not in the subset {sorted(gamma)}")
        return self.normal_rank(gamma) == self.normal_rank(gamma - {i})


def normal_rank(sys: LtiSystem, layout: ComponentLayout, gamma: Iterable[int], **kw) -> int:
    gamma = list(gamma)
    for j in gamma:
        layout.check_component(j)
    return TransferMatrix(sys, layout, **kw).normal_rank(gamma)


def model_feasible(
    sys: LtiSystem, layout: ComponentLayout, gamma: Iterable[int], i: int, **kw
) -> bool:
    gamma = list(gamma)
    for j in gamma:
        layout.check_component(j)
    return TransferMatrix(sys, layout, **kw).feasible(gamma, i)


def delta(
    sys: LtiSystem,
    layout: ComponentLayout,
    i: int,
    max_card: int | None = None,
    with_witness: bool = True,
    horizon: int | None = None,
    tf: TransferMatrix | None = None,
) -> IndexResult:
    """Smallest feasible subset containing ``i``, searched level by level."""
    layout.check_component(i)
    t0 = time.perf_counter()
    tf = tf or TransferMatrix(sys, layout)
    comps = layout.components
    cap = len(comps) if max_card is None else min(max_card, len(comps))
    evals = 0
    for q in range(1, cap + 1):
        for gamma in candidate_sets(comps, i, q):
            evals += 1
            if tf.feasible(gamma, i):
                attack = None
                if with_witness:
                    attack = synthesize_model_attack(sys, layout, gamma, i, horizon)
                return IndexResult(
                    i, q, gamma, attack, time.perf_counter() - t0, evaluations=evals
                )
    elapsed = time.perf_counter() - t0
    if cap < len(comps):
        return IndexResult(i, None, None, None, elapsed, True, cap, evals)
    return IndexResult(i, INF, None, None, elapsed, evaluations=evals)


def output_nulling_subspace(A, B, C, D) -> np.ndarray:
    """Largest subspace from which some input keeps ``y = Cx + Du`` at zero forever."""
    n = A.shape[0]
    ref = max(opnorm(np.block([[A, B], [C, D]])), 1e-300)
    V = np.eye(n)
    while True:
        Vperp = null_basis(V.T) if V.shape[1] else np.eye(n)
        M = np.vstack([np.hstack([Vperp.T @ A, Vperp.T @ B]), np.hstack([C, D])])
        K = null_basis(M, ref=ref)
        Vn = range_basis(K[:n], ref=1.0)
        if Vn.shape[1] == V.shape[1]:
            return Vn
        V = Vn


def synthesize_model_attack(
    sys: LtiSystem,
    layout: ComponentLayout,
    gamma: Iterable[int],
    i: int,
    horizon: int | None = None,
) -> AttackSignal:
    """Attack supported on ``gamma`` with ``i`` active and zero output from ``x0 = 0``.

    A short prefix is taken from the kernel of the stacked output map with a
    terminal condition inside the output-nulling subspace; beyond it the
    attack continues with the minimum-norm input that keeps the state there.
    """
    gamma = sorted(set(gamma))
    if not TransferMatrix(sys, layout).feasible(gamma, i):
        raise ValueError(f"no perfectly undetectable attack on {gamma} uses component {i}")
    st = attack_structure(sys, layout)
    cols = [layout.attack_column(j) for j in gamma]
    A, C = sys.A, sys.C
    Bg, Dg = st.B_a[:, cols], st.D_a[:, cols]
    n, q = sys.n, len(gamma)
    Vstar = output_nulling_subspace(A, Bg, C, Dg)
    Nperp = null_basis(Vstar.T) if Vstar.shape[1] else np.eye(n)

    K0 = n + q + 1
    K = K0 if horizon is None else max(horizon, 1)
    # rows: outputs y(0..K0-1) then the terminal constraint on x(K0)
    M = np.zeros((K0 * sys.p + Nperp.shape[1], K0 * q))
    Apow = [np.eye(n)]
    for _ in range(K0):
        Apow.append(A @ Apow[-1])
    for k in range(K0):
        r0 = k * sys.p
        M[r0 : r0 + sys.p, k * q : (k + 1) * q] = Dg
        for j in range(k):
            M[r0 : r0 + sys.p, j * q : (j + 1) * q] = C @ Apow[k - 1 - j] @ Bg
    for j in range(K0):
        M[K0 * sys.p :, j * q : (j + 1) * q] = Nperp.T @ Apow[K0 - 1 - j] @ Bg
    Kmat = null_basis(M, ref=max(opnorm(M), 1e-300))
    ii = gamma.index(i)
    Ei = Kmat[ii::q]
    if Kmat.shape[1] == 0:
        raise RuntimeError("attack kernel is empty despite the normal-rank test")
    _, s, vh = svd(Ei)
    if s.size == 0 or s[0] < 1e-9:
        raise RuntimeError(f"component {i} cannot be activated within {K0} steps")
    alpha = (Kmat @ vh[0]).reshape(K0, q)

    a_g = np.zeros((max(K, K0), q))
    a_g[:K0] = alpha
    x = np.zeros(n)
    for k in range(K0):
        x = A @ x + Bg @ alpha[k]
    if K > K0:
        lhs = np.vstack([Dg, Nperp.T @ Bg])
        lhs_pinv = pinv(lhs)
        for k in range(K0, K):
            a = -lhs_pinv @ np.concatenate([C @ x, Nperp.T @ A @ x])
            a_g[k] = a
            x = A @ x + Bg @ a
    a_g = a_g[:K]
    if np.max(np.abs(a_g[:, ii])) <= 1e-9 * np.max(np.abs(a_g)):
        raise ValueError(f"horizon {K} too short for component {i} to act")
    a_g /= np.max(np.abs(a_g))
    full = np.zeros((K, sys.m + sys.p))
    full[:, cols] = a_g
    return AttackSignal(full, layout)
