"""Data-driven security index from Hankel data.

For a candidate subset Gamma the coefficient vectors g are restricted by
the zero constraints on protected sensors and on channels outside Gamma
(``V_0``), the largest shift-invariant part of that set is found by
``V_{t+1} = V_0 ∩ Pre(V_t)``, and the part reachable from a zero past window
by ``R_{t+1} = V_inf ∩ (R_t + Post(R_t))``.  Gamma supports an undetectable
attack using component i exactly when ``L_i R_inf != 0``.

Internally the iterations run in window coordinates: the channel-normalised
data matrix ``[Up; Uf; Yp; Yf]`` is factored as ``U S V^T`` with rank r and
``c = S V^T g`` replaces g.  Every subspace in the recursions contains the
null space of the data matrix, so nothing is lost, and the shift operators
become rows of an orthonormal basis, which keeps rank decisions well scaled.
Public functions lift results back to the d-dimensional coefficient space.
"""

from __future__ import annotations

import threading
import time
import weakref
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ._linalg import EPS, get_rank_rtol, null_basis, numerical_rank, opnorm, pinv, range_basis, rank_threshold, svd
from .hankel import HankelBlocks
from .linsys import AttackSignal, ComponentLayout
from .model_index import INF, IndexResult, candidate_sets
from .subspace import Subspace


@dataclass(frozen=True)
class GammaSets:
    """A component subset split into actuator and unprotected-sensor parts."""

    gamma: frozenset[int]
    gamma_u: tuple[int, ...]
    gamma_u_bar: tuple[int, ...]
    gamma_y: tuple[int, ...]
    gamma_y_bar: tuple[int, ...]

    @classmethod
    def from_components(cls, gamma: Iterable[int], layout: ComponentLayout) -> "GammaSets":
        g = frozenset(layout.check_component(int(j)) for j in gamma)
        acts = range(1, layout.m + 1)
        sens = layout.unprotected
        return cls(
            gamma=g,
            gamma_u=tuple(j for j in acts if j in g),
            gamma_u_bar=tuple(j for j in acts if j not in g),
            gamma_y=tuple(l for l in sens if layout.m + l in g),
            gamma_y_bar=tuple(l for l in sens if layout.m + l not in g),
        )


@dataclass
class FixedPointTrace:
    """Dimensions along the V and R recursions (coefficient-space dims)."""

    v_dims: list[int] = field(default_factory=list)
    r_dims: list[int] = field(default_factory=list)

    @property
    def v_steps(self) -> int:
        return max(len(self.v_dims) - 1, 0)

    @property
    def r_steps(self) -> int:
        return max(len(self.r_dims) - 1, 0)


@dataclass(eq=False)
class WitnessSequence:
    """Coefficient sequence ``g(0..K)`` and the attack it encodes."""

    g: np.ndarray
    gamma: GammaSets
    component: int
    u_tilde: np.ndarray
    y_tilde: np.ndarray
    layout: ComponentLayout
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.g.shape[0] - 1

    def attack(self) -> AttackSignal:
        """``col(u~, -y~)`` restricted to the channels of Gamma."""
        lay = self.layout
        ua = np.zeros_like(self.u_tilde)
        for j in self.gamma.gamma_u:
            ua[:, j - 1] = self.u_tilde[:, j - 1]
        ya = np.zeros((self.y_tilde.shape[0], lay.p - lay.nu))
        for l in self.gamma.gamma_y:
            ya[:, l - 1] = -self.y_tilde[:, l - 1]
        return AttackSignal.from_parts(ua, ya, lay)


def _as_gamma(gamma, layout: ComponentLayout) -> GammaSets:
    if isinstance(gamma, GammaSets):
        return gamma
    return GammaSets.from_components(gamma, layout)


class DataIndex:
    """Per-dataset engine: compressed operators plus a verdict cache.

    ``s(Gamma) = dim L_i R_inf(Gamma)`` values are cached per subset; the
    subspaces themselves are kept in a small LRU for witness synthesis.
    """

    def __init__(self, blocks: HankelBlocks, cache: bool = True, lru_size: int = 32):
        self.blocks = blocks
        self.layout = lay = blocks.layout
        m, p, L = lay.m, lay.p, blocks.L
        self.m, self.p, self.L = m, p, L
        W = blocks.data
        self.d = W.shape[1]

        u_rms = np.sqrt(np.mean(blocks.Up.reshape(L, m, -1) ** 2, axis=(0, 2)))
        y_rms = np.sqrt(np.mean(blocks.Yp.reshape(L, p, -1) ** 2, axis=(0, 2)))
        u_rms[u_rms == 0] = 1.0
        y_rms[y_rms == 0] = 1.0
        self.row_scale = np.concatenate([np.tile(u_rms, 2 * L), np.tile(y_rms, 2 * L)])
        Ws = W / self.row_scale[:, None]
        U, s, Vt = svd(Ws, full_matrices=True)
        r = int(np.count_nonzero(s > rank_threshold(Ws.shape, s[0]))) if s.size else 0
        self.r = r
        self.sigma = s[:r]
        # rows of U_r carry errors of order eps * sigma_1 / sigma_r, so rank
        # decisions in window coordinates scale with the data conditioning
        cond = float(s[0] / s[r - 1]) if r else 1.0
        user = get_rank_rtol()
        self.rtol = user if user is not None else max(W.shape[0], r) * EPS * cond
        self._Ur = U[:, :r]
        self._Vr = Vt[:r].T
        self._K0 = Vt[r:].T

        nu_rows, ny_rows = 2 * L * m, 2 * L * p
        h_rows = np.concatenate([np.arange((2 * L - 1) * m), nu_rows + np.arange((2 * L - 1) * p)])
        t_rows = np.concatenate([np.arange(m, nu_rows), nu_rows + np.arange(p, ny_rows)])
        Hc, Tc = self._Ur[h_rows], self._Ur[t_rows]
        Z = range_basis(np.hstack([Hc, Tc]), rtol=self.rtol)
        self.Hc = Z.T @ Hc
        self.Tc = Z.T @ Tc
        self.ref_shift = max(opnorm(self.Hc), opnorm(self.Tc), 1e-300)
        past = np.concatenate([np.arange(L * m), nu_rows + np.arange(L * p)])
        self.Pc = self._Ur[past]
        self.ref_past = max(opnorm(self.Pc), 1e-300)
        self._fut_u = [self._Ur[L * m + c : nu_rows : m] for c in range(m)]
        self._fut_y = [self._Ur[nu_rows + L * p + c :: p] for c in range(p)]
        self._u0 = slice(L * m, L * m + m)
        self._y0 = slice(nu_rows + L * p, nu_rows + L * p + p)

        self.use_cache = cache
        self._svals: dict[frozenset, dict[int, int]] = {}
        self._lru: OrderedDict = OrderedDict()
        self._lru_size = lru_size
        self._lock = threading.Lock()
        self.evaluations = 0

    # -- coordinates -------------------------------------------------------

    def fut(self, j: int) -> np.ndarray:
        """Future rows of component ``j`` in window coordinates."""
        if self.layout.is_actuator(j):
            return self._fut_u[j - 1]
        return self._fut_y[j - self.m - 1]

    def lift(self, Xc: np.ndarray) -> Subspace:
        """Coefficient-space subspace whose window-coordinate image is ``Xc``."""
        inner = range_basis(Xc / self.sigma[:, None]) if Xc.shape[1] else Xc
        return Subspace(np.hstack([self._Vr @ inner, self._K0]))

    def to_window(self, V: Subspace) -> np.ndarray:
        if V.ambient != self.d:
            raise ValueError(f"subspace ambient {V.ambient} != d = {self.d}")
        img = self.sigma[:, None] * (self._Vr.T @ V.basis)
        return range_basis(img, ref=self.sigma[0] if self.r else 1.0)

    def coeffs(self, c: np.ndarray) -> np.ndarray:
        """Minimum-norm g with window ``U c``."""
        return self._Vr @ (c / self.sigma)

    def window(self, c: np.ndarray) -> np.ndarray:
        """Raw 2L window ``[u; y]`` rows for window coordinates ``c``."""
        return self.row_scale * (self._Ur @ c)

    def clear_cache(self) -> None:
        self._svals.clear()
        self._lru.clear()

    # -- recursions --------------------------------------------------------

    def _constraints(self, gs: GammaSets) -> np.ndarray:
        rows = [self._fut_y[s - 1] for s in self.layout.protected]
        rows += [self._fut_u[j - 1] for j in gs.gamma_u_bar]
        rows += [self._fut_y[l - 1] for l in gs.gamma_y_bar]
        if not rows:
            return np.zeros((0, self.r))
        return np.vstack(rows)

    def v_fixed_point(self, gs: GammaSets) -> tuple[np.ndarray, list[int]]:
        """``V_inf`` in window coordinates and the dimension trace."""
        V = null_basis(self._constraints(gs), ref=1.0, rtol=self.rtol)
        dims = [V.shape[1]]
        for _ in range(self.r + 1):
            v = V.shape[1]
            if v == 0:
                break
            # g = V a in Pre(V) iff T V a lies in the range of H V
            Vn = V @ self._inverse_image(self.Tc @ V, self.Hc @ V)
            dims.append(Vn.shape[1])
            V = Vn
            if Vn.shape[1] == v:
                break
        return V, dims

    def _inverse_image(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Basis of ``{a : A a in range B}`` (shift operators restricted)."""
        Q = range_basis(B, ref=self.ref_shift, rtol=self.rtol)
        return null_basis(A - Q @ (Q.T @ A), ref=self.ref_shift, rtol=self.rtol)

    def _r_chain_start(self, V: np.ndarray) -> np.ndarray:
        return null_basis(self.Pc @ V, ref=self.ref_past, rtol=self.rtol)

    def _post_in(self, V, HV, TV, Rz) -> np.ndarray:
        """``V_inf ∩ Post(R)`` in the coordinates of ``V``."""
        return self._inverse_image(HV, TV @ Rz)

    def r_fixed_point(self, V: np.ndarray) -> tuple[np.ndarray, list[int]]:
        """``R_inf`` in window coordinates, given ``V_inf`` there."""
        if V.shape[1] == 0:
            return V, [0]
        HV, TV = self.Hc @ V, self.Tc @ V
        Rz = self._r_chain_start(V)
        dims = [Rz.shape[1]]
        for _ in range(self.r + 1):
            k = Rz.shape[1]
            if k == 0:
                break
            # R_t ⊆ V_inf, so V_inf ∩ (R_t + Post R_t) = R_t + (V_inf ∩ Post R_t)
            Rn = range_basis(np.hstack([Rz, self._post_in(V, HV, TV, Rz)]), ref=1.0, rtol=self.rtol)
            dims.append(Rn.shape[1])
            Rz = Rn
            if Rn.shape[1] == k:
                break
        return V @ Rz, dims

    def _subspaces(self, key: frozenset, need_r: bool):
        with self._lock:
            hit = self._lru.get(key)
            if hit is not None and (hit[1] is not None or not need_r):
                self._lru.move_to_end(key)
                return hit
        if hit is None:
            gs = GammaSets.from_components(key, self.layout)
            V, vd = self.v_fixed_point(gs)
            hit = (V, None, vd, None)
        if need_r:
            R, rd = self.r_fixed_point(hit[0])
            hit = (hit[0], R, hit[2], rd)
        with self._lock:
            self._lru[key] = hit
            self._lru.move_to_end(key)
            while len(self._lru) > self._lru_size:
                self._lru.popitem(last=False)
        return hit

    def _mapped(self, j: int, X: np.ndarray) -> int:
        if X.shape[1] == 0:
            return 0
        F = self.fut(j)
        return numerical_rank(F @ X, ref=opnorm(F), rtol=self.rtol)

    def s_value(self, gamma: Iterable[int], i: int) -> int:
        """``dim L_i R_inf(Gamma)``."""
        key = frozenset(gamma)
        if i not in key:
            raise ValueError(f"component {i} is not in the subset {sorted(key)}")
        if self.use_cache:
            got = self._svals.get(key, {}).get(i)
            if got is not None:
                return got
        self.evaluations += 1
        V, _, _, _ = self._subspaces(key, need_r=False)
        if self._mapped(i, V) == 0:
            vals = {i: 0}
        else:
            _, R, _, _ = self._subspaces(key, need_r=True)
            vals = {j: self._mapped(j, R) for j in key}
        if self.use_cache:
            self._svals.setdefault(key, {}).update(vals)
        return vals[i]

    def feasible(self, gamma: Iterable[int], i: int) -> bool:
        return self.s_value(gamma, i) >= 1

    def trace(self, gamma: Iterable[int]) -> FixedPointTrace:
        V, R, vd, rd = self._subspaces(frozenset(gamma), need_r=True)
        off = self.d - self.r
        return FixedPointTrace([v + off for v in vd], [x + off for x in rd])

    # -- index searches ----------------------------------------------------

    def rho(self, i: int, max_card: int | None = None, workers: int = 1) -> IndexResult:
        """Exhaustive level-wise search for the smallest feasible subset."""
        lay = self.layout
        lay.check_component(i)
        t0 = time.perf_counter()
        comps = lay.components
        cap = len(comps) if max_card is None else min(max_card, len(comps))
        evals = 0
        pool = ThreadPoolExecutor(workers) if workers > 1 else None
        try:
            for q in range(1, cap + 1):
                cands = list(candidate_sets(comps, i, q))
                step = max(1, 4 * workers) if pool else 1
                for start in range(0, len(cands), step):
                    chunk = cands[start : start + step]
                    if pool:
                        flags = list(pool.map(lambda G: self.feasible(G, i), chunk))
                    else:
                        flags = [self.feasible(chunk[0], i)]
                    for G, ok in zip(chunk, flags):
                        evals += 1
                        if ok:
                            return IndexResult(
                                i, q, G, None, time.perf_counter() - t0, evaluations=evals
                            )
        finally:
            if pool:
                pool.shutdown()
        elapsed = time.perf_counter() - t0
        if cap < len(comps):
            return IndexResult(i, None, None, None, elapsed, True, cap, evals)
        return IndexResult(i, INF, None, None, elapsed, evaluations=evals)

    def rho_upper(self, i: int) -> IndexResult:
        """Greedy growth of Gamma by the largest gain in ``s``; ties go to the smallest j."""
        lay = self.layout
        lay.check_component(i)
        t0 = time.perf_counter()
        comps = lay.components
        gamma = [i]
        s = self.s_value(gamma, i)
        evals = 1
        while s < 1 and len(gamma) < len(comps):
            best_j, best_gain = None, -1
            for j in comps:
                if j in gamma:
                    continue
                evals += 1
                gain = self.s_value(gamma + [j], i) - s
                if gain > best_gain:
                    best_j, best_gain = j, gain
            gamma.append(best_j)
            s += best_gain
        elapsed = time.perf_counter() - t0
        if s >= 1:
            return IndexResult(i, len(gamma), tuple(sorted(gamma)), None, elapsed, evaluations=evals)
        return IndexResult(i, INF, None, None, elapsed, evaluations=evals)

    # -- witness -----------------------------------------------------------

    def witness(self, gamma: Iterable[int], i: int, horizon: int | None = None) -> WitnessSequence:
        """Concrete coefficient sequence for a feasible ``(Gamma, i)``.

        Walks the pure successor chain ``S_0 = R_0``, ``S_{t+1} = V_inf ∩
        Post(S_t)`` until component ``i`` shows up, backtracks one
        predecessor per step to a zero-past window, then extends forward
        inside ``V_inf`` with minimum-norm successors.
        """
        lay = self.layout
        gs = _as_gamma(gamma, lay)
        if i not in gs.gamma:
            raise ValueError(f"component {i} is not in the subset {sorted(gs.gamma)}")
        if not self.feasible(gs.gamma, i):
            raise ValueError(f"subset {sorted(gs.gamma)} admits no attack using component {i}")
        V, _, _, rdims = self._subspaces(gs.gamma, need_r=True)
        HV, TV = self.Hc @ V, self.Tc @ V
        Fi = self.fut(i)
        ref_i = opnorm(Fi)
        chain_spaces = [self._r_chain_start(V)]
        t_star = None
        for t in range(self.r + 2):
            S = chain_spaces[-1]
            if S.shape[1] and numerical_rank(Fi @ V @ S, ref=ref_i, rtol=self.rtol) >= 1:
                t_star = t
                break
            chain_spaces.append(self._post_in(V, HV, TV, S))
        if t_star is None:
            raise RuntimeError("successor chain never activates the component")

        S = chain_spaces[t_star]
        _, _, wh = svd(Fi @ V @ S)
        z = [S @ wh[0]]
        for t in range(t_star, 0, -1):
            P = chain_spaces[t - 1]
            w = pinv(TV @ P, ref=self.ref_shift, rtol=self.rtol) @ (HV @ z[0])
            z.insert(0, P @ w)

        r_steps = len(rdims) - 1
        if horizon is not None and horizon < r_steps:
            raise ValueError(f"horizon {horizon} is shorter than the R convergence step {r_steps}")
        K = horizon if horizon is not None else r_steps + 2 * self.L
        K = max(K, t_star)
        HV_pinv = pinv(HV, ref=self.ref_shift, rtol=self.rtol)
        while len(z) < K + 1:
            z.append(HV_pinv @ (TV @ z[-1]))
        z = z[: K + 1]

        C = np.array([V @ zk for zk in z])  # (K+1, r) window coordinates
        wins = np.array([self.window(c) for c in C])
        g = np.array([self.coeffs(c) for c in C])
        seq = WitnessSequence(
            g=g,
            gamma=gs,
            component=i,
            u_tilde=wins[:, self._u0],
            y_tilde=wins[:, self._y0],
            layout=lay,
        )
        seq.residuals = witness_residuals(self.blocks, seq)
        return seq


_ENGINES: "weakref.WeakKeyDictionary[HankelBlocks, DataIndex]" = weakref.WeakKeyDictionary()


def engine(blocks: HankelBlocks) -> DataIndex:
    """Shared engine for ``blocks`` (built once per blocks object)."""
    eng = _ENGINES.get(blocks)
    if eng is None:
        eng = _ENGINES[blocks] = DataIndex(blocks)
    return eng


def witness_residuals(blocks: HankelBlocks, seq: WitnessSequence) -> dict[str, float]:
    """Relative residuals of the anchor, protected, shift and activity conditions."""
    from .hankel import protected_rows, selector

    g = seq.g
    W = blocks.data
    scale = max(float(np.max(np.linalg.norm(g @ W.T, axis=1))), 1e-300)
    past = np.vstack([blocks.Up, blocks.Yp])
    prot = protected_rows(blocks)
    shift = (g[1:] @ blocks.H.T) - (g[:-1] @ blocks.T.T)
    Li = selector(blocks, seq.component)
    return {
        "anchor": float(np.linalg.norm(past @ g[0])) / scale,
        "protected": float(np.max(np.abs(g @ prot.T))) / scale if prot.size else 0.0,
        "shift": float(np.max(np.abs(shift))) / scale if shift.size else 0.0,
        "activity": float(np.max(np.linalg.norm(g @ Li.T, axis=1))) / scale,
    }


def witness_from_coefficients(blocks: HankelBlocks, g: np.ndarray, gamma, i: int) -> WitnessSequence:
    """Witness whose attack is read off the raw data blocks for a given ``g(0..K)``."""
    lay = blocks.layout
    g = np.atleast_2d(np.asarray(g, dtype=float))
    seq = WitnessSequence(
        g=g,
        gamma=_as_gamma(gamma, lay),
        component=i,
        u_tilde=g @ blocks.Uf[: lay.m].T,
        y_tilde=g @ blocks.Yf[: lay.p].T,
        layout=lay,
    )
    seq.residuals = witness_residuals(blocks, seq)
    return seq


# -- module-level operations ----------------------------------------------


def v_infinity(blocks: HankelBlocks, gamma) -> tuple[Subspace, FixedPointTrace]:
    eng = engine(blocks)
    gs = _as_gamma(gamma, blocks.layout)
    V, dims = eng.v_fixed_point(gs)
    off = eng.d - eng.r
    return eng.lift(V), FixedPointTrace(v_dims=[v + off for v in dims])


def r_infinity(blocks: HankelBlocks, gamma, Vinf: Subspace) -> tuple[Subspace, FixedPointTrace]:
    eng = engine(blocks)
    _as_gamma(gamma, blocks.layout)
    R, dims = eng.r_fixed_point(eng.to_window(Vinf))
    off = eng.d - eng.r
    return eng.lift(R), FixedPointTrace(r_dims=[x + off for x in dims])


def data_feasible(blocks: HankelBlocks, gamma, i: int) -> bool:
    gs = _as_gamma(gamma, blocks.layout)
    return engine(blocks).feasible(gs.gamma, i)


def s_value(blocks: HankelBlocks, gamma, i: int) -> int:
    gs = _as_gamma(gamma, blocks.layout)
    return engine(blocks).s_value(gs.gamma, i)


def rho(
    blocks: HankelBlocks, layout: ComponentLayout, i: int, max_card: int | None = None, workers: int = 1
) -> IndexResult:
    _check_same_layout(blocks, layout)
    return engine(blocks).rho(i, max_card, workers)


def rho_upper(blocks: HankelBlocks, layout: ComponentLayout, i: int) -> IndexResult:
    _check_same_layout(blocks, layout)
    return engine(blocks).rho_upper(i)


def synthesize_data_witness(
    blocks: HankelBlocks, gamma, i: int, horizon: int | None = None
) -> WitnessSequence:
    return engine(blocks).witness(gamma, i, horizon)


def _check_same_layout(blocks: HankelBlocks, layout: ComponentLayout) -> None:
    if blocks.layout != layout:
        raise ValueError(f"blocks were built for {blocks.layout}, got {layout}")


__all__ = [
    "GammaSets",
    "FixedPointTrace",
    "WitnessSequence",
    "DataIndex",
    "engine",
    "v_infinity",
    "r_infinity",
    "data_feasible",
    "s_value",
    "rho",
    "rho_upper",
    "synthesize_data_witness",
    "witness_residuals",
    "witness_from_coefficients",
    "INF",
]
