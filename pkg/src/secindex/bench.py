"""Experiment harness: benchmark cases, index comparison tables and timing.

``run_comparison`` produces the per-component table used by the ``compare``
command.  Each index search starts from an empty verdict cache so the
timing columns measure that search alone.

Run ``python -m secindex.bench`` for the platoon timing study.
"""

from __future__ import annotations

import argparse
import sys as _sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from ._linalg import get_rank_rtol
from .data_index import DataIndex
from .hankel import build_blocks, is_persistently_exciting
from .io import ComponentRow, Report
from .linsys import (
    ComponentLayout,
    LtiSystem,
    PlatoonConfig,
    Trajectory,
    build_platoon,
    generate_excitation,
    random_experiment,
    random_system,
)
from .model_index import IndexResult, TransferMatrix, delta


@dataclass
class Case:
    sys: LtiSystem
    layout: ComponentLayout
    traj: Trajectory
    L: int
    seed: int

    def blocks(self):
        return build_blocks(self.traj, self.L, self.layout)


def platoon_case(N_v: int = 5, N: int = 200, L: int = 10, seed: int = 0, nu: int = 0) -> Case:
    cfg = PlatoonConfig(N_v=N_v, N=N, seed=seed)
    sys, layout = build_platoon(cfg, nu)
    return Case(sys, layout, generate_excitation(sys, cfg, L), L, seed)


def equivalence_case(seed: int) -> Case:
    """Small random plant: n <= 4, m <= min(2, n), p <= 3, nu in [0, p], L = n."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    m = int(rng.integers(1, min(2, n) + 1))
    p = int(rng.integers(1, 4))
    nu = int(rng.integers(0, p + 1))
    sys = random_system(rng, n, m, p)
    return Case(sys, ComponentLayout(m, p, nu), random_experiment(sys, n, rng), n, seed)


def bound_case(seed: int) -> Case:
    """Sparse plant large enough for greedy growth to overshoot: n in 3..6, |I| up to 8."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 7))
    m = int(rng.integers(1, 4))
    p = int(rng.integers(2, 6))
    nu = int(rng.integers(0, 2))
    sys = random_system(rng, n, m, p)
    return Case(sys, ComponentLayout(m, p, nu), random_experiment(sys, n, rng), n, seed)


def pe_summary(traj: Trajectory, order: int) -> dict:
    ok, rank, needed = is_persistently_exciting(traj.u, order)
    return {"pe_order": order, "pe_rank": rank, "pe_needed": needed, "pe_ok": bool(ok)}


def run_comparison(
    traj: Trajectory,
    layout: ComponentLayout,
    L: int,
    sys: LtiSystem | None = None,
    which: tuple[str, ...] = ("delta", "rho", "rho_upper"),
    components=None,
    max_card: int | None = None,
    workers: int = 1,
    n_hat: int | None = None,
    seed: int | None = None,
) -> tuple[Report, dict[str, dict[int, IndexResult]]]:
    """Compute the requested indices per component and tabulate them."""
    blocks = build_blocks(traj, L, layout)
    eng = DataIndex(blocks)
    if n_hat is None:
        n_hat = sys.n if sys is not None else L
    comps = list(components) if components is not None else list(layout.components)
    results: dict[str, dict[int, IndexResult]] = {k: {} for k in which}
    tf = TransferMatrix(sys, layout) if (sys is not None and "delta" in which) else None
    for i in comps:
        if "delta" in which:
            if tf is None:
                raise ValueError("delta needs a system model")
            results["delta"][i] = delta(sys, layout, i, max_card=max_card, with_witness=False, tf=tf)
        if "rho" in which:
            eng.clear_cache()
            results["rho"][i] = eng.rho(i, max_card=max_card, workers=workers)
        if "rho_upper" in which:
            eng.clear_cache()
            results["rho_upper"][i] = eng.rho_upper(i)
    meta = {
        "tool": "secindex",
        "version": __version__,
        "N": traj.N,
        "L": L,
        "d": blocks.d,
        "m": layout.m,
        "p": layout.p,
        "nu": layout.nu,
        "n_hat": n_hat,
        **pe_summary(traj, n_hat + 2 * L),
        "data_rank": eng.r,
        "tolerance": get_rank_rtol() if get_rank_rtol() is not None else "default",
        "window_rtol": eng.rtol,
        "max_card": max_card,
        "seed": seed,
        "indices": list(which),
    }
    rows = [
        ComponentRow.from_results(
            layout,
            i,
            results.get("delta", {}).get(i),
            results.get("rho", {}).get(i),
            results.get("rho_upper", {}).get(i),
        )
        for i in comps
    ]
    return Report(meta, rows), results


def _agree(a: IndexResult, b: IndexResult) -> bool:
    """Equal values; a capped result only requires the other to exceed the cap."""
    if a.capped and b.capped:
        return True
    if a.capped:
        return b.lower_bound() > a.cap
    if b.capped:
        return a.lower_bound() > b.cap
    return a.value == b.value


def comparison_holds(results: dict[str, dict[int, IndexResult]]) -> bool:
    """``rho <= rho_upper`` everywhere and ``delta == rho`` wherever both were computed."""
    rho = results.get("rho", {})
    up = results.get("rho_upper", {})
    dl = results.get("delta", {})
    for i, r in rho.items():
        if i in up and r.lower_bound() > up[i].value:
            return False
        if i in dl and not _agree(dl[i], r):
            return False
    return True


def timing_study(case: Case, max_card: int | None = 4, components=None, log=None) -> list[dict]:
    """Per-component wall-clock of the exhaustive search and the greedy bound."""
    eng = DataIndex(case.blocks())
    comps = list(components) if components is not None else list(case.layout.components)
    rows = []
    for i in comps:
        eng.clear_cache()
        r = eng.rho(i, max_card=max_card)
        eng.clear_cache()
        u = eng.rho_upper(i)
        row = {
            "component": case.layout.label(i),
            "rho": r.label(),
            "rho_upper": u.label(),
            "capped": r.capped,
            "t_rho": r.elapsed,
            "t_rho_upper": u.elapsed,
            "evals_rho": r.evaluations,
            "evals_rho_upper": u.evaluations,
        }
        rows.append(row)
        if log:
            log(row)
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m secindex.bench", description=__doc__.splitlines()[0])
    ap.add_argument("--vehicles", type=int, default=10)
    ap.add_argument("--N", type=int, default=300)
    ap.add_argument("--L", type=int, default=3)
    ap.add_argument("--max-card", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    t0 = time.perf_counter()
    case = platoon_case(args.vehicles, args.N, args.L, args.seed)

    def log(row):
        print(
            f"{row['component']:>5}  rho={row['rho']:>3}  rho_upper={row['rho_upper']:>3}  "
            f"t_rho={row['t_rho']:.3f}s  t_rho_upper={row['t_rho_upper']:.3f}s",
            flush=True,
        )

    rows = timing_study(case, args.max_card, log=log)
    t_r = np.mean([r["t_rho"] for r in rows])
    t_u = np.mean([r["t_rho_upper"] for r in rows])
    capped = [r["component"] for r in rows if r["capped"]]
    print(f"mean t_rho={t_r:.3f}s  mean t_rho_upper={t_u:.3f}s  capped={capped or 'none'}")
    print(f"total {time.perf_counter() - t0:.1f}s")
    return 0


if __name__ == "__main__":
    _sys.exit(main())
