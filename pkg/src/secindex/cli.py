"""Command-line entry point.

Exit codes: 0 success, 1 a checked property failed (comparison or attack
replay), 2 input data not persistently exciting at the declared order,
3 the requested subset admits no attack, 4 invalid input.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from ._linalg import set_rank_rtol
from .bench import comparison_holds, run_comparison
from .data_index import DataIndex, witness_from_coefficients
from .hankel import build_blocks, is_persistently_exciting
from .io import ComponentRow, Report, read_system, read_trajectory, write_system, write_trajectory
from .linsys import (
    ComponentLayout,
    ExcitationError,
    PlatoonConfig,
    build_platoon,
    generate_excitation,
    random_experiment,
    random_system,
    simulate_attacked,
)
from .model_index import TransferMatrix, delta

EXIT_OK, EXIT_FAIL, EXIT_NOT_PE, EXIT_INFEASIBLE, EXIT_INPUT = 0, 1, 2, 3, 4
REPLAY_RTOL = 1e-6


class InputError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="secindex",
        description="Security indices of LTI plants from a model or from input/output data.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="mode", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, help="relative rank tolerance (default: size * eps)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--output", "-o", help="output path")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", required=True, help="trajectory CSV (k,u1..um,y1..yp)")
    data.add_argument("--L", type=int, required=True, help="window length")
    data.add_argument("--nu", type=int, help="protected sensors (default: from --system, else 0)")
    data.add_argument("--n-hat", type=int, help="upper bound on the state dimension")
    data.add_argument("--force", action="store_true", help="continue on failed excitation check")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--max-card", type=int, help="largest subset size searched")
    search.add_argument("--component", "-c", action="append", help="component label, e.g. u5 or y9")
    search.add_argument(
        "--threads", type=int, default=os.cpu_count() or 1, help="workers for subset evaluation"
    )

    g = sub.add_parser("generate", parents=[common], help="write experiment data and system files")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--platoon", type=int, metavar="NV", help="platoon with NV vehicles")
    src.add_argument("--random", action="store_true", help="seeded random plant")
    g.add_argument("--N", type=int, help="samples (platoon default 200)")
    g.add_argument("--L", type=int, default=None, help="window length the data must support")
    g.add_argument("--n", type=int, default=3)
    g.add_argument("--m", type=int, default=1)
    g.add_argument("--p", type=int, default=2)
    g.add_argument("--nu", type=int, default=0)
    g.add_argument("--Ts", type=float, default=0.1)
    g.add_argument("--kp", type=float, default=1.0)
    g.add_argument("--noise-var", type=float, default=1.0)
    g.add_argument("--system-output", help="system JSON path (default: output with .json)")

    pe = sub.add_parser("pe-check", parents=[common], help="excitation check at order n_hat + 2L")
    pe.add_argument("--data", required=True)
    pe.add_argument("--L", type=int, required=True)
    pe.add_argument("--n-hat", type=int)
    pe.add_argument("--system")

    d = sub.add_parser("delta", parents=[common, search], help="model-based index")
    d.add_argument("--system", required=True)
    d.add_argument("--nu", type=int)

    for name, helptext in (("rho", "data-driven index"), ("rho-bound", "greedy upper bound")):
        r = sub.add_parser(name, parents=[common, data, search], help=helptext)
        r.add_argument("--system", help="system JSON (for nu and n)")

    c = sub.add_parser("compare", parents=[common, data, search], help="delta, rho and bound table")
    c.add_argument("--system", help="system JSON; enables delta")

    v = sub.add_parser("verify-attack", parents=[common, data], help="replay a data-driven attack")
    v.add_argument("--system", required=True)
    v.add_argument("--gamma", required=True, help="comma-separated components, e.g. u5,y9,y10")
    v.add_argument("--component", "-c", required=True)
    v.add_argument("--horizon", type=int)
    v.add_argument("--tamper", action="store_true", help="perturb one coefficient vector first")
    return ap


def _emit(report, args) -> None:
    if args.output:
        for path in report.write(args.output, args.format):
            print(f"wrote {path}", file=sys.stderr)
        print(report.table())
    elif args.format == "json":
        print(report.to_json(), end="")
    else:
        print(report.table())


def _layout_for_data(args, traj):
    sys_ = None
    nu = args.nu
    if getattr(args, "system", None):
        sys_, lay = read_system(args.system)
        if (sys_.m, sys_.p) != (traj.m, traj.p):
            raise InputError(
                f"system has m={sys_.m}, p={sys_.p} but data has m={traj.m}, p={traj.p}"
            )
        if nu is None:
            nu = lay.nu
    return sys_, ComponentLayout(traj.m, traj.p, nu or 0)


def _n_hat(args, sys_):
    if args.n_hat is not None:
        return args.n_hat
    return sys_.n if sys_ is not None else args.L


def _excitation_gate(args, traj, n_hat) -> int | None:
    order = n_hat + 2 * args.L
    ok, rank, needed = is_persistently_exciting(traj.u, order)
    if args.L < n_hat:
        warnings.warn(f"L={args.L} is below n_hat={n_hat}; the data index may differ from the model index")
    if ok:
        return None
    msg = (
        f"input is not persistently exciting of order n_hat+2L={order} "
        f"(Hankel rank {rank} < {needed})"
    )
    if args.force:
        warnings.warn(msg + "; continuing because of --force")
        return None
    print(f"error: {msg}; rerun with more data or --force", file=sys.stderr)
    return EXIT_NOT_PE


def _components(args, layout):
    if not args.component:
        return None
    try:
        return [layout.parse(c) for c in args.component]
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_generate(args) -> int:
    out = Path(args.output or "trajectory.csv")
    sys_out = Path(args.system_output) if args.system_output else out.with_suffix(".json")
    if args.platoon is not None:
        N = args.N or 200
        L = args.L if args.L is not None else 10
        cfg = PlatoonConfig(
            N_v=args.platoon, T_s=args.Ts, K_p=args.kp, noise_var=args.noise_var, seed=args.seed, N=N
        )
        plant, layout = build_platoon(cfg, args.nu)
        traj = generate_excitation(plant, cfg, L)
    else:
        rng = np.random.default_rng(args.seed)
        plant = random_system(rng, args.n, args.m, args.p)
        layout = ComponentLayout(plant.m, plant.p, args.nu)
        L = args.L if args.L is not None else args.n
        traj = random_experiment(plant, L, rng, N=args.N)
    write_trajectory(out, traj)
    write_system(sys_out, plant, layout.nu)
    ok, rank, needed = is_persistently_exciting(traj.u, plant.n + 2 * L)
    print(
        f"wrote {out} ({traj.N} samples, m={traj.m}, p={traj.p}) and {sys_out}; "
        f"excitation order {plant.n + 2 * L}: rank {rank}/{needed}"
    )
    return EXIT_OK


def cmd_pe_check(args) -> int:
    traj = read_trajectory(args.data)
    sys_ = read_system(args.system)[0] if args.system else None
    n_hat = _n_hat(args, sys_)
    order = n_hat + 2 * args.L
    ok, rank, needed = is_persistently_exciting(traj.u, order)
    print(f"order {order}: Hankel rank {rank} of {needed} -> {'ok' if ok else 'NOT persistently exciting'}")
    return EXIT_OK if ok else EXIT_NOT_PE


def cmd_delta(args) -> int:
    plant, layout = read_system(args.system)
    if args.nu is not None:
        layout = ComponentLayout(plant.m, plant.p, args.nu)
    comps = _components(args, layout) or list(layout.components)
    tf = TransferMatrix(plant, layout)
    rows = [
        ComponentRow.from_results(
            layout, i, delta=delta(plant, layout, i, max_card=args.max_card, with_witness=False, tf=tf)
        )
        for i in comps
    ]
    meta = {
        "tool": "secindex",
        "version": __version__,
        "n": plant.n,
        "m": plant.m,
        "p": plant.p,
        "nu": layout.nu,
        "max_card": args.max_card,
        "indices": ["delta"],
    }
    _emit(Report(meta, rows), args)
    return EXIT_OK


def _data_command(args, which) -> int:
    traj = read_trajectory(args.data)
    sys_, layout = _layout_for_data(args, traj)
    n_hat = _n_hat(args, sys_)
    gate = _excitation_gate(args, traj, n_hat)
    if gate is not None:
        return gate
    if which == ("delta", "rho", "rho_upper") and sys_ is None:
        which = ("rho", "rho_upper")
    report, results = run_comparison(
        traj,
        layout,
        args.L,
        sys=sys_,
        which=which,
        components=_components(args, layout),
        max_card=args.max_card,
        workers=max(1, args.threads),
        n_hat=n_hat,
        seed=args.seed,
    )
    _emit(report, args)
    if "rho" in which and "rho_upper" in which:
        ok = comparison_holds(results)
        print("comparison: " + ("ok" if ok else "FAILED"), file=sys.stderr)
        return EXIT_OK if ok else EXIT_FAIL
    return EXIT_OK


def cmd_verify_attack(args) -> int:
    traj = read_trajectory(args.data)
    plant, layout = _layout_for_data(args, traj)
    gate = _excitation_gate(args, traj, _n_hat(args, plant))
    if gate is not None:
        return gate
    try:
        gamma = [layout.parse(t) for t in args.gamma.split(",") if t.strip()]
        i = layout.parse(args.component)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if i not in gamma:
        raise InputError(f"component {args.component} is not in gamma {args.gamma}")
    blocks = build_blocks(traj, args.L, layout)
    eng = DataIndex(blocks)
    names = ",".join(layout.label(j) for j in sorted(gamma))
    if not eng.feasible(gamma, i):
        print(f"infeasible: no undetectable attack on {{{names}}} uses {layout.label(i)}")
        return EXIT_INFEASIBLE
    seq = eng.witness(gamma, i, args.horizon)
    if args.tamper:
        rng = np.random.default_rng(args.seed)
        g = seq.g.copy()
        k = g.shape[0] // 2
        kick = rng.standard_normal(g.shape[1])
        g[k] += 1e-3 * np.max(np.linalg.norm(g, axis=1)) * kick / np.linalg.norm(kick)
        seq = witness_from_coefficients(blocks, g, seq.gamma, i)
    attack = seq.attack()
    y = simulate_attacked(plant, layout, np.zeros(plant.n), None, attack)
    peak = float(np.max(np.abs(attack.a)))
    resid = float(np.max(np.abs(y))) / peak if peak > 0 else float("inf")
    passed = resid <= REPLAY_RTOL and i in attack.support()
    print(f"gamma={{{names}}} component={layout.label(i)} horizon={attack.horizon}")
    print("constraint residuals: " + ", ".join(f"{k}={v:.2e}" for k, v in seq.residuals.items()))
    print(f"replay max|y|/max|a| = {resid:.3e} (limit {REPLAY_RTOL:g}) -> {'pass' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


COMMANDS = {
    "generate": cmd_generate,
    "pe-check": cmd_pe_check,
    "delta": cmd_delta,
    "rho": lambda a: _data_command(a, ("rho",)),
    "rho-bound": lambda a: _data_command(a, ("rho_upper",)),
    "compare": lambda a: _data_command(a, ("delta", "rho", "rho_upper")),
    "verify-attack": cmd_verify_attack,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.tol is not None:
        set_rank_rtol(args.tol)
    if getattr(args, "L", None) is not None and args.L < 1:
        print("error: L must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.mode](args)
    except ExcitationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_PE
    except (InputError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        if args.tol is not None:
            set_rank_rtol(None)


if __name__ == "__main__":
    sys.exit(main())
