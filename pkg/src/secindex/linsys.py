"""Discrete-time LTI plants, attack layout, simulation and data generation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._linalg import numerical_rank
from .hankel import is_persistently_exciting


def _frozen(M) -> np.ndarray:
    arr = np.array(M, dtype=float)
    arr.setflags(write=False)
    return arr


def ctrb(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def obsv(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ctrb(A.T, C.T).T


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """Plant ``x(k+1) = A x(k) + B u(k)``, ``y(k) = C x(k)``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        A, B, C = _frozen(self.A), _frozen(self.B), _frozen(self.C)
        if B.ndim == 1:
            B = _frozen(B.reshape(-1, 1))
        if C.ndim == 1:
            C = _frozen(C.reshape(1, -1))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if B.shape[0] != n:
            raise ValueError(f"B has {B.shape[0]} rows, expected n={n}")
        if C.shape[1] != n:
            raise ValueError(f"C has {C.shape[1]} columns, expected n={n}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        if not self.check:
            return
        if numerical_rank(B) < B.shape[1]:
            raise ValueError("B must have full column rank")
        if not self.is_controllable():
            warnings.warn("(A, B) is not controllable", stacklevel=3)
        if not self.is_observable():
            warnings.warn("(A, C) is not observable", stacklevel=3)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def is_controllable(self) -> bool:
        return numerical_rank(ctrb(self.A, self.B)) == self.n

    def is_observable(self) -> bool:
        return numerical_rank(obsv(self.A, self.C)) == self.n


@dataclass(frozen=True)
class ComponentLayout:
    """Actuators ``1..m`` followed by the ``p - nu`` unprotected sensors.

    Components are numbered from 1 as in ``I = {1, ..., m + p - nu}``; the
    last ``nu`` outputs are protected and are never components.
    """

    m: int
    p: int
    nu: int = 0

    def __post_init__(self):
        if self.m < 1 or self.p < 1:
            raise ValueError(f"need m, p >= 1, got m={self.m}, p={self.p}")
        if not 0 <= self.nu <= self.p:
            raise ValueError(f"nu must lie in [0, p={self.p}], got {self.nu}")

    @property
    def n_components(self) -> int:
        return self.m + self.p - self.nu

    @property
    def components(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_components + 1))

    @property
    def unprotected(self) -> tuple[int, ...]:
        """1-based output indices an attacker can write to."""
        return tuple(range(1, self.p - self.nu + 1))

    @property
    def protected(self) -> tuple[int, ...]:
        return tuple(range(self.p - self.nu + 1, self.p + 1))

    def check_component(self, j: int) -> int:
        if not 1 <= j <= self.n_components:
            raise ValueError(
                f"component {j} not in I = {{1..{self.n_components}}} "
                f"(m={self.m}, p={self.p}, nu={self.nu})"
            )
        return j

    def is_actuator(self, j: int) -> bool:
        return self.check_component(j) <= self.m

    def sensor_index(self, j: int) -> int:
        """Output index (1-based) of sensor component ``j``."""
        if self.is_actuator(j):
            raise ValueError(f"component {j} is an actuator")
        return j - self.m

    def attack_column(self, j: int) -> int:
        """0-based column of the ``m + p`` attack vector driven by ``j``."""
        if self.is_actuator(j):
            return j - 1
        return self.m + self.nu + (j - self.m) - 1

    def label(self, j: int) -> str:
        if self.is_actuator(j):
            return f"u{j}"
        return f"y{j - self.m}"

    def parse(self, label: str | int) -> int:
        """Component index from ``'u3'``, ``'y7'`` or a plain integer."""
        if isinstance(label, (int, np.integer)):
            return self.check_component(int(label))
        text = label.strip().lower()
        if text.isdigit():
            return self.check_component(int(text))
        kind, digits = text[:1], text[1:]
        if kind not in ("u", "y") or not digits.isdigit():
            raise ValueError(f"cannot parse component label {label!r}")
        num = int(digits)
        if kind == "u":
            if not 1 <= num <= self.m:
                raise ValueError(f"no actuator {label}")
            return num
        if kind == "y":
            if not 1 <= num <= self.p - self.nu:
                raise ValueError(f"{label} is protected or out of range")
            return self.check_component(self.m + num)


@dataclass(frozen=True, eq=False)
class AttackStructure:
    B_a: np.ndarray
    D_a: np.ndarray


def attack_structure(sys: LtiSystem, layout: ComponentLayout) -> AttackStructure:
    """``B_a = [B, 0]`` and ``D_a`` with ``I_{p-nu}`` in its top-right block."""
    _check_layout(sys, layout)
    n, m, p, nu = sys.n, sys.m, sys.p, layout.nu
    B_a = np.hstack([sys.B, np.zeros((n, p))])
    D_a = np.zeros((p, m + p))
    D_a[: p - nu, m + nu :] = np.eye(p - nu)
    return AttackStructure(_frozen(B_a), _frozen(D_a))


def _check_layout(sys: LtiSystem, layout: ComponentLayout) -> None:
    if layout.m != sys.m or layout.p != sys.p:
        raise ValueError(
            f"layout (m={layout.m}, p={layout.p}) does not match "
            f"system (m={sys.m}, p={sys.p})"
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Input/output samples ``u(0..N-1)`` (N x m) and ``y(0..N-1)`` (N x p)."""

    u: np.ndarray
    y: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self):
        u = _frozen(self.u)
        y = _frozen(self.y)
        if u.ndim == 1:
            u = _frozen(u[:, None])
        if y.ndim == 1:
            y = _frozen(y[:, None])
        if u.shape[0] != y.shape[0]:
            raise ValueError(f"u has {u.shape[0]} samples but y has {y.shape[0]}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)
        if self.x is not None:
            object.__setattr__(self, "x", _frozen(self.x))

    @property
    def N(self) -> int:
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True, eq=False)
class AttackSignal:
    """Attack samples ``a(k) = col(u^a(k), y^a(k))`` in the full m+p layout."""

    a: np.ndarray
    layout: ComponentLayout

    def __post_init__(self):
        a = _frozen(np.atleast_2d(self.a))
        lay = self.layout
        if a.shape[1] != lay.m + lay.p:
            raise ValueError(f"attack width {a.shape[1]} != m+p = {lay.m + lay.p}")
        if lay.nu and np.any(a[:, lay.m : lay.m + lay.nu] != 0):
            raise ValueError("attack writes to protected-sensor columns")
        object.__setattr__(self, "a", a)

    @classmethod
    def from_parts(cls, u_attack, y_attack_unprotected, layout: ComponentLayout):
        """Assemble from actuator signals and attacks on the unprotected sensors."""
        ua = np.atleast_2d(np.asarray(u_attack, dtype=float))
        ya = np.atleast_2d(np.asarray(y_attack_unprotected, dtype=float))
        K = ua.shape[0]
        a = np.zeros((K, layout.m + layout.p))
        a[:, : layout.m] = ua
        a[:, layout.m + layout.nu :] = ya
        return cls(a, layout)

    @property
    def horizon(self) -> int:
        return self.a.shape[0]

    def channel(self, j: int) -> np.ndarray:
        return self.a[:, self.layout.attack_column(j)]

    def support(self, rtol: float = 1e-9) -> frozenset[int]:
        """Components whose channel exceeds ``rtol * max|a|`` at some time."""
        peak = float(np.max(np.abs(self.a))) if self.a.size else 0.0
        if peak == 0.0:
            return frozenset()
        return frozenset(
            j
            for j in self.layout.components
            if np.max(np.abs(self.channel(j))) > rtol * peak
        )


@dataclass(frozen=True)
class PlatoonConfig:
    """Platoon benchmark and its excitation experiment.

    ``x_star`` overrides the reference: an array of shape ``(N, N_v, 2)``
    holding desired (position, velocity) per vehicle and sample.  The
    default reference keeps a constant spacing of ``spacing`` at a cruising
    speed of ``speed``.
    """

    N_v: int = 5
    T_s: float = 0.1
    K_p: float = 1.0
    noise_var: float = 1.0
    x_star: np.ndarray | None = field(default=None, repr=False)
    seed: int = 0
    N: int = 200
    spacing: float = 10.0
    speed: float = 1.0

    def __post_init__(self):
        if self.N_v < 1:
            raise ValueError("N_v must be >= 1")
        if not self.T_s > 0:
            raise ValueError("T_s must be positive")
        if self.noise_var < 0:
            raise ValueError("noise_var must be non-negative")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    def reference(self) -> np.ndarray:
        if self.x_star is not None:
            ref = np.asarray(self.x_star, dtype=float)
            if ref.shape != (self.N, self.N_v, 2):
                raise ValueError(
                    f"x_star must have shape {(self.N, self.N_v, 2)}, got {ref.shape}"
                )
            return ref
        k = np.arange(self.N)[:, None]
        pos = self.speed * self.T_s * k - self.spacing * np.arange(self.N_v)[None, :]
        vel = np.full_like(pos, self.speed)
        return np.stack([pos, vel], axis=-1)


def simulate(sys: LtiSystem, x0, u) -> Trajectory:
    """Run the nominal plant from ``x0`` under ``u`` (N x m); states included."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None] if sys.m == 1 else u[None, :]
    if u.shape[1] != sys.m:
        raise ValueError(f"input dimension {u.shape[1]} != m={sys.m}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != sys.n:
        raise ValueError(f"initial state dimension {x0.shape[0]} != n={sys.n}")
    N = u.shape[0]
    x = np.empty((N + 1, sys.n))
    x[0] = x0
    for k in range(N):
        x[k + 1] = sys.A @ x[k] + sys.B @ u[k]
    y = x[:N] @ sys.C.T
    return Trajectory(u, y, x)


def simulate_attacked(
    sys: LtiSystem, layout: ComponentLayout, x0, u, a: AttackSignal | np.ndarray
) -> np.ndarray:
    """Output ``y(k, x0, u, a)`` of the attacked plant over ``len(u)`` steps.

    ``u=None`` means ``u == 0`` over the attack horizon.
    """
    _check_layout(sys, layout)
    if not isinstance(a, AttackSignal):
        a = AttackSignal(a, layout)
    if u is None:
        u = np.zeros((a.horizon, sys.m))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != sys.m:
        raise ValueError(f"input dimension {u.shape[1]} != m={sys.m}")
    N = u.shape[0]
    if a.horizon < N:
        raise ValueError(f"attack horizon {a.horizon} shorter than input length {N}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != sys.n:
        raise ValueError(f"initial state dimension {x0.shape[0]} != n={sys.n}")
    st = attack_structure(sys, layout)
    x = x0.copy()
    y = np.empty((N, sys.p))
    for k in range(N):
        y[k] = sys.C @ x + st.D_a @ a.a[k]
        x = sys.A @ x + sys.B @ u[k] + st.B_a @ a.a[k]
    return y


def build_platoon(cfg: PlatoonConfig, nu: int = 0) -> tuple[LtiSystem, ComponentLayout]:
    """Double-integrator platoon with positions, leader speed and gaps as outputs.

    Output order: ``y_{2l-1}`` is the position of vehicle ``l``, ``y_2`` the
    velocity of vehicle 1 and ``y_{2l}`` (``l >= 2``) the gap
    ``position_l - position_{l-1}``.
    """
    Nv, Ts = cfg.N_v, cfg.T_s
    Av = np.array([[1.0, Ts], [0.0, 1.0]])
    Bv = np.array([[0.0], [Ts]])
    A = np.kron(np.eye(Nv), Av)
    B = np.kron(np.eye(Nv), Bv)
    C = np.zeros((2 * Nv, 2 * Nv))
    C[0, 0] = 1.0
    C[1, 1] = 1.0
    for l in range(1, Nv):
        C[2 * l, 2 * l] = 1.0
        C[2 * l + 1, 2 * l] = 1.0
        C[2 * l + 1, 2 * (l - 1)] = -1.0
    sys = LtiSystem(A, B, C)
    return sys, ComponentLayout(sys.m, sys.p, nu)


class ExcitationError(RuntimeError):
    pass


def _platoon_run(sys: LtiSystem, cfg: PlatoonConfig, rng: np.random.Generator) -> Trajectory:
    ref = cfg.reference()
    Nv = cfg.N_v
    x = np.zeros(sys.n)
    x[0::2] = ref[0, :, 0]
    x[1::2] = ref[0, :, 1]
    u = np.empty((cfg.N, Nv))
    xs = np.empty((cfg.N + 1, sys.n))
    xs[0] = x
    sd = np.sqrt(cfg.noise_var)
    for k in range(cfg.N):
        err = (ref[k, :, 0] - x[0::2]) + (ref[k, :, 1] - x[1::2])
        u[k] = cfg.K_p * err + sd * rng.standard_normal(Nv)
        x = sys.A @ x + sys.B @ u[k]
        xs[k + 1] = x
    y = xs[: cfg.N] @ sys.C.T
    return Trajectory(u, y, xs)


def generate_excitation(
    sys: LtiSystem, cfg: PlatoonConfig, L: int, max_retries: int = 5
) -> Trajectory:
    """Closed-loop platoon data whose input is persistently exciting of order n + 2L.

    The input is ``u_l = K_p((p*_l - p_l) + (v*_l - v_l)) + w_l`` with i.i.d.
    Gaussian ``w_l``.  On a failed excitation check the run is repeated with
    fresh seeds spawned from ``cfg.seed``.
    """
    if sys.m != cfg.N_v or sys.n != 2 * cfg.N_v:
        raise ValueError("system does not match the platoon configuration")
    order = sys.n + 2 * L
    needed_N = (sys.m + 1) * order - 1
    if cfg.N < needed_N:
        warnings.warn(
            f"N={cfg.N} is below (m+1)(n+2L)-1={needed_N}; excitation will fail",
            stacklevel=2,
        )
    seeds = np.random.SeedSequence(cfg.seed).spawn(max_retries)
    report = None
    for attempt, ss in enumerate(seeds):
        traj = _platoon_run(sys, cfg, np.random.default_rng(ss))
        report = is_persistently_exciting(traj.u, order)
        if report[0]:
            return traj
    raise ExcitationError(
        f"input not persistently exciting of order {order} after {max_retries} "
        f"attempts (rank {report[1]} < {report[2]}); use a longer N "
        f"(at least {needed_N}) or a larger noise variance"
    )


def random_system(
    rng: np.random.Generator,
    n: int,
    m: int,
    p: int,
    density: float = 0.6,
    radius: float = 0.9,
    max_tries: int = 200,
) -> LtiSystem:
    """Random controllable/observable plant with a sparse structure.

    Sparse patterns give components with distinct attack sets, which is what
    makes security indices interesting on small systems.
    """
    if m > n:
        raise ValueError(f"B cannot have full column rank with m={m} > n={n}")
    for k in range(max_tries):
        # thin draws rarely pass the rank checks for tiny m, p; fill in gradually
        dens = density + (1.0 - density) * k / max_tries
        A = rng.standard_normal((n, n)) * (rng.random((n, n)) < dens)
        rho = max(abs(np.linalg.eigvals(A))) if n else 0.0
        if rho > 0:
            A *= radius / rho * rng.uniform(0.5, 1.0)
        B = rng.standard_normal((n, m)) * (rng.random((n, m)) < dens)
        C = rng.standard_normal((p, n)) * (rng.random((p, n)) < dens)
        if numerical_rank(B) < m:
            continue
        if numerical_rank(ctrb(A, B)) < n or numerical_rank(obsv(A, C)) < n:
            continue
        if np.any(np.all(C == 0, axis=1)):
            continue
        return LtiSystem(A, B, C)
    raise RuntimeError("could not draw a controllable and observable system")


def random_experiment(
    sys: LtiSystem,
    L: int,
    rng: np.random.Generator,
    extra: int = 20,
    max_retries: int = 5,
    N: int | None = None,
) -> Trajectory:
    """I.i.d. Gaussian input from a random initial state, PE of order n + 2L.

    The length defaults to ``extra`` samples beyond the excitation minimum.
    """
    order = sys.n + 2 * L
    needed_N = (sys.m + 1) * order - 1
    if N is None:
        N = needed_N + extra
    elif N < needed_N:
        raise ExcitationError(f"N={N} is below (m+1)(n+2L)-1={needed_N}; use a longer N")
    for _ in range(max_retries):
        u = rng.standard_normal((N, sys.m))
        traj = simulate(sys, rng.standard_normal(sys.n), u)
        if is_persistently_exciting(traj.u, order)[0]:
            return traj
    raise ExcitationError(f"random input failed the order-{order} excitation check")
