"""File formats: trajectory CSV, system JSON and index reports.

Floats are written with ``repr`` so a write/read cycle is bit-identical.
Infinite index values are stored as the string ``"inf"`` and capped
searches as ``">K"`` in both JSON and CSV.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .linsys import ComponentLayout, LtiSystem, Trajectory
from .model_index import IndexResult


def write_trajectory(path, traj: Trajectory) -> None:
    header = ["k"] + [f"u{j + 1}" for j in range(traj.m)] + [f"y{j + 1}" for j in range(traj.p)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(traj.N):
            w.writerow([k] + [repr(float(v)) for v in traj.u[k]] + [repr(float(v)) for v in traj.y[k]])


def read_trajectory(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "k":
        raise ValueError(f"{path}: header must start with 'k', got {header[:1]}")
    u_cols = [c for c, h in enumerate(header) if h.startswith("u")]
    y_cols = [c for c, h in enumerate(header) if h.startswith("y")]
    exp = ["k"] + [f"u{j + 1}" for j in range(len(u_cols))] + [f"y{j + 1}" for j in range(len(y_cols))]
    if header != exp:
        raise ValueError(f"{path}: header must be k,u1..um,y1..yp, got {','.join(header)}")
    body = rows[1:]
    ks = [int(r[0]) for r in body]
    if ks != list(range(len(body))):
        raise ValueError(f"{path}: column k must run 0,1,2,... without gaps")
    data = np.array([[float(v) for v in r[1:]] for r in body], dtype=float).reshape(len(body), -1)
    m = len(u_cols)
    return Trajectory(data[:, :m], data[:, m:])


def write_system(path, sys: LtiSystem, nu: int = 0) -> None:
    doc = {"A": sys.A.tolist(), "B": sys.B.tolist(), "C": sys.C.tolist(), "nu": int(nu)}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_system(path) -> tuple[LtiSystem, ComponentLayout]:
    doc = json.loads(Path(path).read_text())
    missing = {"A", "B", "C"} - doc.keys()
    if missing:
        raise ValueError(f"{path}: missing keys {sorted(missing)}")

    def mat(key, rows_hint=None):
        M = np.array(doc[key], dtype=float)
        if M.ndim == 1:
            M = M.reshape(rows_hint or 1, -1)
        return M

    A = mat("A")
    B = mat("B", A.shape[0])
    C = mat("C")
    sys = LtiSystem(A, B, C)
    return sys, ComponentLayout(sys.m, sys.p, int(doc.get("nu", 0)))


def result_value(res: IndexResult | None):
    if res is None:
        return None
    return res.label() if (res.capped or res.value == math.inf) else int(res.value)


@dataclass
class ComponentRow:
    component: str
    delta: int | str | None = None
    rho: int | str | None = None
    rho_upper: int | str | None = None
    delta_set: list[str] | None = None
    rho_set: list[str] | None = None
    rho_upper_set: list[str] | None = None
    t_delta: float | None = None
    t_rho: float | None = None
    t_rho_upper: float | None = None

    @classmethod
    def from_results(cls, layout: ComponentLayout, i: int, delta=None, rho=None, rho_upper=None):
        def names(res):
            if res is None or res.witness_set is None:
                return None
            return [layout.label(j) for j in res.witness_set]

        def secs(res):
            return None if res is None else round(float(res.elapsed), 6)

        return cls(
            component=layout.label(i),
            delta=result_value(delta),
            rho=result_value(rho),
            rho_upper=result_value(rho_upper),
            delta_set=names(delta),
            rho_set=names(rho),
            rho_upper_set=names(rho_upper),
            t_delta=secs(delta),
            t_rho=secs(rho),
            t_rho_upper=secs(rho_upper),
        )


@dataclass
class Report:
    meta: dict = field(default_factory=dict)
    components: list[ComponentRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"meta": self.meta, "components": [asdict(r) for r in self.components]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "Report":
        return cls(doc["meta"], [ComponentRow(**r) for r in doc["components"]])

    def write(self, path, fmt: str = "json") -> list[Path]:
        """Write the report; ``csv`` gives the index table plus a ``_time`` table."""
        path = Path(path)
        if fmt == "json":
            path.write_text(self.to_json())
            return [path]
        if fmt != "csv":
            raise ValueError(f"unknown format {fmt!r}")
        time_path = path.with_name(path.stem + "_time" + (path.suffix or ".csv"))
        self._write_table(path, ["delta", "rho", "rho_upper"])
        self._write_table(time_path, ["t_delta", "t_rho", "t_rho_upper"])
        return [path, time_path]

    def _write_table(self, path: Path, cols: list[str]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component"] + cols)
            for r in self.components:
                vals = [getattr(r, c) for c in cols]
                w.writerow([r.component] + ["" if v is None else v for v in vals])

    def table(self) -> str:
        """Fixed-width text table for the terminal."""
        head = ["component", "delta", "rho", "rho_upper", "t_delta", "t_rho", "t_rho_upper"]
        lines = ["  ".join(f"{h:>11}" for h in head)]
        for r in self.components:
            cells = [getattr(r, h) for h in head]
            out = []
            for h, c in zip(head, cells):
                if c is None:
                    c = "-"
                elif h.startswith("t_"):
                    c = f"{c:.3f}"
                out.append(f"{c!s:>11}")
            lines.append("  ".join(out))
        return "\n".join(lines)
