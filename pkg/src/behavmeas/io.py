"""Readers and writers for the on-disk formats used by the command line."""
from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from .measure import PathMeasure
from .stochastic import FiniteKernel
from .system_model import LtiSystem, PolynomialSystem, Trajectory


def _fmt(v: float) -> str:
    return repr(float(v))


# -- trajectories ------------------------------------------------------------

def trajectory_rows(traj: Trajectory) -> list:
    n, m, p = traj.shape[1:]
    header = ["t"] + [f"x{i+1}" for i in range(n)] + [f"u{i+1}" for i in range(m)] \
        + [f"y{i+1}" for i in range(p)]
    rows = [header]
    for t in range(traj.T + 1):
        row = [str(t)] + [_fmt(v) for v in traj.states[t]]
        if t < traj.T:
            row += [_fmt(v) for v in traj.inputs[t]] + [_fmt(v) for v in traj.outputs[t]]
        else:
            row += [""] * (m + p)
        rows.append(row)
    return rows


def trajectory_to_csv(traj: Trajectory) -> str:
    buf = _io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(trajectory_rows(traj))
    return buf.getvalue()


def trajectory_from_rows(rows) -> Trajectory:
    header, *body = rows
    n = sum(h.startswith("x") for h in header)
    m = sum(h.startswith("u") for h in header)
    vals = [[float(v) if v != "" else np.nan for v in r[1:]] for r in body]
    arr = np.array(vals, dtype=float).reshape(len(body), n + m + (len(header) - 1 - n - m))
    return Trajectory(arr[:, :n], arr[:-1, n:n + m], arr[:-1, n + m:])


def trajectory_from_csv(text: str) -> Trajectory:
    return trajectory_from_rows(list(csv.reader(_io.StringIO(text))))


def write_trajectory(path, traj: Trajectory):
    Path(path).write_text(trajectory_to_csv(traj))


def read_trajectory(path) -> Trajectory:
    return trajectory_from_csv(Path(path).read_text())


# -- systems -----------------------------------------------------------------

def _terms_to_json(t: dict) -> list:
    return [{"exps": list(k), "coef": v} for k, v in t.items()]


def _terms_from_json(items) -> dict:
    return {tuple(d["exps"]): float(d["coef"]) for d in items}


def system_to_json(system) -> dict:
    if isinstance(system, LtiSystem):
        return {"kind": "lti", "A": system.A.tolist(), "B": system.B.tolist(),
                "C": system.C.tolist(), "D": system.D.tolist()}
    if isinstance(system, PolynomialSystem):
        out = {"kind": "poly", "n_x": system.n_x, "n_u": system.n_u,
               "f": [_terms_to_json(t) for t in system.f_coeffs],
               "h": [_terms_to_json(t) for t in system.h_coeffs]}
        if system.bounds:
            out["bounds"] = {k: [np.asarray(b, dtype=float).tolist() for b in v]
                             for k, v in system.bounds.items()}
        return out
    raise TypeError(f"cannot serialize {type(system).__name__}")


def system_from_json(d: dict):
    kind = d.get("kind")
    if kind == "lti":
        return LtiSystem(d["A"], d["B"], d["C"], d["D"])
    if kind == "poly":
        bounds = {k: tuple(v) for k, v in d.get("bounds", {}).items()}
        return PolynomialSystem(int(d["n_x"]), int(d["n_u"]),
                                [_terms_from_json(t) for t in d["f"]],
                                [_terms_from_json(t) for t in d.get("h", [])], bounds)
    raise ValueError(f"unknown system kind {kind!r}")


def read_system(path):
    return system_from_json(json.loads(Path(path).read_text()))


def write_system(path, system):
    Path(path).write_text(json.dumps(system_to_json(system), indent=2) + "\n")


# -- path measures -----------------------------------------------------------

def path_measure_to_json(mu: PathMeasure) -> dict:
    return {"T": mu.T, "atoms": [{"w": float(w), "traj": trajectory_rows(tr)}
                                 for w, tr in zip(mu.weights, mu.trajs)]}


def path_measure_from_json(d: dict) -> PathMeasure:
    trajs = [trajectory_from_rows(a["traj"]) for a in d["atoms"]]
    if any(tr.T != d["T"] for tr in trajs):
        raise ValueError("atom horizon differs from the declared T")
    return PathMeasure([a["w"] for a in d["atoms"]], trajs)


# -- tables ------------------------------------------------------------------

def moments_to_csv(table: dict) -> str:
    lines = ["i,j,k,value"]
    for (i, j, k), v in sorted(table.items()):
        lines.append(f"{i},{j},{k},{_fmt(v)}")
    return "\n".join(lines) + "\n"


def moments_from_csv(text: str) -> dict:
    rows = list(csv.reader(_io.StringIO(text)))[1:]
    return {(int(i), int(j), int(k)): float(v) for i, j, k, v in rows}


def matrix_to_csv(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [f"{M.shape[0]},{M.shape[1]}"]
    lines += [",".join(_fmt(v) for v in row) for row in M]
    return "\n".join(lines) + "\n"


def matrix_from_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(_io.StringIO(text)))
    r, c = (int(v) for v in rows[0])
    M = np.array([[float(v) for v in row] for row in rows[1:1 + r]], dtype=float)
    if M.shape != (r, c):
        raise ValueError(f"matrix CSV declares {r}x{c}, holds {M.shape}")
    return M


def read_matrix(path) -> np.ndarray:
    return matrix_from_csv(Path(path).read_text())


def write_matrix(path, M):
    Path(path).write_text(matrix_to_csv(M))


def column_to_csv(name: str, values) -> str:
    return name + "\n" + "".join(_fmt(v) + "\n" for v in np.asarray(values, dtype=float).ravel())


def column_from_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(_io.StringIO(text)))[1:]
    return np.array([float(r[0]) for r in rows if r], dtype=float)


def table_to_csv(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# -- kernels -----------------------------------------------------------------

def kernel_to_json(K: FiniteKernel) -> list:
    return K.to_json()


def kernel_from_json(d) -> FiniteKernel:
    return FiniteKernel(d)
