"""Deterministic discrete-time systems, trajectories and pathwise residuals.

Two system families are supported: linear time-invariant state-space models
and polynomial systems whose right-hand sides are sparse tables of monomial
coefficients over the joint variable ``z = (x, u)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes are inconsistent with a system."""


def _as_matrix(a, name):
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise DimensionError(f"{name} must be a matrix")
    return m


@dataclass(frozen=True)
class LtiSystem:
    """``x+ = A x + B u``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A, B, C, D = (_as_matrix(m, n) for m, n in zip(
            (self.A, self.B, self.C, self.D), "ABCD"))
        n_x, n_u, n_y = A.shape[0], B.shape[1], C.shape[0]
        if A.shape != (n_x, n_x) or B.shape != (n_x, n_u) \
                or C.shape != (n_y, n_x) or D.shape != (n_y, n_u):
            raise DimensionError(
                f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape} D{D.shape}")
        if min(n_x, n_u, n_y) < 1:
            raise DimensionError("n_x, n_u, n_y must all be >= 1")
        for name, m in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, m)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def f(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return x @ self.A.T + u @ self.B.T

    def h(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return x @ self.C.T + u @ self.D.T


Terms = Mapping[tuple, float]


def eval_poly(terms: Terms, z: np.ndarray) -> np.ndarray:
    """Evaluate ``sum coef * prod(z**exps)`` over the last axis of ``z``."""
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape[:-1])
    for exps, coef in terms.items():
        mono = np.ones(z.shape[:-1])
        for k, e in enumerate(exps):
            if e:
                mono = mono * z[..., k] ** e
        out = out + coef * mono
    return out


def poly_degree(terms: Terms) -> int:
    return max((sum(e) for e, c in terms.items() if c != 0), default=0)


@dataclass(frozen=True)
class PolynomialSystem:
    """Polynomial dynamics ``x+ = f(x, u)``, ``y = h(x, u)``.

    ``f_coeffs[i]`` maps multi-indices of length ``n_x + n_u`` to the
    coefficients of state coordinate ``i``; ``h_coeffs`` does the same for
    outputs. ``bounds`` optionally holds ``{"x": (lo, hi), "u": ..., "y": ...}``
    boxes; they are metadata only and never clip a simulation.
    """

    n_x: int
    n_u: int
    f_coeffs: Sequence[Terms]
    h_coeffs: Sequence[Terms]
    bounds: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.f_coeffs) != self.n_x:
            raise DimensionError("need one coefficient table per state coordinate")
        nz = self.n_x + self.n_u
        tables = [dict((tuple(int(e) for e in k), float(v)) for k, v in t.items())
                  for t in (*self.f_coeffs, *self.h_coeffs)]
        for t in tables:
            for exps, coef in t.items():
                if len(exps) != nz:
                    raise DimensionError(f"multi-index {exps} must have length {nz}")
                if not np.isfinite(coef):
                    raise ValueError("coefficients must be finite")
        object.__setattr__(self, "f_coeffs", tuple(tables[:self.n_x]))
        object.__setattr__(self, "h_coeffs", tuple(tables[self.n_x:]))

    @property
    def n_y(self) -> int:
        return len(self.h_coeffs)

    def _joint(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return np.concatenate(_bcat(x, u), axis=-1)

    def f(self, x, u):
        z = self._joint(x, u)
        return np.stack([eval_poly(t, z) for t in self.f_coeffs], axis=-1)

    def h(self, x, u):
        z = self._joint(x, u)
        if not self.h_coeffs:
            return np.zeros(z.shape[:-1] + (0,))
        return np.stack([eval_poly(t, z) for t in self.h_coeffs], axis=-1)


def _bcat(x, u):
    shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
    return (np.broadcast_to(x, shape + x.shape[-1:]),
            np.broadcast_to(u, shape + u.shape[-1:]))


System = LtiSystem | PolynomialSystem


def scalar_quadratic_system() -> PolynomialSystem:
    """``x+ = x**2 + u`` on ``[-1, 1]^3`` with identity output."""
    return PolynomialSystem(
        n_x=1, n_u=1,
        f_coeffs=[{(2, 0): 1.0, (0, 1): 1.0}],
        h_coeffs=[{(1, 0): 1.0}],
        bounds={"x": ([-1.0], [1.0]), "u": ([-1.0], [1.0])},
    )


def nonlinear_benchmark_system() -> PolynomialSystem:
    """Two-state benchmark with a quadratic coupling, ``|u| <= 1``."""
    return PolynomialSystem(
        n_x=2, n_u=1,
        f_coeffs=[
            {(1, 0, 0): 1.0, (0, 1, 0): 0.4, (0, 0, 1): 0.2},
            {(0, 1, 0): 0.8, (0, 0, 1): 1.0, (2, 0, 0): -0.3},
        ],
        h_coeffs=[{(1, 0, 0): 1.0}, {(0, 1, 0): 1.0}],
        bounds={"u": ([-1.0], [1.0])},
    )


def validation_lti_system() -> LtiSystem:
    """SISO, two states, output is the first state."""
    return LtiSystem(A=[[1.0, 0.2], [-0.1, 0.9]], B=[[1.0], [0.5]],
                     C=[[1.0, 0.0]], D=[[0.0]])


@dataclass(frozen=True)
class Trajectory:
    """One path ``(x_0..x_T, u_0..u_{T-1}, y_0..y_{T-1})`` stored as 2-D arrays."""

    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        u = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.outputs, dtype=float)
        if s.ndim != 2:
            raise DimensionError("states must be (T+1, n_x)")
        T = s.shape[0] - 1
        if u.ndim < 2:
            u = u.reshape(T, -1) if u.size or T == 0 else u.reshape(T, 0)
        if y.ndim < 2:
            y = y.reshape(T, -1) if y.size or T == 0 else y.reshape(T, 0)
        if u.ndim != 2 or y.ndim != 2 or u.shape[0] != T or y.shape[0] != T:
            raise DimensionError(
                f"expected {T+1} states, {T} inputs and {T} outputs; "
                f"got {s.shape[0]}, {u.shape[0]}, {y.shape[0]}")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "outputs", y)

    @property
    def T(self) -> int:
        return self.states.shape[0] - 1

    @property
    def shape(self) -> tuple:
        return (self.T, self.states.shape[1], self.inputs.shape[1], self.outputs.shape[1])

    def perturbed(self, t: int, coord: int, delta: float) -> "Trajectory":
        s = self.states.copy()
        s[t, coord] += delta
        return Trajectory(s, self.inputs, self.outputs)


@dataclass(frozen=True)
class ExternalTrajectory:
    """Window of external signals ``w_t = (u_t, y_t)``, input block first."""

    window: np.ndarray
    n_u: int

    @property
    def L(self) -> int:
        return self.window.shape[0]

    def stacked(self) -> np.ndarray:
        return self.window.reshape(-1)


def _check_dims(system, x, u):
    if x.shape[-1] != system.n_x:
        raise DimensionError(f"state has length {x.shape[-1]}, system needs {system.n_x}")
    if u.shape[-1] != system.n_u:
        raise DimensionError(f"input has length {u.shape[-1]}, system needs {system.n_u}")


def simulate(system: System, x0, u_seq) -> Trajectory:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    u_seq = np.asarray(u_seq, dtype=float)
    if u_seq.ndim == 1:
        u_seq = u_seq.reshape(-1, system.n_u)
    _check_dims(system, x0, u_seq)
    T = u_seq.shape[0]
    if T < 1:
        raise DimensionError("need at least one input")
    xs = np.empty((T + 1, system.n_x))
    ys = np.empty((T, system.n_y))
    xs[0] = x0
    for t in range(T):
        xs[t + 1] = system.f(xs[t], u_seq[t])
        ys[t] = system.h(xs[t], u_seq[t])
    return Trajectory(xs, u_seq, ys)


def cost_eval(traj: Trajectory, Q, R_scalar: float, Qf) -> float:
    """Quadratic cost ``sum x'Qx + R |u|^2`` plus terminal ``x_T' Qf x_T``."""
    Q = _as_matrix(Q, "Q")
    Qf = _as_matrix(Qf, "Qf")
    n_x = traj.states.shape[1]
    if Q.shape != (n_x, n_x) or Qf.shape != (n_x, n_x):
        raise DimensionError(f"Q and Qf must be {n_x}x{n_x}")
    x = traj.states
    stage = np.einsum("ti,ij,tj->t", x[:-1], Q, x[:-1]) \
        + R_scalar * np.sum(traj.inputs ** 2, axis=1)
    return float(np.sum(stage) + x[-1] @ Qf @ x[-1])


def step_residuals(system: System, traj: Trajectory) -> np.ndarray:
    """Per-step squared Euclidean mismatch of dynamics plus output."""
    x, u, y = traj.states, traj.inputs, traj.outputs
    if traj.T == 0:
        return np.zeros(0)
    _check_dims(system, x, u)
    if y.shape[1] != system.n_y:
        raise DimensionError(f"output has length {y.shape[1]}, system needs {system.n_y}")
    dx = x[1:] - system.f(x[:-1], u)
    dy = y - system.h(x[:-1], u)
    return np.sum(dx ** 2, axis=1) + np.sum(dy ** 2, axis=1)


def graph_residual(system: System, traj: Trajectory) -> float:
    """Zero iff ``traj`` satisfies the dynamics and output map at every step."""
    return float(np.sum(step_residuals(system, traj)))


def bounds_violations(system: System, traj: Trajectory) -> list:
    """List ``(signal, t, coord, value)`` entries lying outside the box bounds."""
    bounds = getattr(system, "bounds", None) or {}
    out = []
    for key, arr in (("x", traj.states), ("u", traj.inputs), ("y", traj.outputs)):
        if key not in bounds:
            continue
        lo, hi = (np.asarray(b, dtype=float) for b in bounds[key])
        bad = (arr < lo) | (arr > hi)
        for t, k in zip(*np.nonzero(bad)):
            out.append((key, int(t), int(k), float(arr[t, k])))
    return out


def external_projection(traj: Trajectory) -> ExternalTrajectory:
    """Drop the internal state, keep ``w_t = (u_t, y_t)``."""
    return ExternalTrajectory(np.hstack([traj.inputs, traj.outputs]), traj.inputs.shape[1])
