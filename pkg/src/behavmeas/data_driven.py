"""Optimization over Hankel coefficients: the single-point (DeePC) case and
distributions over a fixed finite atom set."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hankel import HankelMatrix
from .simplex import InfeasibleError, simplex


@dataclass
class QuadraticPathCost:
    """``c(w) = (w - w_ref)' W (w - w_ref)``."""

    w_ref: np.ndarray
    W: np.ndarray | None = None

    def __post_init__(self):
        self.w_ref = np.asarray(self.w_ref, dtype=float).reshape(-1)
        n = self.w_ref.size
        W = np.eye(n) if self.W is None else np.asarray(self.W, dtype=float)
        if W.shape != (n, n):
            raise ValueError(f"weight matrix must be {n}x{n}")
        if not np.allclose(W, W.T, rtol=0, atol=1e-10 * max(1.0, np.max(np.abs(W)))):
            raise ValueError("weight matrix is not symmetric")
        if np.min(np.linalg.eigvalsh(W)) < -1e-10 * max(1.0, np.max(np.abs(W))):
            raise ValueError("weight matrix is not positive semidefinite")
        self.W = W

    def __call__(self, w) -> np.ndarray:
        d = np.asarray(w, dtype=float) - self.w_ref
        return np.einsum("...i,ij,...j->...", d, self.W, d)


@dataclass
class ExpectationConstraint:
    """``E[phi . w + offset] (<= | ==) bound``."""

    phi: np.ndarray
    bound: float
    sense: str = "<="
    offset: float = 0.0

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float).reshape(-1)
        if self.sense not in ("<=", "=="):
            raise ValueError("sense must be '<=' or '=='")
        if not (np.all(np.isfinite(self.phi)) and np.isfinite(self.bound) and np.isfinite(self.offset)):
            raise ValueError("constraint coefficients must be finite")

    def evaluate(self, w) -> np.ndarray:
        return np.asarray(w, dtype=float) @ self.phi + self.offset


def deepc_point(H: HankelMatrix, cost: QuadraticPathCost):
    """Return ``(g, Hg, value)`` minimizing the cost over the column space."""
    M = H.M
    WM = cost.W @ M
    G = M.T @ WM
    g = np.linalg.pinv(G, rcond=1e-12, hermitian=True) @ (WM.T @ cost.w_ref)
    w = M @ g
    return g, w, float(cost(w))


class InfeasibleConstraints(ValueError):
    """``certificate`` holds Farkas multipliers for the rows
    (simplex-sum, then each constraint)."""

    def __init__(self, msg, certificate):
        super().__init__(msg)
        self.certificate = certificate


@dataclass
class DistributionalResult:
    weights: np.ndarray
    value: float
    atom_costs: np.ndarray
    argmin_index: int
    constraint_residuals: list = field(default_factory=list)


def distributional_weights(H: HankelMatrix, atoms: Sequence, cost: QuadraticPathCost | Callable,
                           constraints: Sequence[ExpectationConstraint] = ()) -> DistributionalResult:
    """Best mixture of the given coefficient atoms under linear expectation constraints.

    ``cost`` is any callable on stacked trajectories; it is evaluated once per
    atom, leaving an LP over the probability simplex. ``<=`` rows get a slack
    column. Without constraints the answer is the Dirac on the cheapest atom.
    """
    G = np.atleast_2d(np.asarray(atoms, dtype=float))
    if G.shape[0] == 0:
        raise ValueError("need at least one atom")
    if G.shape[1] != H.shape[1]:
        raise ValueError(f"atoms have length {G.shape[1]}, Hankel has {H.shape[1]} columns")
    Wt = G @ H.M.T
    c = np.asarray(cost(Wt), dtype=float).reshape(-1)
    n = c.size
    best = int(np.argmin(c))
    if not constraints:
        p = np.zeros(n)
        p[best] = 1.0
        return DistributionalResult(p, float(c[best]), c, best)

    n_ineq = sum(k.sense == "<=" for k in constraints)
    A = np.zeros((1 + len(constraints), n + n_ineq))
    b = np.zeros(1 + len(constraints))
    A[0, :n] = 1.0
    b[0] = 1.0
    slack = n
    for i, k in enumerate(constraints, start=1):
        A[i, :n] = k.evaluate(Wt)
        b[i] = k.bound
        if k.sense == "<=":
            A[i, slack] = 1.0
            slack += 1
    try:
        res = simplex(np.concatenate([c, np.zeros(n_ineq)]), A, b)
    except InfeasibleError as e:
        raise InfeasibleConstraints("expectation constraints are infeasible on the atom set",
                                    e.certificate) from e
    p = res.x[:n]
    p = p / math.fsum(p)
    resid = [float(p @ k.evaluate(Wt) - k.bound) for k in constraints]
    return DistributionalResult(p, math.fsum(p * c), c, int(np.argmax(p)), resid)


def path_expected_cost(weights, trajectories, cost) -> float:
    return math.fsum(np.asarray(weights) * np.asarray(cost(np.asarray(trajectories)), dtype=float))
