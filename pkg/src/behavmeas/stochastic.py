"""Controlled Markov kernels on finite alphabets and consistency residuals of
path measures against them.

States and inputs are integer labels. Kernels are arrays ``K[t][x, u, x']``;
systems without inputs use a single input label 0.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64

PROB_TOL = 1e-12


def _check_stochastic(P: np.ndarray, what: str):
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=-1) - 1.0) > PROB_TOL):
        raise ValueError(f"{what} rows must be probability vectors")


class FiniteKernel:
    """Per-stage transition tables of shape (S, A, S)."""

    def __init__(self, tables):
        tabs = [np.asarray(K, dtype=float) for K in tables]
        if not tabs:
            raise ValueError("need at least one stage")
        S, A, S2 = tabs[0].shape
        if S != S2:
            raise ValueError("kernel must map states to states")
        for K in tabs:
            if K.shape != (S, A, S):
                raise ValueError("all stages need the same alphabets")
            _check_stochastic(K, "kernel")
        self.tables = tabs
        self.n_states, self.n_inputs = S, A

    @property
    def T(self) -> int:
        return len(self.tables)

    def __getitem__(self, t) -> np.ndarray:
        return self.tables[t]

    @classmethod
    def deterministic(cls, next_table, T: int) -> "FiniteKernel":
        nxt = np.asarray(next_table, dtype=np.int64)
        S, A = nxt.shape
        K = np.zeros((S, A, S))
        K[np.arange(S)[:, None], np.arange(A)[None, :], nxt] = 1.0
        return cls([K] * T)

    def to_json(self) -> list:
        return [K.tolist() for K in self.tables]


@dataclass(frozen=True)
class FinitePath:
    states: tuple   # T+1 labels
    inputs: tuple   # T labels

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        object.__setattr__(self, "inputs", tuple(int(a) for a in self.inputs))
        if len(self.states) != len(self.inputs) + 1:
            raise ValueError("need exactly one more state than inputs")

    @property
    def T(self) -> int:
        return len(self.inputs)


class FinitePathMeasure:
    def __init__(self, weights, paths):
        paths = [p if isinstance(p, FinitePath) else FinitePath(*p) for p in paths]
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.size != len(paths) or not paths:
            raise ValueError("need one weight per path and at least one path")
        if np.any(w < 0) or abs(math.fsum(w) - 1.0) > PROB_TOL:
            raise ValueError("weights must be a probability vector")
        if len({p.T for p in paths}) != 1:
            raise ValueError("all paths need the same horizon")
        self.weights = w / math.fsum(w)
        self.paths = paths

    @property
    def T(self) -> int:
        return self.paths[0].T

    def __len__(self):
        return len(self.paths)

    def initial_law(self, n_states: int) -> np.ndarray:
        rho = np.zeros(n_states)
        np.add.at(rho, [p.states[0] for p in self.paths], self.weights)
        return rho

    def merged(self) -> "FinitePathMeasure":
        acc = defaultdict(list)
        for w, p in zip(self.weights, self.paths):
            acc[p].append(w)
        keys = list(acc)
        return FinitePathMeasure([math.fsum(acc[k]) for k in keys], keys)


def mixture(mu1: FinitePathMeasure, mu2: FinitePathMeasure, lam: float) -> FinitePathMeasure:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("mixture weight must lie in [0, 1]")
    if mu1.T != mu2.T:
        raise ValueError("horizons differ")
    return FinitePathMeasure(np.concatenate([lam * mu1.weights, (1.0 - lam) * mu2.weights]),
                             mu1.paths + mu2.paths)


def _tv(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(p - q)))


def _conditional_residual(mu: FinitePathMeasure, kernels: FiniteKernel, key) -> float:
    worst = 0.0
    S = kernels.n_states
    for t in range(mu.T):
        groups = defaultdict(lambda: np.zeros(S))
        for w, p in zip(mu.weights, mu.paths):
            if w > 0:
                groups[key(p, t)][p.states[t + 1]] += w
        for k, nxt in groups.items():
            x, u = k[-2], k[-1]
            worst = max(worst, _tv(nxt / nxt.sum(), kernels[t][x, u]))
    return worst


def history_kernel_residual(mu: FinitePathMeasure, kernels: FiniteKernel) -> float:
    """Largest TV distance between the law of the next state given the whole
    history and current input and the kernel, over positive-mass prefixes."""
    return _conditional_residual(
        mu, kernels, lambda p, t: p.states[:t] + p.inputs[:t] + (p.states[t], p.inputs[t]))


def onestep_kernel_residual(mu: FinitePathMeasure, kernels: FiniteKernel) -> float:
    """As :func:`history_kernel_residual` but conditioning on the current
    state and input only."""
    return _conditional_residual(mu, kernels, lambda p, t: (p.states[t], p.inputs[t]))


def marginal_kernel_residual(mu: FinitePathMeasure, kernels: FiniteKernel) -> float:
    """Largest gap ``|P(X_{t+1} = s) - E[K_t(s | X_t, U_t)]|`` over t and s."""
    S = kernels.n_states
    worst = 0.0
    for t in range(mu.T):
        actual = np.zeros(S)
        predicted = np.zeros(S)
        for w, p in zip(mu.weights, mu.paths):
            actual[p.states[t + 1]] += w
            predicted += w * kernels[t][p.states[t], p.inputs[t]]
        worst = max(worst, float(np.max(np.abs(actual - predicted))))
    return worst


def _draw(rng: SplitMix64, p: np.ndarray) -> int:
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), p.size - 1))


def sample_from_kernels(rho0, kernels: FiniteKernel, policy=None, mode: str = "exact",
                        seed: int = 0, n: int = 1000) -> FinitePathMeasure:
    """Path measure of the closed loop ``U_t ~ policy[t][x]``, ``X_{t+1} ~ K_t``.

    ``policy[t]`` is an (S, A) table of input probabilities; ``None`` means
    always input 0. ``mode="exact"`` enumerates every positive-probability
    path; ``mode="monte-carlo"`` draws ``n`` equally weighted paths.
    """
    rho0 = np.asarray(rho0, dtype=float)
    S, A, T = kernels.n_states, kernels.n_inputs, kernels.T
    if rho0.shape != (S,):
        raise ValueError("rho0 length differs from the state alphabet")
    _check_stochastic(rho0, "rho0")
    if policy is None:
        pol = np.zeros((S, A))
        pol[:, 0] = 1.0
        policy = [pol] * T
    policy = [np.asarray(k, dtype=float) for k in policy]
    for k in policy:
        if k.shape != (S, A):
            raise ValueError("policy tables must be S x A")
        _check_stochastic(k, "policy")

    if mode == "exact":
        frontier = [((int(s),), (), float(rho0[s])) for s in np.nonzero(rho0 > 0)[0]]
        for t in range(T):
            nxt = []
            for xs, us, w in frontier:
                x = xs[-1]
                for u in np.nonzero(policy[t][x] > 0)[0]:
                    row = kernels[t][x, u]
                    for y in np.nonzero(row > 0)[0]:
                        nxt.append((xs + (int(y),), us + (int(u),), w * policy[t][x, u] * row[y]))
            frontier = nxt
        w = np.array([f[2] for f in frontier])
        return FinitePathMeasure(w / math.fsum(w), [FinitePath(f[0], f[1]) for f in frontier])
    if mode == "monte-carlo":
        if n < 1:
            raise ValueError("need at least one sample")
        rng = SplitMix64(seed)
        paths = []
        for _ in range(n):
            xs = [_draw(rng, rho0)]
            us = []
            for t in range(T):
                us.append(_draw(rng, policy[t][xs[-1]]))
                xs.append(_draw(rng, kernels[t][xs[-1], us[-1]]))
            paths.append(FinitePath(xs, us))
        return FinitePathMeasure(np.full(n, 1.0 / n), paths)
    raise ValueError(f"unknown mode {mode!r}")


def history_counterexample():
    """Fair-coin kernels over two stages with ``X0, X1`` independent fair bits
    and ``X2 = X0``. Returns ``(measure, kernels)``."""
    K = np.full((2, 1, 2), 0.5)
    paths = [FinitePath((a, b, a), (0, 0)) for a in (0, 1) for b in (0, 1)]
    return FinitePathMeasure(np.full(4, 0.25), paths), FiniteKernel([K, K])


def random_kernels(rng, S: int, A: int, T: int,
                   sparsity: float = 0.5) -> FiniteKernel:
    tabs = []
    for _ in range(T):
        K = rng.exponential(size=(S, A, S)) * (rng.random((S, A, S)) < sparsity)
        K[..., 0] += (K.sum(axis=-1) == 0)
        tabs.append(K / K.sum(axis=-1, keepdims=True))
    return FiniteKernel(tabs)


def random_policy(rng, S: int, A: int, T: int) -> list:
    out = []
    for _ in range(T):
        P = rng.exponential(size=(S, A)) * (rng.random((S, A)) < 0.6)
        P[:, 0] += (P.sum(axis=-1) == 0)
        out.append(P / P.sum(axis=-1, keepdims=True))
    return out
