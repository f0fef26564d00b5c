"""Finite-support probability measures on trajectory space.

A :class:`PathMeasure` is a weighted list of :class:`Trajectory` atoms. The
functions here test membership in the set of measures carried by admissible
paths, compute the weaker marginal (operator) identities, extract occupation
marginals and rebuild a measure from them through Markov kernels.

Integrals are accumulated with :func:`math.fsum`, so they do not depend on
atom order. Two measures that differ only by a permutation of values give
bit-identical moments.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rng import SplitMix64
from .system_model import (DimensionError, System, Trajectory, eval_poly,
                           graph_residual, poly_degree, scalar_quadratic_system,
                           simulate)

WEIGHT_TOL = 1e-12


def _normalized(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size == 0:
        raise ValueError("measure needs at least one atom")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = math.fsum(w)
    if abs(total - 1.0) > WEIGHT_TOL:
        raise ValueError(f"weights sum to {total!r}, not 1")
    return w / total if total != 1.0 else w


def expect(weights: np.ndarray, values: np.ndarray) -> float:
    """Order-independent ``sum w_i v_i``."""
    return math.fsum(np.asarray(weights) * np.asarray(values))


def monomial_exponents(n_vars: int, max_degree: int, min_degree: int = 1):
    """All exponent tuples over ``n_vars`` with total degree in the given range."""
    out = []
    for d in range(min_degree, max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(n_vars), d):
            e = [0] * n_vars
            for k in combo:
                e[k] += 1
            out.append(tuple(e))
    return out


def _monomial(points: np.ndarray, exps) -> np.ndarray:
    v = np.ones(points.shape[0])
    for k, e in enumerate(exps):
        if e:
            v = v * points[:, k] ** e
    return v


class DiscreteDistribution:
    """Weighted point cloud ``sum_i w_i delta_{p_i}`` in ``R^d``."""

    def __init__(self, weights, points):
        self.weights = _normalized(weights)
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if self.weights.size > 1 or pts.size == 1 \
                else pts.reshape(1, -1)
        if pts.shape[0] != self.weights.size:
            raise DimensionError("one point per weight")
        self.points = pts

    @classmethod
    def dirac(cls, point):
        return cls([1.0], np.asarray(point, dtype=float).reshape(1, -1))

    @classmethod
    def uniform(cls, points):
        pts = np.asarray(points, dtype=float)
        return cls(np.full(pts.shape[0], 1.0 / pts.shape[0]), pts)

    @property
    def atoms(self):
        return list(zip(self.weights.tolist(), self.points))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.weights.size

    def mean(self) -> np.ndarray:
        return np.array([expect(self.weights, self.points[:, k]) for k in range(self.dim)])

    def covariance(self) -> np.ndarray:
        c = self.points - self.mean()
        return (c * self.weights[:, None]).T @ c

    def expect(self, values) -> float:
        return expect(self.weights, values)

    def merged(self) -> "DiscreteDistribution":
        """Sum the weights of exactly equal points, keeping first-seen order."""
        index = {}
        w = []
        pts = []
        for wi, p in zip(self.weights, self.points):
            key = p.tobytes()
            if key in index:
                w[index[key]].append(wi)
            else:
                index[key] = len(pts)
                pts.append(p)
                w.append([wi])
        return DiscreteDistribution([math.fsum(x) for x in w], np.array(pts))

    def pushforward(self, fn) -> "DiscreteDistribution":
        return DiscreteDistribution(self.weights, np.asarray(fn(self.points)).reshape(len(self), -1))


class PathMeasure:
    """Finite mixture of Dirac masses on trajectories."""

    def __init__(self, weights, trajs: Sequence[Trajectory]):
        self.weights = _normalized(weights)
        self.trajs = list(trajs)
        if len(self.trajs) != self.weights.size:
            raise DimensionError("one trajectory per weight")
        shapes = {tr.shape for tr in self.trajs}
        if len(shapes) != 1:
            raise DimensionError(f"atoms have mixed shapes {sorted(shapes)}")

    @classmethod
    def dirac(cls, traj: Trajectory) -> "PathMeasure":
        return cls([1.0], [traj])

    @classmethod
    def uniform(cls, trajs) -> "PathMeasure":
        trajs = list(trajs)
        return cls(np.full(len(trajs), 1.0 / len(trajs)), trajs)

    @property
    def atoms(self):
        return list(zip(self.weights.tolist(), self.trajs))

    @property
    def shape(self) -> tuple:
        return self.trajs[0].shape

    @property
    def T(self) -> int:
        return self.shape[0]

    def __len__(self):
        return len(self.trajs)

    def states(self, t: int) -> np.ndarray:
        return np.array([tr.states[t] for tr in self.trajs])

    def inputs(self, t: int) -> np.ndarray:
        return np.array([tr.inputs[t] for tr in self.trajs])

    def outputs(self, t: int) -> np.ndarray:
        return np.array([tr.outputs[t] for tr in self.trajs])

    def initial_law(self) -> DiscreteDistribution:
        return DiscreteDistribution(self.weights, self.states(0)).merged()


# -- membership and residuals ------------------------------------------------

def is_behavioral(mu: PathMeasure, system: System, tol: float = 1e-12):
    """Return ``(ok, worst)`` where ``worst`` is the largest atom residual."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if len(mu) == 0:
        raise ValueError("empty measure")
    worst = max(graph_residual(system, tr) for tr in mu.trajs)
    return worst <= tol, worst


def metric_residual(mu: PathMeasure, system: System) -> float:
    return expect(mu.weights, [graph_residual(system, tr) for tr in mu.trajs])


def weak_operator_residual(mu: PathMeasure, system: System, max_degree: int = 2) -> float:
    """Largest gap between the laws of ``X_{t+1}`` and ``f(X_t, U_t)`` (and of
    ``Y_t`` and ``h(X_t, U_t)``) as seen by monomial test functions."""
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")
    worst = 0.0
    w = mu.weights
    x_exps = monomial_exponents(system.n_x, max_degree)
    y_exps = monomial_exponents(system.n_y, max_degree) if system.n_y else []
    for t in range(mu.T):
        x, u = mu.states(t), mu.inputs(t)
        pairs = [(mu.states(t + 1), system.f(x, u), x_exps),
                 (mu.outputs(t), system.h(x, u), y_exps)]
        for actual, predicted, exps in pairs:
            for e in exps:
                gap = abs(expect(w, _monomial(actual, e)) - expect(w, _monomial(predicted, e)))
                worst = max(worst, gap)
    return worst


def weak_vs_graph_counterexample(N: int):
    """Scalar ``T = 1`` measure whose weak identities hold but graph support fails.

    ``f(x, u) = u`` and ``h = 0``; atom ``i`` has ``x_0 = 0``,
    ``u_0 = (i - 1/2)/N`` and ``x_1 = u`` of the mirrored atom, so the laws of
    ``X_1`` and ``U_0`` coincide while the coupling is reversed.

    Returns ``(measure, system)``.
    """
    from .system_model import PolynomialSystem
    if N < 2:
        raise ValueError("N must be >= 2")
    system = PolynomialSystem(n_x=1, n_u=1, f_coeffs=[{(0, 1): 1.0}], h_coeffs=[{}])
    u = (np.arange(1, N + 1) - 0.5) / N
    trajs = [Trajectory([[0.0], [u[N - 1 - i]]], [[u[i]]], [[0.0]]) for i in range(N)]
    return PathMeasure(np.full(N, 1.0 / N), trajs), system


# -- convex structure --------------------------------------------------------

def mixture(mu1: PathMeasure, mu2: PathMeasure, lam: float) -> PathMeasure:
    """``lam * mu1 + (1 - lam) * mu2``; zero-weight components are dropped."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    if mu1.shape != mu2.shape:
        raise DimensionError("measures live on different trajectory spaces")
    if lam == 1.0:
        return PathMeasure(mu1.weights, mu1.trajs)
    if lam == 0.0:
        return PathMeasure(mu2.weights, mu2.trajs)
    w = np.concatenate([lam * mu1.weights, (1.0 - lam) * mu2.weights])
    return PathMeasure(w / math.fsum(w), mu1.trajs + mu2.trajs)


def decompose(mu: PathMeasure, split):
    """Split ``mu`` into its conditionals on an atom set and its complement.

    Returns ``(mu_A, mu_Ac, mass_A)`` with ``mixture(mu_A, mu_Ac, mass_A) == mu``.
    """
    idx = sorted(set(int(i) for i in split))
    rest = [i for i in range(len(mu)) if i not in idx]
    mass = math.fsum(mu.weights[idx]) if idx else 0.0
    if not idx or not rest or mass <= 0.0 or mass >= 1.0:
        raise ValueError("split must carry mass strictly between 0 and 1")
    wa = mu.weights[idx]
    wc = mu.weights[rest]
    return (PathMeasure(wa / math.fsum(wa), [mu.trajs[i] for i in idx]),
            PathMeasure(wc / math.fsum(wc), [mu.trajs[i] for i in rest]),
            mass)


# -- occupation marginals ----------------------------------------------------

@dataclass
class OccupationMarginals:
    rho: list
    lam: list

    @property
    def T(self) -> int:
        return len(self.lam)


def occupation_marginals(mu: PathMeasure) -> OccupationMarginals:
    rho = [DiscreteDistribution(mu.weights, mu.states(t)).merged() for t in range(mu.T + 1)]
    lam = [DiscreteDistribution(mu.weights, np.hstack([mu.states(t), mu.inputs(t)])).merged()
           for t in range(mu.T)]
    return OccupationMarginals(rho, lam)


def flow_residuals(m: OccupationMarginals, system: System, max_degree: int = 2,
                   mu: PathMeasure | None = None):
    """Marginal, dynamics and output flow residuals under monomial tests.

    The output residual compares ``(X_t, U_t, Y_t)`` under ``mu`` with
    ``(x, u, h(x, u))`` under ``lambda_t``; it is 0 when ``mu`` is omitted.
    """
    n_x = system.n_x
    r_marg = r_dyn = r_out = 0.0
    x_exps = monomial_exponents(n_x, max_degree)
    for t in range(m.T):
        lam = m.lam[t]
        if lam.dim != n_x + system.n_u or m.rho[t].dim != n_x:
            raise DimensionError("marginals do not match the system dimensions")
        xl, ul = lam.points[:, :n_x], lam.points[:, n_x:]
        fx = system.f(xl, ul)
        for e in x_exps:
            r_marg = max(r_marg, abs(lam.expect(_monomial(xl, e))
                                     - m.rho[t].expect(_monomial(m.rho[t].points, e))))
            r_dyn = max(r_dyn, abs(lam.expect(_monomial(fx, e))
                                   - m.rho[t + 1].expect(_monomial(m.rho[t + 1].points, e))))
        if mu is not None:
            joint_mu = np.hstack([mu.states(t), mu.inputs(t), mu.outputs(t)])
            joint_lam = np.hstack([xl, ul, system.h(xl, ul)])
            for e in monomial_exponents(joint_mu.shape[1], max_degree):
                r_out = max(r_out, abs(expect(mu.weights, _monomial(joint_mu, e))
                                       - lam.expect(_monomial(joint_lam, e))))
    return r_marg, r_dyn, r_out


def _match(points: np.ndarray, p: np.ndarray, tol: float) -> int:
    d = np.max(np.abs(points - p), axis=1)
    k = int(np.argmin(d))
    if d[k] > tol:
        raise ValueError(f"point {p} has no support match within {tol}")
    return k


def reconstruct_markov(rho0: DiscreteDistribution, lambdas: Sequence[DiscreteDistribution],
                       system: System, tol: float = 1e-9) -> PathMeasure:
    """Markov-policy lift of one-step marginals to a path measure.

    Kernels ``kappa_t(u | x) = lambda_t(x, u) / rho_t(x)`` are read off each
    ``lambda_t``; paths are enumerated with deterministic transitions
    ``x+ = f(x, u)`` and outputs ``h(x, u)``. The result reproduces every
    ``lambda_t`` but not necessarily the couplings of a measure they came from.
    """
    n_x = system.n_x
    rho = rho0.merged()
    # paths: (weight, states, inputs, outputs) with arrays grown per step
    paths = [(w, [p], [], []) for w, p in zip(rho.weights, rho.points)]
    for t, lam in enumerate(lambdas):
        lam = lam.merged()
        xl, ul = lam.points[:, :n_x], lam.points[:, n_x:]
        owner = np.array([_match(rho.points, x, tol) for x in xl])
        mass = np.array([math.fsum(lam.weights[owner == k]) for k in range(len(rho))])
        if np.max(np.abs(mass - rho.weights)) > tol:
            raise ValueError(f"stage {t}: input marginal of lambda does not match rho_t")
        new_paths = []
        for w, xs, us, ys in paths:
            x = xs[-1]
            k = _match(rho.points, x, tol)
            for j in np.nonzero(owner == k)[0]:
                kappa = lam.weights[j] / rho.weights[k]
                if kappa <= 0.0:
                    continue
                u = ul[j]
                new_paths.append((w * kappa, xs + [system.f(x, u)], us + [u], ys + [system.h(x, u)]))
        paths = new_paths
        nxt = system.f(xl, ul)
        rho = DiscreteDistribution(lam.weights, nxt.reshape(len(lam), n_x)).merged()
    trajs = [Trajectory(np.array(xs), np.array(us).reshape(len(us), system.n_u),
                        np.array(ys).reshape(len(ys), system.n_y)) for _, xs, us, ys in paths]
    w = np.array([p[0] for p in paths])
    return PathMeasure(w / math.fsum(w), trajs)


# -- moments -----------------------------------------------------------------

def psi_moment(mu: PathMeasure) -> float:
    """Second-moment functional used for tightness bounds."""
    vals = [float(np.sum(tr.states ** 2) + np.sum(tr.inputs ** 2) + np.sum(tr.outputs ** 2))
            for tr in mu.trajs]
    return expect(mu.weights, vals)


def _scalar_step(mu: PathMeasure, t: int):
    T, n_x, n_u, _ = mu.shape
    if n_x != 1 or n_u != 1:
        raise DimensionError("mixed moments need a scalar state and input")
    if not 0 <= t < T:
        raise ValueError(f"t must lie in [0, {T})")
    return mu.states(t)[:, 0], mu.inputs(t)[:, 0], mu.states(t + 1)[:, 0]


def mixed_moments(mu: PathMeasure, t: int, max_total_degree: int) -> dict:
    """``{(i, j, k): E[x_t^i u_t^j x_{t+1}^k]}`` for ``i + j + k <= max_total_degree``."""
    x, u, xn = _scalar_step(mu, t)
    table = {}
    for d in range(max_total_degree + 1):
        for i in range(d + 1):
            for j in range(d - i + 1):
                k = d - i - j
                table[(i, j, k)] = expect(mu.weights, x ** i * u ** j * xn ** k)
    return table


def graph_ideal_residual(mu: PathMeasure, t: int, r: int, system: System | None = None) -> float:
    """Largest violation of ``E[x^i u^j x'^k (x' - f(x, u))] = 0`` over
    multipliers with ``i + j + k + deg f <= 2r``, evaluated from the moment
    table. Defaults to ``x' = x**2 + u``."""
    system = system or scalar_quadratic_system()
    if system.n_x != 1 or system.n_u != 1 or not hasattr(system, "f_coeffs"):
        raise ValueError("graph-ideal residuals need a scalar polynomial system")
    terms = system.f_coeffs[0]
    deg = poly_degree(terms)
    m = mixed_moments(mu, t, 2 * r + 1)
    worst = 0.0
    for total in range(0, 2 * r - deg + 1):
        for i in range(total + 1):
            for j in range(total - i + 1):
                k = total - i - j
                val = m[(i, j, k + 1)] - math.fsum(
                    c * m[(i + a, j + b, k)] for (a, b), c in terms.items())
                worst = max(worst, abs(val))
    return worst


def degree_one_projection(mu: PathMeasure, t: int = 0):
    """``(E[x_t u_t], E[x_{t+1}])`` for a scalar measure."""
    x, u, xn = _scalar_step(mu, t)
    return expect(mu.weights, x * u), expect(mu.weights, xn)


def sample_box_measure(system: System, rng, n_atoms: int) -> PathMeasure:
    """Random one-step behavioral measure on the ``[-1, 1]`` boxes of a scalar
    system, by rejection on ``f(x, u) in [-1, 1]``."""
    trajs = []
    while len(trajs) < n_atoms:
        x, u = rng.uniform(-1.0, 1.0, size=2)
        xn = system.f(np.array([x]), np.array([u]))
        if abs(xn[0]) <= 1.0:
            trajs.append(simulate(system, [x], [[u]]))
    w = np.asarray(rng.exponential(size=n_atoms))
    return PathMeasure(w / math.fsum(w), trajs)


def projection_cloud(system: System, n_samples: int, seed: int, max_atoms: int = 4) -> np.ndarray:
    """Degree-one projections of ``n_samples`` random box-supported measures."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = SplitMix64(seed)
    pts = np.empty((n_samples, 2))
    for s in range(n_samples):
        mu = sample_box_measure(system, rng, int(rng.integers(1, max_atoms + 1)))
        pts[s] = degree_one_projection(mu, 0)
    return pts


__all__ = [
    "DiscreteDistribution", "PathMeasure", "OccupationMarginals", "expect",
    "monomial_exponents", "is_behavioral", "metric_residual",
    "weak_operator_residual", "weak_vs_graph_counterexample", "mixture",
    "decompose", "occupation_marginals", "flow_residuals", "reconstruct_markov",
    "psi_moment", "mixed_moments", "graph_ideal_residual",
    "degree_one_projection", "sample_box_measure", "projection_cloud",
    "eval_poly",
]
