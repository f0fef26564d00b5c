"""Finite optimal control: occupation-measure LP against Bellman recursion.

A continuous system is discretized onto state/input lattices with
nearest-point transitions. The result is itself an exact finite
deterministic system, so strong duality between the occupation LP and the
backward recursion holds on it without approximation.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .measure import DiscreteDistribution, PathMeasure
from .simplex import simplex

WEIGHT_TOL = 1e-12
TIE_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Rectangular lattice with ``count[k]`` points on ``[lower[k], upper[k]]``."""

    lower: tuple
    upper: tuple
    count: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        n = tuple(int(v) for v in np.atleast_1d(self.count))
        if not (len(lo) == len(hi) == len(n)) or not lo:
            raise ValueError("grid bounds and counts need the same nonzero length")
        if any(k < 2 for k in n):
            raise ValueError("each dimension needs at least two points")
        if any(not (np.isfinite(a) and np.isfinite(b) and a < b) for a, b in zip(lo, hi)):
            raise ValueError("bounds must be finite with lower < upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "count", n)

    @property
    def dim(self) -> int:
        return len(self.count)

    def axes(self):
        return [np.linspace(a, b, k) for a, b, k in zip(self.lower, self.upper, self.count)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def nearest(self, y) -> np.ndarray:
        """Flat index of the nearest lattice point after clamping ``y`` into the box.

        Ties go to the lower index; points within ``TIE_TOL`` grid steps of a
        midpoint count as ties so round-off cannot flip the choice.
        """
        y = np.asarray(y, dtype=float)
        idx = np.zeros(y.shape[:-1], dtype=np.int64)
        for k, (a, b, n) in enumerate(zip(self.lower, self.upper, self.count)):
            step = (b - a) / (n - 1)
            v = np.clip(y[..., k], a, b)
            i = np.clip(np.ceil((v - a) / step - 0.5 - TIE_TOL), 0, n - 1).astype(np.int64)
            idx = idx * n + i
        return idx


@dataclass(frozen=True)
class QuadraticCost:
    """``x'Qx + R |u|^2`` per stage and ``x'Qf x`` at the end."""

    Q: np.ndarray
    R: float
    Qf: np.ndarray

    def stage(self, x, u):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        return np.einsum("...i,ij,...j->...", x, Q, x) + self.R * np.sum(u ** 2, axis=-1)

    def terminal(self, x):
        Qf = np.atleast_2d(np.asarray(self.Qf, dtype=float))
        return np.einsum("...i,ij,...j->...", x, Qf, x)


@dataclass
class FiniteOcp:
    state_points: np.ndarray
    input_points: np.ndarray
    next: np.ndarray
    stage_cost: np.ndarray
    terminal_cost: np.ndarray
    horizon: int
    rho0: np.ndarray

    def __post_init__(self):
        self.state_points = np.asarray(self.state_points, dtype=float).reshape(len(self.state_points), -1)
        self.input_points = np.asarray(self.input_points, dtype=float).reshape(len(self.input_points), -1)
        self.next = np.asarray(self.next, dtype=np.int64)
        self.stage_cost = np.asarray(self.stage_cost, dtype=float)
        self.terminal_cost = np.asarray(self.terminal_cost, dtype=float)
        self.rho0 = np.asarray(self.rho0, dtype=float)
        S, A = self.n_states, self.n_inputs
        if self.next.shape != (S, A) or self.stage_cost.shape != (S, A):
            raise ValueError("transition and cost tables must be S x A")
        if self.terminal_cost.shape != (S,) or self.rho0.shape != (S,):
            raise ValueError("terminal cost and rho0 must have length S")
        if np.any(self.next < 0) or np.any(self.next >= S):
            raise ValueError("transition index out of range")
        if np.any(self.rho0 < 0) or abs(math.fsum(self.rho0) - 1.0) > WEIGHT_TOL:
            raise ValueError("rho0 must be a probability vector")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def n_states(self) -> int:
        return self.state_points.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.input_points.shape[0]

    def with_rho0(self, rho0) -> "FiniteOcp":
        return FiniteOcp(self.state_points, self.input_points, self.next, self.stage_cost,
                         self.terminal_cost, self.horizon, rho0)

    def as_system(self) -> "TabularSystem":
        return TabularSystem(self)


class TabularSystem:
    """The discretized dynamics as a system acting on grid points.

    Points are looked up by exact value, so this only accepts lattice points.
    Outputs are empty.
    """

    def __init__(self, ocp: FiniteOcp):
        self.ocp = ocp
        self.n_x = ocp.state_points.shape[1]
        self.n_u = ocp.input_points.shape[1]
        self.n_y = 0
        self._sidx = {p.tobytes(): i for i, p in enumerate(ocp.state_points)}
        self._uidx = {p.tobytes(): i for i, p in enumerate(ocp.input_points)}

    def indices(self, x, u):
        x = np.asarray(x, dtype=float).reshape(-1, self.n_x)
        u = np.asarray(u, dtype=float).reshape(-1, self.n_u)
        return (np.array([self._sidx[p.tobytes()] for p in x]),
                np.array([self._uidx[p.tobytes()] for p in u]))

    def f(self, x, u):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        s, a = self.indices(x, u)
        return self.ocp.state_points[self.ocp.next[s, a]].reshape(shape + (self.n_x,))

    def h(self, x, u):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        return np.zeros(shape + (0,))

    def path_cost(self, mu: PathMeasure) -> float:
        vals = []
        for tr in mu.trajs:
            s, a = self.indices(tr.states[:-1], tr.inputs)
            sT, _ = self.indices(tr.states[-1:], tr.inputs[:1])
            vals.append(math.fsum(self.ocp.stage_cost[s, a]) + self.ocp.terminal_cost[sT[0]])
        return math.fsum(np.asarray(vals) * mu.weights)


def discretize(system, x_grid: Grid, u_grid: Grid, costs, horizon: int,
               x0=None, rho0_box=None) -> FiniteOcp:
    """Tabulate ``system`` on the lattices.

    Exactly one of ``x0`` (Dirac at the nearest lattice point) and
    ``rho0_box = (lower, upper)`` (uniform over lattice points in the box)
    selects the initial law. Images of ``f`` outside the state box are clamped.
    """
    X = x_grid.points()
    U = u_grid.points()
    if X.shape[1] != system.n_x or U.shape[1] != system.n_u:
        raise ValueError("grid dimensions do not match the system")
    nxt = x_grid.nearest(system.f(X[:, None, :], U[None, :, :]))
    stage = costs.stage(X[:, None, :], U[None, :, :])
    term = costs.terminal(X)
    rho0 = np.zeros(X.shape[0])
    if (x0 is None) == (rho0_box is None):
        raise ValueError("give exactly one of x0 and rho0_box")
    if x0 is not None:
        rho0[int(x_grid.nearest(np.asarray(x0, dtype=float)))] = 1.0
    else:
        lo, hi = (np.asarray(v, dtype=float) for v in rho0_box)
        eps = 1e-12 * (1.0 + np.max(np.abs(X)))
        inside = np.all((X >= lo - eps) & (X <= hi + eps), axis=1)
        if not np.any(inside):
            raise ValueError("initial box contains no grid points")
        rho0[inside] = 1.0 / np.count_nonzero(inside)
    return FiniteOcp(X, U, nxt, stage, term, horizon, rho0)


# -- Bellman -----------------------------------------------------------------

@dataclass
class ValueTables:
    V: list
    greedy: list


def bellman_solve(ocp: FiniteOcp) -> ValueTables:
    """Backward recursion; ``greedy`` keeps the lowest-index minimizer."""
    V = [None] * (ocp.horizon + 1)
    greedy = [None] * ocp.horizon
    V[-1] = ocp.terminal_cost.copy()
    for t in range(ocp.horizon - 1, -1, -1):
        q = ocp.stage_cost + V[t + 1][ocp.next]
        greedy[t] = np.argmin(q, axis=1)
        V[t] = q[np.arange(ocp.n_states), greedy[t]]
    return ValueTables(V, greedy)


# -- occupation LP -----------------------------------------------------------

@dataclass
class OccupationLp:
    """Standard-form LP plus the bookkeeping that maps it back to tables."""

    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    stage_states: list          # reachable state indices per stage 0..T
    lam_offsets: list           # first column of each lambda_t block
    rho_offset: int
    row_offsets: list
    n_inputs: int
    start_basis: np.ndarray | None = field(default=None)


def reachable_states(ocp: FiniteOcp) -> list:
    stages = [np.nonzero(ocp.rho0 > 0)[0]]
    for _ in range(ocp.horizon):
        stages.append(np.unique(ocp.next[stages[-1]].ravel()))
    return stages


def assemble_lp(ocp: FiniteOcp, reachable_only: bool = False) -> OccupationLp:
    """Occupation LP with ``rho_t`` (``t < T``) substituted out.

    Columns are ``lambda_t(x, u)`` block by block, then ``rho_T(x)``; rows are
    the per-stage mass balances. With ``reachable_only`` the states that no
    feasible flow can reach are left out, which drops only variables pinned
    at zero.
    """
    T, A_n = ocp.horizon, ocp.n_inputs
    if reachable_only:
        stages = reachable_states(ocp)
    else:
        stages = [np.arange(ocp.n_states)] * (T + 1)
    row_pos = []
    row_offsets = []
    n_rows = 0
    for st in stages:
        pos = np.full(ocp.n_states, -1, dtype=np.int64)
        pos[st] = np.arange(st.size)
        row_pos.append(pos)
        row_offsets.append(n_rows)
        n_rows += st.size
    rows, cols, vals = [], [], []
    c_parts = []
    lam_offsets = []
    col = 0
    for t in range(T):
        st = stages[t]
        lam_offsets.append(col)
        ncol = st.size * A_n
        j = col + np.arange(ncol)
        s_of = np.repeat(st, A_n)
        a_of = np.tile(np.arange(A_n), st.size)
        # outflow: sum_u lambda_t(x, u) in row (t, x)
        rows.append(row_offsets[t] + row_pos[t][s_of]); cols.append(j); vals.append(np.ones(ncol))
        # inflow into row (t+1, next(x, u))
        dest = ocp.next[s_of, a_of]
        rows.append(row_offsets[t + 1] + row_pos[t + 1][dest]); cols.append(j); vals.append(-np.ones(ncol))
        c_parts.append(ocp.stage_cost[s_of, a_of])
        col += ncol
    rho_offset = col
    stT = stages[T]
    rows.append(row_offsets[T] + np.arange(stT.size))
    cols.append(col + np.arange(stT.size))
    vals.append(np.ones(stT.size))
    c_parts.append(ocp.terminal_cost[stT])
    col += stT.size
    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_rows, col))
    b = np.zeros(n_rows)
    b[:stages[0].size] = ocp.rho0[stages[0]]
    # any fixed policy gives a triangular feasible basis; use input 0 everywhere
    basis = np.concatenate([lam_offsets[t] + np.arange(stages[t].size) * A_n for t in range(T)]
                           + [rho_offset + np.arange(stT.size)])
    return OccupationLp(np.concatenate(c_parts), A, b, stages, lam_offsets, rho_offset,
                        row_offsets, A_n, basis)


@dataclass
class LpSolution:
    lam: list
    rho: list
    objective: float
    duals: list
    basis: np.ndarray
    iterations: int

    @property
    def horizon(self) -> int:
        return len(self.lam)


def lp_solve(lp: OccupationLp, n_states: int, warm_start: bool = True,
             max_iter: int = 10**6) -> LpSolution:
    """Solve the occupation LP with the Bland-rule simplex and unpack the tables.

    ``duals[t][x]`` is the multiplier of the stage-``t`` mass balance at ``x``
    (``nan`` for states left out of the LP).
    """
    res = simplex(lp.c, lp.A, lp.b, basis=lp.start_basis if warm_start else None,
                  max_iter=max_iter)
    T = len(lp.lam_offsets)
    A_n = lp.n_inputs
    lam, rho, duals = [], [], []
    for t in range(T):
        st = lp.stage_states[t]
        block = res.x[lp.lam_offsets[t]:lp.lam_offsets[t] + st.size * A_n].reshape(st.size, A_n)
        full = np.zeros((n_states, A_n))
        full[st] = block
        lam.append(full)
        rho.append(full.sum(axis=1))
    stT = lp.stage_states[T]
    rT = np.zeros(n_states)
    rT[stT] = res.x[lp.rho_offset:lp.rho_offset + stT.size]
    rho.append(rT)
    for t, st in enumerate(lp.stage_states):
        d = np.full(n_states, np.nan)
        d[st] = res.duals[lp.row_offsets[t]:lp.row_offsets[t] + st.size]
        duals.append(d)
    return LpSolution(lam, rho, res.objective, duals, res.basis, res.iterations)


def solve_occupation_lp(ocp: FiniteOcp, reachable_only: bool = True,
                        warm_start: bool = True) -> LpSolution:
    return lp_solve(assemble_lp(ocp, reachable_only), ocp.n_states, warm_start)


def flow_violation(sol: LpSolution, ocp: FiniteOcp) -> float:
    """Largest violation of the mass-balance equations by an LP solution."""
    worst = np.max(np.abs(sol.rho[0] - ocp.rho0))
    for t in range(sol.horizon):
        inflow = np.bincount(ocp.next.ravel(), weights=sol.lam[t].ravel(),
                             minlength=ocp.n_states)
        worst = max(worst, np.max(np.abs(sol.rho[t + 1] - inflow)))
        worst = max(worst, np.max(np.abs(sol.lam[t].sum(axis=1) - sol.rho[t])))
    return float(worst)


# -- duality and policies ----------------------------------------------------

@dataclass
class DualityReport:
    primal: float
    dual: float
    gap: float

    def ok(self, rtol: float = 1e-8) -> bool:
        return self.gap <= rtol * (1.0 + abs(self.primal))


def duality_report(sol: LpSolution, vt: ValueTables, ocp: FiniteOcp) -> DualityReport:
    d = math.fsum(ocp.rho0 * vt.V[0])
    return DualityReport(sol.objective, d, abs(sol.objective - d))


class SlacknessError(RuntimeError):
    pass


@dataclass
class PolicyExtraction:
    policy: list                # per stage: {state index: input index}
    max_slack_on_support: float


def bellman_slack(ocp: FiniteOcp, vt: ValueTables, t: int) -> np.ndarray:
    return ocp.stage_cost + vt.V[t + 1][ocp.next] - vt.V[t][:, None]


def extract_policy(sol: LpSolution, vt: ValueTables, ocp: FiniteOcp,
                   tol: float = 1e-8) -> PolicyExtraction:
    """Check that optimal mass sits only on Bellman-tight actions and return
    the greedy selector on the states the solution visits."""
    worst = 0.0
    policy = []
    for t in range(sol.horizon):
        g = bellman_slack(ocp, vt, t)
        support = sol.lam[t] > tol
        if np.any(support):
            worst = max(worst, float(np.max(g[support])))
        if worst > tol:
            s, a = np.argwhere(support & (g > tol))[0]
            raise SlacknessError(
                f"stage {t}: mass {sol.lam[t][s, a]:.3e} on state {s}, input {a} "
                f"with Bellman slack {g[s, a]:.3e}")
        visited = np.nonzero(sol.rho[t] > tol)[0]
        policy.append({int(s): int(vt.greedy[t][s]) for s in visited})
    return PolicyExtraction(policy, worst)


def policy_occupation(ocp: FiniteOcp, policy) -> tuple:
    """Flow ``(lam, rho)`` of a deterministic Markov policy given as
    ``policy[t][s] -> input index`` (arrays or dicts)."""
    rho = [ocp.rho0.copy()]
    lam = []
    S = np.arange(ocp.n_states)
    for t in range(ocp.horizon):
        act = np.array([policy[t].get(s, 0) if isinstance(policy[t], dict) else policy[t][s]
                        for s in S])
        L = np.zeros((ocp.n_states, ocp.n_inputs))
        L[S, act] = rho[t]
        lam.append(L)
        rho.append(np.bincount(ocp.next[S, act], weights=rho[t], minlength=ocp.n_states))
    return lam, rho


def occupation_cost(ocp: FiniteOcp, lam, rho) -> float:
    return math.fsum([math.fsum((ocp.stage_cost * L).ravel()) for L in lam]
                     + [math.fsum(ocp.terminal_cost * rho[-1])])


def occupation_to_marginals(ocp: FiniteOcp, lam):
    """Convert tabular ``lambda_t`` to point distributions on (x, u)."""
    out = []
    for L in lam:
        s, a = np.nonzero(L > 0)
        w = L[s, a]
        pts = np.hstack([ocp.state_points[s], ocp.input_points[a]])
        out.append(DiscreteDistribution(w / math.fsum(w), pts))
    return out


def rho0_distribution(ocp: FiniteOcp) -> DiscreteDistribution:
    s = np.nonzero(ocp.rho0 > 0)[0]
    return DiscreteDistribution(ocp.rho0[s], ocp.state_points[s])


def enumerate_deterministic_policies(ocp: FiniteOcp, limit: int = 10**5):
    """Minimum cost over every deterministic Markov policy, or ``None`` if
    there are more than ``limit`` of them."""
    S, A, T = ocp.n_states, ocp.n_inputs, ocp.horizon
    if A ** (S * T) > limit:
        return None
    best = math.inf
    for flat in itertools.product(range(A), repeat=S * T):
        pol = np.array(flat).reshape(T, S)
        best = min(best, occupation_cost(ocp, *policy_occupation(ocp, pol)))
    return best


@dataclass
class DistributionalValue:
    lp_value: float
    expected_v0: float
    v0_at_mean: float
    mean_state: np.ndarray
    jensen_gap: float
    v0: np.ndarray


def distributional_value(ocp: FiniteOcp, x_grid: Grid | None = None,
                         sol: LpSolution | None = None,
                         vt: ValueTables | None = None) -> DistributionalValue:
    """LP value for a spread-out initial law next to ``V_0`` at its mean."""
    vt = vt or bellman_solve(ocp)
    sol = sol or solve_occupation_lp(ocp)
    mean = ocp.rho0 @ ocp.state_points
    if x_grid is not None:
        k = int(x_grid.nearest(mean))
    else:
        k = int(np.argmin(np.sum((ocp.state_points - mean) ** 2, axis=1)))
    ev = math.fsum(ocp.rho0 * vt.V[0])
    return DistributionalValue(sol.objective, ev, float(vt.V[0][k]), mean,
                               ev - float(vt.V[0][k]), vt.V[0])


def random_ocp(rng: np.random.Generator, max_states=12, max_inputs=4, max_horizon=4,
               dirac: bool = False) -> FiniteOcp:
    """Random finite instance on abstract 1-D state and input labels."""
    S = int(rng.integers(1, max_states + 1))
    A = int(rng.integers(1, max_inputs + 1))
    T = int(rng.integers(1, max_horizon + 1))
    nxt = rng.integers(0, S, size=(S, A))
    stage = rng.uniform(-1.0, 2.0, size=(S, A))
    term = rng.uniform(-1.0, 2.0, size=S)
    if dirac:
        rho0 = np.zeros(S)
        rho0[rng.integers(0, S)] = 1.0
    else:
        rho0 = rng.exponential(size=S) * (rng.random(S) < 0.7)
        if rho0.sum() == 0:
            rho0[0] = 1.0
        rho0 = rho0 / math.fsum(rho0)
    return FiniteOcp(np.arange(S, dtype=float)[:, None], np.arange(A, dtype=float)[:, None],
                     nxt, stage, term, T, rho0)
