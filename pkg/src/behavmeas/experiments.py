"""End-to-end numerical studies. Each returns plain data (dicts and arrays)
so the command line, the tests and the demo scripts share one code path."""
from __future__ import annotations

import numpy as np

from . import measure as ms
from . import stochastic as st
from .hankel import (MEMBERSHIP_RTOL, RANK_RTOL, HankelMatrix, behavior_rank, check_pe,
                     covariance_transfer_residual, factorize_measure, mean_behavior_residual,
                     pinv_lift, pushforward_measure)
from .measure import DiscreteDistribution
from .occupation_lp import (Grid, QuadraticCost, bellman_solve, discretize,
                            distributional_value, duality_report, extract_policy,
                            solve_occupation_lp)
from .rng import SplitMix64
from .system_model import (LtiSystem, cost_eval, external_projection,
                           nonlinear_benchmark_system, scalar_quadratic_system, simulate,
                           validation_lti_system)

DEFAULT_TOLS = {"rank": RANK_RTOL, "membership": MEMBERSHIP_RTOL, "gap": 1e-8, "residual": 1e-12}


def gaussian_inputs(rng: SplitMix64, T: int, n_u: int) -> np.ndarray:
    return rng.standard_normal((T, n_u))


def simulate_random(system, rng: SplitMix64, T: int, input_kind: str = "gaussian",
                    x0=None, level: float = 1.0):
    """Simulate from a standard-normal (or given) initial state. ``input_kind``
    is ``"gaussian"`` or ``"constant"`` (every input equal to ``level``)."""
    if x0 is None:
        x0 = rng.standard_normal(system.n_x)
    if input_kind == "gaussian":
        u = gaussian_inputs(rng, T, system.n_u)
    elif input_kind == "constant":
        u = np.full((T, system.n_u), float(level))
    else:
        raise ValueError(f"unknown input kind {input_kind!r}")
    return simulate(system, x0, u)


def hankel_validation(system: LtiSystem | None = None, N: int = 80, L: int = 6,
                      n_val: int = 200, n_mean: int = 25, seed: int = 0,
                      input_kind: str = "gaussian", tols: dict | None = None) -> dict:
    """Data Hankel from one seeded run, then fresh windows checked against it.

    Draw order from the generator: data initial state, data inputs, then for
    each validation window its initial state and inputs.
    """
    system = system or validation_lti_system()
    tols = {**DEFAULT_TOLS, **(tols or {})}
    rng = SplitMix64(seed)
    data = simulate_random(system, rng, N, input_kind)
    w_data = external_projection(data).window
    pe = check_pe(data.inputs, L + system.n_x, tols["rank"])
    H = HankelMatrix.from_data(w_data, L, tols["rank"])
    rank, expected, gap = behavior_rank(H, system.n_x, system.n_u)

    windows = np.array([external_projection(simulate_random(system, rng, L)).stacked()
                        for _ in range(n_val)])
    rel = np.array([pinv_lift(H, w)[1] / np.linalg.norm(w) for w in windows])
    mu_mean = DiscreteDistribution.uniform(windows[:n_mean])
    mu = DiscreteDistribution.uniform(windows)
    mean_res = mean_behavior_residual(mu_mean, H)
    try:
        cov_res = covariance_transfer_residual(mu, H, tols["membership"])
    except ValueError:
        cov_res = float("inf")
    if np.all(rel <= tols["membership"]):
        nu = factorize_measure(H, mu, tols["membership"])
        back = pushforward_measure(H, nu).points
        roundtrip = float(np.max(np.linalg.norm(back - windows, axis=1)
                                 / np.linalg.norm(windows, axis=1)))
    else:
        roundtrip = float("inf")
    return {
        "hankel": H,
        "pe": pe,
        "shape": list(H.shape),
        "rank": rank,
        "expected_rank": expected,
        "gap_ratio": gap,
        "singular_values": H.s,
        "residuals": rel,
        "max_residual": float(np.max(rel)),
        "median_residual": float(np.median(rel)),
        "mean_residual": mean_res,
        "covariance_residual": cov_res,
        "roundtrip_residual": roundtrip,
        "windows": windows,
    }


def benchmark_costs() -> QuadraticCost:
    return QuadraticCost(np.diag([1.0, 0.5]), 0.05, np.diag([4.0, 2.0]))


def rollout_grid_policy(system, ocp, greedy, x_grid: Grid, x0, costs: QuadraticCost):
    """Run the tabulated policy on the true dynamics, snapping only to pick inputs."""
    x = np.asarray(x0, dtype=float)
    us = []
    for g in greedy:
        a = g[int(x_grid.nearest(x))]
        u = ocp.input_points[a]
        us.append(u)
        x = system.f(x, u)
    traj = simulate(system, x0, np.array(us))
    return traj, cost_eval(traj, costs.Q, costs.R, costs.Qf)


def ocp_study(system=None, x_lower=(-1.5, -1.5), x_upper=(1.5, 1.5), x_count=(41, 41),
              u_lower=(-1.0,), u_upper=(1.0,), u_count=(21,), costs: QuadraticCost | None = None,
              horizon: int = 2, x0=(0.9, 0.4), rho0_box=None, tols: dict | None = None) -> dict:
    """Grid the system, solve the occupation LP and the Bellman recursion, and
    cross-check them. With ``rho0_box`` the initial law is uniform on the box."""
    system = system or nonlinear_benchmark_system()
    costs = costs or benchmark_costs()
    tols = {**DEFAULT_TOLS, **(tols or {})}
    xg = Grid(x_lower, x_upper, x_count)
    ug = Grid(u_lower, u_upper, u_count)
    if rho0_box is not None:
        ocp = discretize(system, xg, ug, costs, horizon, rho0_box=rho0_box)
    else:
        ocp = discretize(system, xg, ug, costs, horizon, x0=x0)
    vt = bellman_solve(ocp)
    sol = solve_occupation_lp(ocp)
    dual = duality_report(sol, vt, ocp)
    ext = extract_policy(sol, vt, ocp, tol=tols["gap"])
    out = {"ocp": ocp, "grid": xg, "values": vt, "solution": sol, "duality": dual,
           "policy": ext}
    if rho0_box is not None:
        out["distributional"] = distributional_value(ocp, xg, sol, vt)
    else:
        s0 = int(np.nonzero(ocp.rho0)[0][0])
        out["start_point"] = ocp.state_points[s0]
        traj, J = rollout_grid_policy(system, ocp, vt.greedy, xg, x0, costs)
        out["rollout"] = traj
        out["rollout_cost"] = J
    return out


def moment_study(system=None, n_samples: int = 200, max_atoms: int = 4, r: int = 3,
                 seed: int = 0) -> dict:
    """Random box-supported behavioral measures for the scalar quadratic map,
    with their graph-ideal residuals and degree-one projections."""
    system = system or scalar_quadratic_system()
    rng = SplitMix64(seed)
    deg1, ideal, cloud = [], [], []
    for _ in range(n_samples):
        mu = ms.sample_box_measure(system, rng, int(rng.integers(1, max_atoms + 1)))
        m = ms.mixed_moments(mu, 0, 2)
        deg1.append(abs(m[(0, 0, 1)] - m[(2, 0, 0)] - m[(0, 1, 0)]))
        ideal.append(ms.graph_ideal_residual(mu, 0, r, system))
        cloud.append(ms.degree_one_projection(mu, 0))
    return {"degree_one": np.array(deg1), "graph_ideal": np.array(ideal),
            "cloud": np.array(cloud)}


def deterministic_kernel_case() -> dict:
    """Closed loop of ``x+ = (x + u) mod 3`` under uniformly random inputs:
    both kernel residuals vanish."""
    nxt = (np.arange(3)[:, None] + np.arange(2)[None, :]) % 3
    K = st.FiniteKernel.deterministic(nxt, 2)
    mu = st.sample_from_kernels(np.full(3, 1 / 3), K, [np.full((3, 2), 0.5)] * 2)
    return {"onestep": st.onestep_kernel_residual(mu, K),
            "history": st.history_kernel_residual(mu, K)}


def counterexample_study(N: int = 100) -> dict:
    mu, system = ms.weak_vs_graph_counterexample(N)
    smu, K = st.history_counterexample()
    return {
        "weak_residual": ms.weak_operator_residual(mu, system, 2),
        "metric_residual": ms.metric_residual(mu, system),
        "onestep_residual": st.onestep_kernel_residual(smu, K),
        "history_residual": st.history_kernel_residual(smu, K),
        "marginal_residual": st.marginal_kernel_residual(smu, K),
        "deterministic": deterministic_kernel_case(),
    }


def riemann_limit(N: int) -> float:
    """Exact metric residual of the permuted counterexample, ``(N^2-1)/(3N^2)``."""
    return (N * N - 1) / (3.0 * N * N)


def jensen_summary(res: dict) -> dict:
    dv = res["distributional"]
    return {"lp_value": dv.lp_value, "expected_v0": dv.expected_v0,
            "v0_at_mean": dv.v0_at_mean, "gap": dv.jensen_gap,
            "mean_state": dv.mean_state.tolist()}

