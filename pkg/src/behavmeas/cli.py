"""Command-line harness: ``behavmeas <subcommand> [--config FILE] [--seed N] [--out DIR]``.

Every subcommand writes ``<out>/<subcommand>.json`` (sorted keys) plus any CSV
data, prints the report, and exits 0 when all checks pass, 1 when one fails
and 2 on usage or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import io as bio
from . import stochastic as st
from .data_driven import (ExpectationConstraint, InfeasibleConstraints, QuadraticPathCost,
                          deepc_point, distributional_weights)
from .hankel import HankelMatrix
from .occupation_lp import QuadraticCost, SlacknessError
from .rng import SplitMix64
from .simplex import LpError
from .system_model import (graph_residual, nonlinear_benchmark_system, scalar_quadratic_system,
                           validation_lti_system)

BUILTIN_SYSTEMS = {
    "validation_lti": validation_lti_system,
    "nonlinear_benchmark": nonlinear_benchmark_system,
    "scalar_quadratic": scalar_quadratic_system,
}

TOL_FLAGS = ("rank", "membership", "gap", "residual")


class UsageError(Exception):
    pass


class Context:
    def __init__(self, args, command: str):
        self.command = command
        self.config_path = Path(args.config) if args.config else None
        if self.config_path:
            try:
                self.config = json.loads(self.config_path.read_text())
            except (OSError, json.JSONDecodeError) as e:
                raise UsageError(f"cannot read config: {e}") from e
        else:
            self.config = {}
        seed = args.seed if args.seed is not None else self.config.get("seed", 0)
        if not (isinstance(seed, int) and 0 <= seed < 2 ** 64):
            raise UsageError("seed must be an unsigned 64-bit integer")
        self.seed = seed
        self.out = Path(args.out or self.config.get("out", "."))
        self.tols = {**ex.DEFAULT_TOLS, **self.config.get("tolerances", {})}
        for k in TOL_FLAGS:
            v = getattr(args, f"tol_{k}")
            if v is not None:
                self.tols[k] = v
        self.files: list = []
        self.checks: dict = {}

    def get(self, key, default=None):
        return self.config.get(key, default)

    def path(self, ref) -> Path:
        p = Path(ref)
        if not p.is_absolute() and self.config_path is not None and not p.exists():
            p = self.config_path.parent / p
        if not p.exists():
            raise UsageError(f"missing file {ref}")
        return p

    def system(self, default: str):
        ref = self.get("system", default)
        if isinstance(ref, dict):
            return bio.system_from_json(ref)
        if ref in BUILTIN_SYSTEMS:
            return BUILTIN_SYSTEMS[ref]()
        return bio.read_system(self.path(ref))

    def emit(self, name: str, text: str):
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text)
        self.files.append(name)

    def check(self, name: str, value, tol=None, passed=None):
        if passed is None:
            passed = bool(value <= tol)
        self.checks[name] = {"value": _jsonable(value), "tol": _jsonable(tol), "pass": bool(passed)}

    def finish(self, results: dict) -> int:
        ok = all(c["pass"] for c in self.checks.values())
        report = {"command": self.command, "config": self.config, "seed": self.seed,
                  "tolerances": self.tols, "results": _jsonable(results),
                  "checks": self.checks, "pass": ok, "files": sorted(self.files)}
        text = json.dumps(report, sort_keys=True, indent=2, allow_nan=True) + "\n"
        self.emit(f"{self.command}.json", text)
        sys.stdout.write(text)
        return 0 if ok else 1


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(ctx: Context) -> int:
    system = ctx.system("validation_lti")
    rng = SplitMix64(ctx.seed)
    x0 = ctx.get("x0")
    if "inputs" in ctx.config:
        u = np.asarray(ctx.get("inputs"), dtype=float).reshape(-1, system.n_u)
        traj = ex.simulate(system, x0 if x0 is not None else np.zeros(system.n_x), u)
    else:
        traj = ex.simulate_random(system, rng, int(ctx.get("N", 80)),
                                  ctx.get("input", "gaussian"), x0)
    ctx.emit("trajectory.csv", bio.trajectory_to_csv(traj))
    res = graph_residual(system, traj)
    ctx.check("graph_residual", res, ctx.tols["residual"] * (1.0 + float(np.sum(traj.states ** 2))))
    return ctx.finish({"T": traj.T, "graph_residual": res, "final_state": traj.states[-1]})


def cmd_hankel_validate(ctx: Context) -> int:
    system = ctx.system("validation_lti")
    r = ex.hankel_validation(system, int(ctx.get("N", 80)), int(ctx.get("L", 6)),
                             int(ctx.get("n_val", 200)), int(ctx.get("n_mean", 25)), ctx.seed,
                             ctx.get("input", "gaussian"), ctx.tols)
    ctx.emit("singular_values.csv", bio.column_to_csv("sigma", r["singular_values"]))
    ctx.emit("residuals.csv", bio.column_to_csv("residual", r["residuals"]))
    ctx.emit("hankel.csv", bio.matrix_to_csv(r["hankel"].M))
    m = ctx.tols["membership"]
    ctx.check("persistency_of_excitation", r["pe"].achieved_rank, r["pe"].required_rank,
              passed=r["pe"].passed)
    ctx.check("rank", r["rank"], r["expected_rank"], passed=r["rank"] == r["expected_rank"])
    ctx.check("rank_gap", r["gap_ratio"], passed=r["gap_ratio"] >= ctx.get("min_gap_ratio", 1e6))
    ctx.check("max_residual", r["max_residual"], m)
    ctx.check("mean_residual", r["mean_residual"], m)
    ctx.check("covariance_residual", r["covariance_residual"], m)
    return ctx.finish({k: r[k] for k in ("shape", "rank", "expected_rank", "gap_ratio",
                                          "max_residual", "median_residual", "mean_residual",
                                          "covariance_residual", "roundtrip_residual")}
                      | {"pe": {"order": r["pe"].order, "achieved_rank": r["pe"].achieved_rank,
                                "required_rank": r["pe"].required_rank}})


def _costs(ctx: Context, n_x: int) -> QuadraticCost:
    c = ctx.get("costs", {})
    return QuadraticCost(np.asarray(c.get("Q", np.diag([1.0, 0.5]) if n_x == 2 else np.eye(n_x))),
                         float(c.get("R", 0.05)),
                         np.asarray(c.get("Qf", np.diag([4.0, 2.0]) if n_x == 2 else np.eye(n_x))))


def cmd_ocp_solve(ctx: Context) -> int:
    system = ctx.system("nonlinear_benchmark")
    xg = ctx.get("x_grid", {"lower": [-1.5, -1.5], "upper": [1.5, 1.5], "count": [41, 41]})
    ug = ctx.get("u_grid", {"lower": [-1.0], "upper": [1.0], "count": [21]})
    rho0 = ctx.get("rho0", {"x0": [0.9, 0.4]})
    r = ex.ocp_study(system, xg["lower"], xg["upper"], xg["count"], ug["lower"], ug["upper"],
                     ug["count"], _costs(ctx, system.n_x), int(ctx.get("horizon", 2)),
                     x0=rho0.get("x0"), rho0_box=rho0.get("box"), tols=ctx.tols)
    ocp, vt, sol, d = r["ocp"], r["values"], r["solution"], r["duality"]
    ctx.emit("v0.csv", bio.table_to_csv(
        [f"x{i+1}" for i in range(ocp.state_points.shape[1])] + ["V0"],
        [list(p) + [v] for p, v in zip(ocp.state_points, vt.V[0])]))
    rows = [(t, s, a, *ocp.input_points[a]) for t, pol in enumerate(r["policy"].policy)
            for s, a in sorted(pol.items())]
    ctx.emit("policy.csv", bio.table_to_csv(
        ["t", "state", "input_index"] + [f"u{i+1}" for i in range(ocp.input_points.shape[1])],
        rows))
    lam_rows = [(t, s, a, sol.lam[t][s, a]) for t in range(sol.horizon)
                for s, a in zip(*np.nonzero(sol.lam[t]))]
    ctx.emit("lambda.csv", bio.table_to_csv(["t", "state", "input_index", "mass"], lam_rows))
    ctx.check("duality_gap", d.gap, ctx.tols["gap"] * (1.0 + abs(d.primal)))
    ctx.check("slackness", r["policy"].max_slack_on_support, ctx.tols["gap"])
    res = {"p_star": d.primal, "d_star": d.dual, "gap": d.gap, "lp_iterations": sol.iterations,
           "n_states": ocp.n_states, "n_inputs": ocp.n_inputs}
    if "distributional" in r:
        res["distributional"] = ex.jensen_summary(r)
    else:
        res["start_point"] = r["start_point"]
        res["rollout_cost"] = r["rollout_cost"]
        res["rollout_inputs"] = r["rollout"].inputs.ravel()
        if "reference_cost" in ctx.config:
            res["reference_cost"] = ctx.get("reference_cost")
    return ctx.finish(res)


def cmd_moments(ctx: Context) -> int:
    system = ctx.system("scalar_quadratic")
    r = ex.moment_study(system, int(ctx.get("n_samples", 200)), int(ctx.get("max_atoms", 4)),
                        int(ctx.get("r", 3)), ctx.seed)
    ctx.emit("cloud.csv", bio.table_to_csv(["E_xu", "E_xnext"], r["cloud"].tolist()))
    tol = ctx.tols["residual"]
    ctx.check("degree_one", float(np.max(r["degree_one"])), tol)
    ctx.check("graph_ideal", float(np.max(r["graph_ideal"])), tol)
    ctx.check("cloud_in_box", float(np.max(np.abs(r["cloud"]))), 1.0)
    return ctx.finish({"n_samples": len(r["cloud"]), "max_degree_one": np.max(r["degree_one"]),
                       "max_graph_ideal": np.max(r["graph_ideal"])})


def cmd_counterexamples(ctx: Context) -> int:
    N = int(ctx.get("N", 100))
    r = ex.counterexample_study(N)
    ctx.check("weak_residual_zero", r["weak_residual"], passed=r["weak_residual"] == 0.0)
    ctx.check("metric_residual", abs(r["metric_residual"] - 1 / 3), 1e-3)
    ctx.check("onestep_zero", r["onestep_residual"], passed=r["onestep_residual"] == 0.0)
    ctx.check("history_half", r["history_residual"], passed=r["history_residual"] == 0.5)
    det = r["deterministic"]
    ctx.check("deterministic_sanity", max(det.values()), passed=max(det.values()) == 0.0)
    return ctx.finish(r)


def _stochastic_measure(d) -> st.FinitePathMeasure:
    return st.FinitePathMeasure([a["w"] for a in d["atoms"]],
                                [st.FinitePath(a["states"], a["inputs"]) for a in d["atoms"]])


def cmd_stochastic_check(ctx: Context) -> int:
    if "kernels" in ctx.config:
        kref = ctx.get("kernels")
        K = bio.kernel_from_json(kref if isinstance(kref, list)
                                 else json.loads(ctx.path(kref).read_text()))
        mref = ctx.get("measure")
        if mref is None:
            raise UsageError("config names kernels but no measure")
        mu = _stochastic_measure(mref if isinstance(mref, dict)
                                 else json.loads(ctx.path(mref).read_text()))
    elif ctx.get("case") == "counterexample":
        mu, K = st.history_counterexample()
    else:
        # seeded random closed loop, enumerated exactly
        rng = SplitMix64(ctx.seed)
        S, A, T = (int(ctx.get(k, d)) for k, d in (("n_states", 3), ("n_inputs", 2), ("T", 3)))
        K = st.random_kernels(rng, S, A, T)
        mu = st.sample_from_kernels(np.full(S, 1.0 / S), K, st.random_policy(rng, S, A, T))
    if any(max(p.states) >= K.n_states or max(p.inputs, default=0) >= K.n_inputs for p in mu.paths):
        raise UsageError("measure uses labels outside the kernel alphabets")
    res = {"history": st.history_kernel_residual(mu, K),
           "onestep": st.onestep_kernel_residual(mu, K),
           "marginal": st.marginal_kernel_residual(mu, K)}
    ctx.check("history_consistent", res["history"], ctx.tols["residual"])
    return ctx.finish(res)


def _read_vector(path: Path) -> np.ndarray:
    text = path.read_text()
    first = text.splitlines()[0].split(",")
    if len(first) == 2 and all(s.strip().isdigit() for s in first):
        return bio.matrix_from_csv(text).reshape(-1)
    return bio.column_from_csv(text)


def cmd_deepc(ctx: Context) -> int:
    if ctx.get("hankel") is None or ctx.get("w_ref") is None:
        raise UsageError("deepc needs 'hankel' and 'w_ref' (config or flags)")
    H = HankelMatrix(bio.read_matrix(ctx.path(ctx.get("hankel"))), int(ctx.get("L", 1)))
    w_ref = _read_vector(ctx.path(ctx.get("w_ref")))
    W = bio.read_matrix(ctx.path(ctx.get("weight"))) if ctx.get("weight") else None
    cost = QuadraticPathCost(w_ref, W)
    g, w, val = deepc_point(H, cost)
    res = {"point": {"value": val, "w": w}}
    ctx.check("point_residual", float(np.linalg.norm(H.M @ g - w)),
              ctx.tols["membership"] * max(1.0, float(np.linalg.norm(w))))
    if ctx.get("atoms"):
        atoms = bio.read_matrix(ctx.path(ctx.get("atoms")))
        cons = []
        if ctx.get("constraints"):
            cref = ctx.get("constraints")
            items = cref if isinstance(cref, list) else json.loads(ctx.path(cref).read_text())
            cons = [ExpectationConstraint(c["phi"], c["bound"], c.get("sense", "<="),
                                          c.get("offset", 0.0)) for c in items]
        try:
            d = distributional_weights(H, atoms, cost, cons)
        except InfeasibleConstraints as e:
            res["infeasible"] = True
            res["certificate"] = e.certificate
            ctx.check("feasible", 1.0, passed=False)
            return ctx.finish(res)
        res.update(value=d.value, weights=d.weights, argmin_index=d.argmin_index,
                   residuals=d.constraint_residuals)
        viol = [max(r, 0.0) if c.sense == "<=" else abs(r)
                for r, c in zip(d.constraint_residuals, cons)]
        ctx.check("constraints", max(viol, default=0.0), ctx.tols["membership"])
    return ctx.finish(res)


COMMANDS = {
    "simulate": cmd_simulate,
    "hankel-validate": cmd_hankel_validate,
    "ocp-solve": cmd_ocp_solve,
    "moments": cmd_moments,
    "deepc": cmd_deepc,
    "counterexamples": cmd_counterexamples,
    "stochastic-check": cmd_stochastic_check,
}


def _common(default) -> argparse.ArgumentParser:
    # subparsers get SUPPRESS so flags given before the subcommand survive
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default, help="JSON config file")
    common.add_argument("--seed", type=int, default=default,
                        help="splitmix64 seed (unsigned 64-bit)")
    common.add_argument("--out", default=default, help="output directory (default: current)")
    for k in TOL_FLAGS:
        common.add_argument(f"--tol-{k}", type=float, dest=f"tol_{k}", default=default)
    return common


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="behavmeas", parents=[_common(None)],
                                description="Behavioral-measure numerical studies.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[_common(argparse.SUPPRESS)])
        if name == "deepc":
            for flag in ("hankel", "w-ref", "weight", "atoms", "constraints"):
                sp.add_argument(f"--{flag}", dest=flag.replace("-", "_"))
            sp.add_argument("--L", type=int, dest="L")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        ctx = Context(args, args.command)
        if args.command == "deepc":
            for k in ("hankel", "w_ref", "weight", "atoms", "constraints", "L"):
                v = getattr(args, k)
                if v is not None:
                    ctx.config[k] = v
        return COMMANDS[args.command](ctx)
    except (UsageError, OSError, KeyError, ValueError, TypeError, json.JSONDecodeError) as e:
        print(f"behavmeas {args.command}: {e}", file=sys.stderr)
        return 2
    except (LpError, SlacknessError) as e:
        print(f"behavmeas {args.command}: solver failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
