import json

import numpy as np
import pytest

from behavmeas import io as bio
from behavmeas import measure as ms
from behavmeas.cli import main
from behavmeas.stochastic import FiniteKernel
from behavmeas.system_model import (nonlinear_benchmark_system, scalar_quadratic_system,
                                    simulate, validation_lti_system)


def test_trajectory_csv_roundtrip():
    tr = simulate(nonlinear_benchmark_system(), [0.9, 0.4], [[-1.0], [0.691]])
    text = bio.trajectory_to_csv(tr)
    lines = text.splitlines()
    assert lines[0] == "t,x1,x2,u1,y1,y2"
    assert lines[-1].endswith(",,,")
    back = bio.trajectory_from_csv(text)
    for a, b in ((tr.states, back.states), (tr.inputs, back.inputs), (tr.outputs, back.outputs)):
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("system", [validation_lti_system(), nonlinear_benchmark_system(),
                                    scalar_quadratic_system()])
def test_system_json_roundtrip(system):
    back = bio.system_from_json(json.loads(json.dumps(bio.system_to_json(system))))
    x = np.array([[0.3] * system.n_x])
    u = np.array([[-0.2] * system.n_u])
    np.testing.assert_array_equal(back.f(x, u), system.f(x, u))
    np.testing.assert_array_equal(back.h(x, u), system.h(x, u))


def test_path_measure_json_roundtrip():
    mu, _ = ms.weak_vs_graph_counterexample(5)
    back = bio.path_measure_from_json(json.loads(json.dumps(bio.path_measure_to_json(mu))))
    np.testing.assert_array_equal(back.weights, mu.weights)
    for a, b in zip(mu.trajs, back.trajs):
        np.testing.assert_array_equal(a.states, b.states)


def test_tables_roundtrip():
    M = np.array([[1.0, 2.5], [np.pi, -1e-300]])
    assert bio.matrix_to_csv(M).splitlines()[0] == "2,2"
    np.testing.assert_array_equal(bio.matrix_from_csv(bio.matrix_to_csv(M)), M)
    v = np.array([1e-15, 3.0])
    np.testing.assert_array_equal(bio.column_from_csv(bio.column_to_csv("sigma", v)), v)
    tr = simulate(scalar_quadratic_system(), [0.1], [[0.2]])
    table = ms.mixed_moments(ms.PathMeasure.dirac(tr), 0, 3)
    assert bio.moments_from_csv(bio.moments_to_csv(table)) == table
    K = FiniteKernel([np.full((2, 1, 2), 0.5)])
    assert bio.kernel_from_json(json.loads(json.dumps(bio.kernel_to_json(K)))).tables[0].tolist() \
        == K.tables[0].tolist()


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    name = args[0] if not args[0].startswith("-") else args[2]
    report = json.loads((out / f"{name}.json").read_text()) if (out / f"{name}.json").exists() else None
    return code, report, out


def test_simulate_command(tmp_path, capsys):
    code, rep, out = run(tmp_path, "simulate", "--seed", "3")
    assert code == 0 and rep["results"]["T"] == 80
    tr = bio.read_trajectory(out / "trajectory.csv")
    assert tr.T == 80 and len((out / "trajectory.csv").read_text().splitlines()) == 82


def test_hankel_validate_command(tmp_path, capsys):
    code, rep, out = run(tmp_path, "hankel-validate")
    assert code == 0 and rep["results"]["rank"] == 8
    res = bio.column_from_csv((out / "residuals.csv").read_text())
    assert res.size == 200 and res.max() <= 1e-9
    sv = bio.column_from_csv((out / "singular_values.csv").read_text())
    assert sv.size == 12
    assert bio.matrix_from_csv((out / "hankel.csv").read_text()).shape == (12, 75)


def test_hankel_validate_deterministic(tmp_path, capsys):
    _, a, _ = run(tmp_path / "a", "hankel-validate", "--seed", "99")
    _, b, _ = run(tmp_path / "b", "hankel-validate", "--seed", "99")
    assert a["results"] == b["results"]


def test_hankel_validate_constant_input(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"input": "constant"}))
    code, rep, _ = run(tmp_path, "hankel-validate", "--config", str(cfg))
    assert code == 1
    assert rep["checks"]["persistency_of_excitation"]["pass"] is False


def test_seed_before_subcommand(tmp_path, capsys):
    code, rep, _ = run(tmp_path, "--seed", "5", "moments")
    assert code == 0 and rep["seed"] == 5


def test_ocp_solve_zero_cost(tmp_path, capsys):
    cfg = tmp_path / "z.json"
    cfg.write_text(json.dumps({"costs": {"Q": [[0, 0], [0, 0]], "R": 0.0, "Qf": [[0, 0], [0, 0]]},
                               "x_grid": {"lower": [-1.5, -1.5], "upper": [1.5, 1.5], "count": [11, 11]},
                               "u_grid": {"lower": [-1], "upper": [1], "count": [5]}}))
    code, rep, out = run(tmp_path, "ocp-solve", "--config", str(cfg))
    assert code == 0
    assert rep["results"]["p_star"] == 0.0 and rep["results"]["d_star"] == 0.0
    assert (out / "v0.csv").exists() and (out / "policy.csv").exists()


def test_ocp_solve_small_box(tmp_path, capsys):
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps({"x_grid": {"lower": [-1.5, -1.5], "upper": [1.5, 1.5], "count": [21, 21]},
                               "rho0": {"box": [[0.7, 0.2], [1.1, 0.6]]}}))
    code, rep, _ = run(tmp_path, "ocp-solve", "--config", str(cfg))
    d = rep["results"]["distributional"]
    assert code == 0 and d["gap"] == pytest.approx(d["expected_v0"] - d["v0_at_mean"])


def test_counterexamples_command(tmp_path, capsys):
    code, rep, _ = run(tmp_path, "counterexamples")
    r = rep["results"]
    assert code == 0
    assert r["weak_residual"] == 0.0 and abs(r["metric_residual"] - 1 / 3) <= 1e-3
    assert (r["onestep_residual"], r["history_residual"]) == (0.0, 0.5)
    assert r["deterministic"] == {"history": 0.0, "onestep": 0.0}


def test_stochastic_check_counterexample_fails(tmp_path, capsys):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"case": "counterexample"}))
    code, rep, _ = run(tmp_path, "stochastic-check", "--config", str(cfg))
    assert code == 1 and rep["results"]["history"] == 0.5


def test_stochastic_check_files(tmp_path, capsys):
    cfg = tmp_path / "s.json"
    (tmp_path / "k.json").write_text(json.dumps([[[[0.5, 0.5]], [[0.5, 0.5]]]]))
    (tmp_path / "m.json").write_text(json.dumps(
        {"atoms": [{"w": 0.5, "states": [0, 0], "inputs": [0]},
                   {"w": 0.5, "states": [0, 1], "inputs": [0]}]}))
    cfg.write_text(json.dumps({"kernels": "k.json", "measure": "m.json"}))
    code, rep, _ = run(tmp_path, "stochastic-check", "--config", str(cfg))
    assert code == 0 and rep["results"]["history"] == 0.0


def test_deepc_command(tmp_path, capsys):
    _, _, out = run(tmp_path / "h", "hankel-validate")
    H = bio.matrix_from_csv((out / "hankel.csv").read_text())
    (tmp_path / "w.csv").write_text(bio.matrix_to_csv(H[:, [3]]))
    atoms = np.eye(75)[:4]
    (tmp_path / "a.csv").write_text(bio.matrix_to_csv(atoms))
    (tmp_path / "c.json").write_text(json.dumps([{"phi": [1.0] + [0.0] * 11, "bound": 1e9}]))
    args = ["deepc", "--hankel", str(out / "hankel.csv"), "--w-ref", str(tmp_path / "w.csv"),
            "--atoms", str(tmp_path / "a.csv"), "--constraints", str(tmp_path / "c.json"),
            "--L", "6"]
    code, rep, _ = run(tmp_path / "d1", *args)
    assert code == 0
    assert rep["results"]["point"]["value"] <= 1e-18 * float(H[:, 3] @ H[:, 3])
    assert rep["results"]["argmin_index"] == 3 and rep["results"]["value"] == 0.0
    _, rep2, _ = run(tmp_path / "d2", *args)
    assert json.dumps(rep["results"]) == json.dumps(rep2["results"])


def test_usage_errors(tmp_path, capsys):
    assert main(["deepc", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2
    with pytest.raises(SystemExit) as e:
        main(["no-such-command"])
    assert e.value.code == 2
    assert main(["simulate", "--seed", str(2 ** 64), "--out", str(tmp_path)]) == 2


def test_emitted_csvs_roundtrip(tmp_path, capsys):
    _, _, out = run(tmp_path, "moments")
    text = (out / "cloud.csv").read_text()
    rows = [list(map(float, line.split(","))) for line in text.splitlines()[1:]]
    assert len(rows) == 200 and all(abs(v) <= 1 for r in rows for v in r)
