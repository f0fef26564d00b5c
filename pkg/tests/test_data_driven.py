import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from behavmeas.data_driven import (ExpectationConstraint, InfeasibleConstraints,
                                   QuadraticPathCost, deepc_point, distributional_weights,
                                   path_expected_cost)
from behavmeas.hankel import HankelMatrix, build_hankel, pushforward_measure
from behavmeas.measure import DiscreteDistribution
from behavmeas.rng import SplitMix64
from behavmeas.system_model import external_projection, simulate, validation_lti_system


@pytest.fixture(scope="module")
def H():
    rng = SplitMix64(0)
    tr = simulate(validation_lti_system(), rng.standard_normal(2), rng.standard_normal((80, 1)))
    return build_hankel(external_projection(tr).window, 6)


def test_cost_validation():
    with pytest.raises(ValueError):
        QuadraticPathCost(np.zeros(2), [[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        QuadraticPathCost(np.zeros(2), -np.eye(2))
    assert QuadraticPathCost([1.0, 2.0])([0.0, 0.0]) == 5.0


def test_deepc_in_column_space(H):
    w_ref = H.M @ np.linspace(-1, 1, 75)
    g, w, val = deepc_point(H, QuadraticPathCost(w_ref))
    assert val <= 1e-18 * (w_ref @ w_ref)
    np.testing.assert_allclose(w, w_ref, atol=1e-10 * np.linalg.norm(w_ref))


def test_deepc_orthogonal(H):
    w_ref = H.left_kernel().T @ np.array([1.0, -2.0, 0.5, 3.0])
    g, w, val = deepc_point(H, QuadraticPathCost(w_ref))
    assert val == pytest.approx(w_ref @ w_ref, rel=1e-9)
    assert np.linalg.norm(w) <= 1e-9 * np.linalg.norm(w_ref)


@given(hst.integers(0, 2 ** 32 - 1))
def test_deepc_random_matches_projector(seed):
    H = _H()
    rng = np.random.default_rng(seed)
    w_ref = rng.normal(size=12)
    _, _, val = deepc_point(H, QuadraticPathCost(w_ref))
    Ur = H.U[:, :H.rank]
    oracle = float(np.sum((w_ref - Ur @ (Ur.T @ w_ref)) ** 2))
    assert val == pytest.approx(oracle, rel=1e-9)


def test_deepc_weighted():
    # toy 2x1 Hankel: col = span(1, 1); weighted projection onto it
    H = HankelMatrix(np.array([[1.0], [1.0]]), 1)
    W = np.diag([1.0, 3.0])
    g, w, val = deepc_point(H, QuadraticPathCost([0.0, 4.0], W))
    # minimize g^2 + 3 (g - 4)^2 -> g = 3, value 9 + 3
    assert g[0] == pytest.approx(3.0) and val == pytest.approx(12.0)


def _H():
    rng = SplitMix64(0)
    tr = simulate(validation_lti_system(), rng.standard_normal(2), rng.standard_normal((80, 1)))
    return build_hankel(external_projection(tr).window, 6)


def toy():
    return HankelMatrix(np.eye(2), 1)


def test_two_atoms_unconstrained():
    cost = lambda w: np.asarray(w)[..., 0] ** 2 + 1.0  # atom costs 1 and 2
    res = distributional_weights(toy(), [[0.0, 0.0], [1.0, 0.0]], cost)
    np.testing.assert_array_equal(res.weights, [1.0, 0.0])
    assert res.value == 1.0 and res.argmin_index == 0


def test_tie_goes_to_lowest_index():
    res = distributional_weights(toy(), [[1.0, 0.0], [-1.0, 0.0]], QuadraticPathCost([0.0, 0.0]))
    assert res.argmin_index == 0 and res.weights[0] == 1.0


def test_two_atoms_equality_midpoint():
    atoms = [[0.0, 0.0], [2.0, 0.0]]
    cost = lambda w: np.asarray(w)[..., 0] ** 2 / 2.0  # costs 0 and 2
    con = ExpectationConstraint([1.0, 0.0], 1.0, "==")
    res = distributional_weights(toy(), atoms, cost, [con])
    np.testing.assert_allclose(res.weights, [0.5, 0.5], atol=1e-12)
    assert res.value == pytest.approx(1.0)


def test_single_atom():
    res = distributional_weights(toy(), [[3.0, 4.0]], QuadraticPathCost([0.0, 0.0]),
                                 [ExpectationConstraint([1.0, 0.0], 5.0)])
    assert res.weights.tolist() == [1.0] and res.value == 25.0


def test_infeasible_constraints_certificate():
    atoms = np.array([[0.0, 0.0], [1.0, 0.0]])
    con = ExpectationConstraint([1.0, 0.0], 2.0, "==")
    with pytest.raises(InfeasibleConstraints) as e:
        distributional_weights(toy(), atoms, QuadraticPathCost([0.0, 0.0]), [con])
    y = e.value.certificate
    A = np.vstack([np.ones(2), atoms[:, 0]])
    assert np.all(A.T @ y <= 1e-9) and np.array([1.0, 2.0]) @ y > 0


@settings(max_examples=50, deadline=None)
@given(hst.integers(0, 2 ** 32 - 1), hst.integers(1, 8))
def test_change_of_variables(seed, n):
    H = _H()
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, 75))
    w = rng.exponential(size=n)
    nu = DiscreteDistribution(w / w.sum(), G)
    cost = QuadraticPathCost(rng.normal(size=12))
    coef_side = math.fsum(nu.weights * cost(G @ H.M.T))
    mu = pushforward_measure(H, nu)
    assert coef_side == pytest.approx(path_expected_cost(mu.weights, mu.points, cost), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(hst.integers(0, 2 ** 32 - 1), hst.integers(1, 10))
def test_unconstrained_is_best_atom_and_constraints_monotone(seed, n):
    H = _H()
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, 75)) * 0.1
    cost = QuadraticPathCost(rng.normal(size=12))
    base = distributional_weights(H, G, cost)
    assert base.value == float(np.min(cost(G @ H.M.T)))
    W = G @ H.M.T
    phis = [rng.normal(size=12) for _ in range(3)]
    # bounds chosen to be satisfied by the uniform mixture, so each prefix is feasible
    cons = [ExpectationConstraint(p, float(np.mean(W @ p)) + 0.01) for p in phis]
    prev = base.value
    for k in range(1, 4):
        v = distributional_weights(H, G, cost, cons[:k]).value
        assert v >= prev - 1e-9
        prev = v
