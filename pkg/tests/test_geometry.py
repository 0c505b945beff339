import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from containment.experiments import batch_hull_distances
from containment.geometry import ConvexHullRef, containment_error, distance_to_hull, project_to_hull


def _slsqp_distance(p, X):
    m = X.shape[0]
    res = minimize(lambda w: np.sum((w @ X - p) ** 2), np.full(m, 1.0 / m), method="SLSQP",
                   bounds=[(0, 1)] * m, constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1}],
                   options={"ftol": 1e-14, "maxiter": 500})
    return float(np.sqrt(max(res.fun, 0.0)))


def test_square_hull():
    X = np.array([[0, 0], [1, 0], [0, 1], [1, 1.0]])
    assert distance_to_hull([0.5, 0.5], X) == 0.0
    assert distance_to_hull([2.0, 0.5], X) == pytest.approx(1.0)
    assert distance_to_hull([2.0, 2.0], X) == pytest.approx(np.sqrt(2))


def test_single_leader_is_euclidean():
    assert distance_to_hull([3.0, 4.0], ConvexHullRef([[0.0, 0.0]])) == 5.0


def test_generator_points_are_inside():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(6, 3))
    for x in X:
        assert distance_to_hull(x, X) == 0.0


def test_weights_reconstruct_projection():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(5, 2))
    p = np.array([4.0, -3.0])
    proj = project_to_hull(p, X)
    assert proj.converged
    assert proj.weights.min() >= 0 and proj.weights.sum() == pytest.approx(1.0)
    assert np.linalg.norm(proj.weights @ X - p) == pytest.approx(proj.distance, rel=1e-9)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 7), st.integers(1, 4))
def test_agrees_with_generic_solver(seed, m, dim):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m, dim))
    p = rng.normal(scale=3.0, size=dim)
    d = distance_to_hull(p, X)
    ref = _slsqp_distance(p, X)
    # the iterative answer can only be better than a generic local solver, never worse
    assert d <= ref + 1e-7
    assert d >= ref - 1e-5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_batched_distances_match_scalar(seed, m):
    rng = np.random.default_rng(seed)
    x_R = rng.normal(size=(3, m, 2)) * 3
    x_F = rng.normal(size=(3, 5, 2)) * 4
    got = batch_hull_distances(x_F, x_R)
    ref = np.array([[distance_to_hull(p, x_R[r]) for p in x_F[r]] for r in range(3)])
    np.testing.assert_allclose(got, ref, atol=1e-9)


def test_containment_error_is_worst_follower():
    class S:
        x_F = np.array([[0.5, 0.5], [3.0, 0.0]])
        x_R = np.array([[0, 0], [1, 0], [0, 1.0]])
    assert containment_error(S()) == pytest.approx(2.0)
