import numpy as np
import pytest
from conftest import free_sphere_state, table_tasks
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from instances import quadratic_map, random_task, random_two_level_tree

from pbds.manifolds import ChartPoint, Euclidean
from pbds.policy import combine
from pbds.riemannian import ConstantMetric, QuadraticPotential
from pbds.tasks import FunctionMap, IdentityMap, TaskSpec, make_constraint_task
from pbds.tree import (
    TreeNode,
    TreeNodeData,
    embedding_tree,
    evaluate_tree,
    flatten,
    tree_intermediate_combine,
    tree_leaf_init,
    tree_root_combine,
)


def linear_map(a, m=1, n=1):
    A = np.atleast_2d(a).astype(float)
    return FunctionMap(Euclidean(m), Euclidean(n), lambda x: A @ x, lambda x: A, lambda x, v: np.zeros_like(A))


def assert_data_close(d1, d2, atol):
    for name in ("P", "A", "B", "F", "xi"):
        np.testing.assert_allclose(getattr(d1, name), getattr(d2, name), atol=atol, err_msg=name)


def test_leaf_zero_weight():
    t = make_constraint_task(IdentityMap(Euclidean(1)))
    d = tree_leaf_init(t, ChartPoint(0, [1.0]), np.array([1.0]))
    assert_data_close(d, TreeNodeData.zeros(1), 0.0)


def test_leaf_euclidean_metric_xi_zero(rng):
    t = TaskSpec(quadratic_map(rng, 3, 2), ConstantMetric(np.eye(2)), QuadraticPotential())
    d = tree_leaf_init(t, ChartPoint(0, rng.normal(size=3)), rng.normal(size=3))
    np.testing.assert_array_equal(d.xi, np.zeros((3, 3, 3)))
    np.testing.assert_array_equal(d.P, d.B)


def test_leaf_hand_values():
    t = TaskSpec(linear_map(2.0), ConstantMetric([[1.0]]), QuadraticPotential())
    d = tree_leaf_init(t, ChartPoint(0, [1.0]), np.array([0.0]))
    assert d.P[0, 0] == 4.0 and d.B[0, 0] == 4.0
    assert d.A[0, 0] == 0.0
    assert d.F[0] == -8.0
    out = tree_root_combine([d], ChartPoint(0, [1.0]), np.zeros(1))
    flat = combine([t], ChartPoint(0, [1.0]), np.zeros(1))
    np.testing.assert_allclose(out.acceleration, flat.acceleration, atol=1e-15)


def test_intermediate_identity_pass_through(rng):
    t = random_task(rng, 3, zero_prob=0.0)
    p, v = ChartPoint(0, rng.normal(size=3)), rng.normal(size=3)
    leaf = tree_leaf_init(t, p, v)
    up = tree_intermediate_combine([leaf], IdentityMap(Euclidean(3)), p, v)
    assert_data_close(up, leaf, 1e-15)


def test_intermediate_zero_children():
    up = tree_intermediate_combine([], linear_map([[1.0, 2.0]], 2, 1), ChartPoint(0, [0.1, 0.2]), np.ones(2))
    assert_data_close(up, TreeNodeData.zeros(2), 0.0)


def test_intermediate_dimension_mismatch():
    with pytest.raises(ValueError):
        tree_intermediate_combine([TreeNodeData.zeros(3)], linear_map([[1.0, 2.0]], 2, 1),
                                  ChartPoint(0, [0.1, 0.2]), np.ones(2))


def test_linear_chain_equals_composite_leaf(rng):
    inner = linear_map(rng.normal(size=(2, 3)), 3, 2)
    leaf = random_task(rng, 2, domain=Euclidean(2), zero_prob=0.0)
    p, v = ChartPoint(0, rng.normal(size=3)), rng.normal(size=3)
    y, J, _ = inner.evaluate(p, v)
    chained = tree_intermediate_combine([tree_leaf_init(leaf, y, J @ v)], inner, p, v)
    flat = tree_leaf_init(flatten([TreeNode(inner, [leaf])])[0], p, v)
    assert_data_close(chained, flat, 1e-12)


def test_one_level_tree_equals_combine(rng):
    from instances import random_instance

    for m in (1, 2, 3, 7):
        for _ in range(10):
            tasks, p, v = random_instance(rng, m, 5)
            a_tree = evaluate_tree(tasks, p, v).acceleration
            a_flat = combine(tasks, p, v).acceleration
            np.testing.assert_allclose(a_tree, a_flat, atol=1e-12 * max(1.0, np.abs(a_flat).max()))


def test_all_zero_weight_tree():
    t = make_constraint_task(IdentityMap(Euclidean(1)))
    out = evaluate_tree([TreeNode(IdentityMap(Euclidean(1)), [t]), t], ChartPoint(0, [1.0]), np.array([1.0]))
    assert out.all_weights_zero
    np.testing.assert_array_equal(out.acceleration, [0.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_two_level_tree_matches_flat(m, seed):
    rng = np.random.default_rng(seed)
    children, p, v = random_two_level_tree(rng, m)
    flat = combine(flatten(children), p, v)
    assume(flat.condition_number < 1e6)  # beyond this, float64 round-off alone exceeds the tolerance
    a_tree = evaluate_tree(children, p, v).acceleration
    np.testing.assert_allclose(a_tree, flat.acceleration, atol=1e-10 * max(1.0, np.abs(flat.acceleration).max()))


def test_embedding_tree_matches_flat(sphere, rng):
    tasks = table_tasks(sphere)
    children = embedding_tree(tasks, sphere)
    assert isinstance(children[0], TreeNode) and len(children) == 1
    for _ in range(20):
        p, v = free_sphere_state(sphere, rng)
        a_tree = evaluate_tree(children, p, v).acceleration
        a_flat = combine(tasks, p, v).acceleration
        np.testing.assert_allclose(a_tree, a_flat, atol=1e-10 * max(1.0, np.abs(a_flat).max()))


def test_flatten_structure(rng):
    children, _, _ = random_two_level_tree(rng, 3, n_intermediate=2, n_leaves=5, direct_leaves=1)
    assert len(flatten(children)) == 6
