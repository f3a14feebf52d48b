import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellman_lab.errors import DomainError
from bellman_lab.maximal import (
    batch_maximal,
    distribution_at,
    distribution_curve,
    level_set_nodes,
    maximal_function,
    weak_type_check,
)
from bellman_lab.partition import Node, StepFunction, average_smooth, build_tree, integral

from oracles import maximal_brute


def step(values, arity=2):
    values = np.asarray(values, dtype=float)
    depth = round(np.log(values.size) / np.log(arity))
    return StepFunction(build_tree(arity, depth), values)


def test_constant():
    res = maximal_function(StepFunction.constant(build_tree(3, 3), 0.7))
    assert np.all(res.values.leaf_values == 0.7)
    assert distribution_at(res, 0.7) == 1.0
    assert distribution_at(res, 0.71) == 0.0


def test_half_indicator():
    res = maximal_function(step([1, 0]))
    assert list(res.values.leaf_values) == [1.0, 0.5]
    assert res.argmax_node(1) == Node(0, 0)


def test_single_spike():
    res = maximal_function(step([4, 0, 0, 0]))
    assert list(res.values.leaf_values) == [4.0, 2.0, 1.0, 1.0]
    assert distribution_at(res, 2) == 0.5
    assert [res.argmax_node(i) for i in range(4)] == [Node(2, 0), Node(1, 0), Node(0, 0), Node(0, 0)]


def test_lambda_must_be_positive():
    res = maximal_function(step([1, 2]))
    with pytest.raises(DomainError):
        distribution_at(res, 0.0)


def test_strict_level_set():
    res = maximal_function(step([4, 0, 0, 0]))
    assert distribution_at(res, 2, strict=True) == 0.25


def test_weak_type_equality_case():
    report = weak_type_check(step([1, 0]), 0.5)
    assert report["measure"] == 1.0
    assert report["bound"] == 1.0


def test_weak_type_constant():
    report = weak_type_check(StepFunction.constant(build_tree(2, 3), 1.5), 1.5)
    assert report["measure"] == 1.0 and report["bound"] == 1.0


def test_distribution_curve():
    curve = distribution_curve(maximal_function(step([4, 0, 0, 0])))
    assert curve == [(4.0, 0.25), (2.0, 0.5), (1.0, 1.0)]


def test_smoothing_keeps_level_set_when_averages_equal_lambda():
    lam = 2.0
    phi = step([3, 1, 0.5, 0.1, 4, 0, 2, 2])
    nodes = level_set_nodes(phi, lam)
    assert nodes == [Node(1, 1), Node(2, 0)]
    before = distribution_at(maximal_function(phi), lam)
    smoothed = phi
    for nd in nodes:
        if np.mean(phi.leaf_values[phi.partition.leaf_slice(nd)]) == lam:
            smoothed = average_smooth(smoothed, nd)
    assert not np.array_equal(smoothed.leaf_values, phi.leaf_values)
    assert distribution_at(maximal_function(smoothed), lam) >= before


leaf_vectors = st.sampled_from([(2, 1), (2, 4), (3, 3), (4, 2)]).flatmap(
    lambda ad: st.tuples(
        st.just(ad),
        st.lists(st.floats(0, 100, allow_nan=False), min_size=ad[0] ** ad[1], max_size=ad[0] ** ad[1]),
    )
)


@given(leaf_vectors)
def test_matches_brute_force(av):
    (arity, depth), values = av
    phi = StepFunction(build_tree(arity, depth), np.asarray(values))
    res = maximal_function(phi)
    brute = maximal_brute(values, arity, depth)
    np.testing.assert_allclose(res.values.leaf_values, brute, rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(batch_maximal(phi.leaf_values[None, :], phi.partition)[0], brute, rtol=1e-12)
    assert np.all(res.values.leaf_values >= phi.leaf_values * (1 - 1e-12))
    assert np.all(res.values.leaf_values >= integral(phi) * (1 - 1e-12))


@given(leaf_vectors, st.floats(0.01, 120))
def test_level_set_is_union_of_maximal_nodes(av, lam):
    (arity, depth), values = av
    phi = StepFunction(build_tree(arity, depth), np.asarray(values))
    tree = phi.partition
    covered = np.zeros(tree.n_leaves, dtype=bool)
    for nd in level_set_nodes(phi, lam):
        sl = tree.leaf_slice(nd)
        assert not covered[sl].any()
        covered[sl] = True
    assert np.array_equal(covered, maximal_function(phi).values.leaf_values >= lam)


@given(leaf_vectors, st.floats(0.01, 120), st.booleans())
def test_weak_type_inequality(av, lam, strict):
    (arity, depth), values = av
    phi = StepFunction(build_tree(arity, depth), np.asarray(values))
    report = weak_type_check(phi, lam, strict=strict)
    assert report["measure"] <= report["bound"] * (1 + 1e-12)


@given(leaf_vectors, st.data())
def test_monotone(av, data):
    (arity, depth), values = av
    bump = data.draw(st.lists(st.floats(0, 10), min_size=len(values), max_size=len(values)))
    tree = build_tree(arity, depth)
    lo = maximal_function(StepFunction(tree, np.asarray(values))).values.leaf_values
    hi = maximal_function(StepFunction(tree, np.asarray(values) + np.asarray(bump))).values.leaf_values
    assert np.all(lo <= hi * (1 + 1e-12))
