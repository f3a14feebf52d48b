import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellman_lab.errors import DomainError
from bellman_lab.norms import (
    batch_equiv_norm,
    batch_quasi_norm,
    conjugate_factor,
    equiv_norm,
    norm_comparison_check,
    quasi_norm,
)
from bellman_lab.partition import StepFunction, build_tree
from bellman_lab.rearrange import Rearrangement

from oracles import equiv_norm_grid, quasi_norm_levels


def step(values, arity=2):
    values = np.asarray(values, dtype=float)
    depth = round(np.log(values.size) / np.log(arity))
    return StepFunction(build_tree(arity, depth), values)


def test_quasi_norm_indicator():
    res = quasi_norm(step([3, 3, 0, 0, 0, 0, 0, 0]), 2)
    assert res.value == pytest.approx(3 * 0.25**0.5, rel=1e-15)
    assert res.witness == 3.0


def test_quasi_norm_two_levels():
    assert quasi_norm(step([2, 1, 1, 1]), 2).value == 1.0


def test_quasi_norm_constant():
    for p in (1.5, 2, 3):
        assert quasi_norm(StepFunction.constant(build_tree(3, 2), 1.0), p).value == 1.0


def test_equiv_norm_constant():
    res = equiv_norm(StepFunction.constant(build_tree(2, 4), 1.0), 2.5)
    assert res.value == pytest.approx(1.0, rel=1e-15)
    assert res.witness == 1.0


def test_equiv_norm_indicator():
    res = equiv_norm(step([2, 0, 0, 0]), 2)
    assert res.value == pytest.approx(1.0, rel=1e-15)
    assert res.witness == 0.25


def test_norms_reject_small_p():
    with pytest.raises(DomainError):
        quasi_norm(step([1, 1]), 1.0)
    with pytest.raises(DomainError):
        equiv_norm(step([1, 1]), 0.5)


def test_comparison_indicator_ratios():
    report = norm_comparison_check(step([1, 1, 0, 0]), 2)
    assert report["ratios"] == pytest.approx((1.0, 2.0), rel=1e-15)


def test_comparison_zero_function():
    report = norm_comparison_check(step([0, 0, 0, 0]), 3)
    assert report["quasi_norm"] == report["equiv_norm"] == 0.0


def test_comparison_power_profile_ratio_grows():
    ratios = []
    for depth in (6, 12):
        n = 2**depth
        # t^(-1/2) sampled at right cell ends: the quasi-norm stays exactly 1
        samples = (np.arange(1, n + 1) / n) ** -0.5
        ratios.append(norm_comparison_check(step(samples), 2)["ratios"][0])
    assert 1 <= ratios[0] < ratios[1] <= 2
    assert ratios[1] > 1.95


def test_batch_matches_scalar(rng):
    rows = rng.exponential(size=(20, 64)) ** 3
    srt = -np.sort(-rows, axis=1)
    for p in (1.5, 3.0):
        q = batch_quasi_norm(srt, p)
        e = batch_equiv_norm(srt, p)
        for i in range(rows.shape[0]):
            phi = step(rows[i])
            assert q[i] == pytest.approx(quasi_norm(phi, p).value, rel=1e-12)
            assert e[i] == pytest.approx(equiv_norm(phi, p).value, rel=1e-12)


def test_equiv_norm_on_unequal_masses():
    r = Rearrangement(np.array([3.0, 1.0, 0.5]), np.array([0.3, 0.5, 0.2]))
    s = np.arange(1, 1_000_001) / 1_000_000
    prefix = np.interp(s, [0, 0.3, 0.8, 1.0], [0, 0.9, 1.4, 1.5])
    for p in (1.2, 2.0, 4.0):
        brute = np.max(prefix * s ** (1 / p - 1))
        assert equiv_norm(r, p).value == pytest.approx(brute, rel=1e-12)


leaf_vectors = st.sampled_from([(2, 3), (2, 5), (5, 2), (10, 2)]).flatmap(
    lambda ad: st.tuples(
        st.just(ad[0]),
        st.lists(st.floats(0, 1e3, allow_nan=False), min_size=ad[0] ** ad[1], max_size=ad[0] ** ad[1]),
    )
)
exponents = st.sampled_from([1.5, 2.0, 3.0])


@given(leaf_vectors, exponents)
def test_against_oracles(av, p):
    arity, values = av
    phi = step(values, arity)
    assert quasi_norm(phi, p).value == pytest.approx(quasi_norm_levels(values, p), rel=1e-12, abs=1e-300)
    assert equiv_norm(phi, p).value == pytest.approx(equiv_norm_grid(values, p), rel=1e-9, abs=1e-300)


@given(leaf_vectors, exponents)
def test_witness_reproduces_value(av, p):
    arity, values = av
    phi = step(values, arity)
    v = phi.leaf_values
    qn = quasi_norm(phi, p)
    if qn.value > 0:
        again = qn.witness * (np.count_nonzero(v >= qn.witness) / v.size) ** (1 / p)
        assert again == pytest.approx(qn.value, rel=1e-12)
    en = equiv_norm(phi, p)
    if en.value > 0:
        s = en.witness
        srt = np.sort(v)[::-1]
        edges = np.arange(v.size + 1) / v.size
        prefix = np.interp(s, edges, np.concatenate(([0.0], np.cumsum(srt) / v.size)))
        assert prefix * s ** (1 / p - 1) == pytest.approx(en.value, rel=1e-12)


@given(leaf_vectors, exponents, st.floats(0, 50))
def test_homogeneity(av, p, c):
    arity, values = av
    phi = step(values, arity)
    cphi = phi * c
    assert quasi_norm(cphi, p).value == pytest.approx(c * quasi_norm(phi, p).value, rel=1e-12, abs=1e-300)
    assert equiv_norm(cphi, p).value == pytest.approx(c * equiv_norm(phi, p).value, rel=1e-12, abs=1e-300)


@given(leaf_vectors, exponents, st.randoms(use_true_random=False))
def test_rearrangement_invariance(av, p, rnd):
    arity, values = av
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a, b = step(values, arity), step(shuffled, arity)
    assert quasi_norm(a, p).value == quasi_norm(b, p).value
    assert equiv_norm(a, p).value == pytest.approx(equiv_norm(b, p).value, rel=1e-13)


@given(leaf_vectors, exponents, st.data())
def test_monotone(av, p, data):
    arity, values = av
    bump = data.draw(st.lists(st.floats(0, 10), min_size=len(values), max_size=len(values)))
    lo = step(values, arity)
    hi = step(np.asarray(values) + np.asarray(bump), arity)
    assert quasi_norm(lo, p).value <= quasi_norm(hi, p).value * (1 + 1e-12)
    assert equiv_norm(lo, p).value <= equiv_norm(hi, p).value * (1 + 1e-12)


@given(leaf_vectors, exponents)
def test_sandwich(av, p):
    arity, values = av
    report = norm_comparison_check(step(values, arity), p)
    if report["ratios"] is not None:
        lo, hi = report["ratios"]
        assert lo >= 1 - 1e-12 and hi >= 1 - 1e-12
    assert conjugate_factor(p) == p / (p - 1)
