from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from umforest import (
    NULL,
    Dendrogram,
    canonicalize,
    from_distance_matrix,
    is_isomorphic,
    leaf,
    make,
    node,
    scale_mass,
    scale_metric,
    singleton,
    to_distance_matrix,
    validate,
)
from umforest.dendrogram import Leaf, Node, as_mass, format_mass, relabel, to_ticks
from umforest.errors import DomainError, MalformedDendrogram, NotUltrametric
from umforest.polynomials import distance_matrix_measure

from conftest import dendrograms, from_ticks, matrix


def two_leaf(h, m1=1, m2=1):
    return make(node(h, leaf(m1), leaf(m2)))


# -- numbers --------------------------------------------------------------------


def test_ticks_are_exact_decimals():
    assert to_ticks("0.1") * 3 == to_ticks("0.3")
    assert to_ticks(Fraction(1, 4)) == 250_000_000_000
    with pytest.raises(ValueError):
        to_ticks(float("nan"))


def test_mass_parsing_round_trips():
    assert as_mass("3/4") == Fraction(3, 4)
    assert as_mass(0.5) == Fraction(1, 2)
    assert format_mass(Fraction(3, 4)) == "0.75"
    assert as_mass(format_mass(Fraction(1, 3))) == Fraction(1, 3)


# -- validate -------------------------------------------------------------------


def test_single_atom_is_clean():
    assert validate(Dendrogram(Leaf(Fraction(1)))).clean


def test_child_above_parent_is_reported():
    d = Dendrogram(Node(to_ticks(2), (Node(to_ticks(3), (Leaf(Fraction(1)), Leaf(Fraction(1)))), Leaf(Fraction(1)))))
    rep = validate(d)
    assert "heights not decreasing" in rep.kinds()
    assert not rep.ok


def test_negative_mass_is_reported():
    rep = validate(Dendrogram(Leaf(Fraction(-1))))
    assert rep.kinds() == {"negative mass"}
    with pytest.raises(MalformedDendrogram):
        canonicalize(Dendrogram(Leaf(Fraction(-1))))


def test_noncanonical_issues_are_soft():
    d = Dendrogram(Node(to_ticks(2), (Node(to_ticks(1), (Leaf(Fraction(3)),)),)))
    rep = validate(d)
    assert rep.ok and not rep.clean
    assert "unary node" in rep.kinds()


# -- canonicalize -----------------------------------------------------------------


def test_zero_mass_sibling_is_dropped():
    assert make(node(1, leaf(1), leaf(0))) == singleton(1)


def test_unary_chain_collapses_to_leaf():
    assert make(Node(to_ticks(2), (Node(to_ticks(1), (Leaf(Fraction(3)),)),))) == singleton(3)


def test_children_order_is_irrelevant():
    a = make(node(4, node(1, leaf(1), leaf(2)), leaf(3)))
    b = make(node(4, leaf(3), node(1, leaf(2), leaf(1))))
    assert a.encoding == b.encoding


def test_zero_mass_singleton_is_null():
    assert make(leaf(0)) == NULL


def test_zero_distance_atoms_merge():
    assert make(node(0, leaf(1), leaf(2))) == singleton(3)


def test_equal_nested_heights_flatten():
    assert make(node(2, node(2, leaf(1), leaf(1)), leaf(1))) == make(node(2, leaf(1), leaf(1), leaf(1)))


@given(dendrograms())
def test_canonicalize_is_idempotent(d):
    raw = Dendrogram(d.root)
    once = canonicalize(raw)
    assert canonicalize(Dendrogram(once.root)) == once
    assert validate(once).clean


@given(dendrograms(), st.integers(0, 2**32 - 1))
def test_encoding_ignores_child_order(d, seed):
    rng = np.random.default_rng(seed)

    def shuffle(t):
        if type(t) is Leaf:
            return t
        kids = [shuffle(c) for c in t.children]
        rng.shuffle(kids)
        return Node(t.ticks, tuple(kids))

    assert make(shuffle(d.root)).encoding == d.encoding


# -- distance matrices -----------------------------------------------------------


def test_from_matrix_singleton():
    assert from_distance_matrix([[0]], [2]) == singleton(2)


def test_from_matrix_two_atoms():
    assert from_distance_matrix([[0, 3], [3, 0]], [1, 1]) == two_leaf(3)


def test_from_matrix_three_atoms_by_single_linkage():
    R = [[0, 1, 4], [1, 0, 4], [4, 4, 0]]
    d = from_distance_matrix(R, [1, 1, 1])
    assert d == make(node(4, node(1, leaf(1), leaf(1)), leaf(1)))
    back, masses, labels = to_distance_matrix(d)
    order = np.argsort(labels)
    assert np.array_equal(back[np.ix_(order, order)], np.array(R, dtype=float))


def test_to_matrix_views():
    R, m, _ = to_distance_matrix(singleton(5))
    assert R.tolist() == [[0.0]] and m == [5]
    R, _, _ = to_distance_matrix(two_leaf(3))
    assert R.tolist() == [[0.0, 3.0], [3.0, 0.0]]


def test_not_ultrametric_names_a_triple():
    with pytest.raises(NotUltrametric) as err:
        from_distance_matrix([[0, 1, 3], [1, 0, 1], [3, 1, 0]], [1, 1, 1])
    assert sorted(err.value.triple) == [0, 1, 2]


def test_asymmetric_matrix_rejected():
    with pytest.raises(NotUltrametric):
        from_distance_matrix([[0, 1], [2, 0]], [1, 1])


@given(dendrograms(max_atoms=50))
def test_matrix_round_trip(d):
    T, masses, _ = matrix(d)
    back = from_ticks(T, masses)
    assert back == d


@given(dendrograms(max_atoms=20))
def test_strong_triangle_inequality(d):
    T, _, _ = matrix(d)
    n = len(T)
    for i in range(n):
        for j in range(n):
            assert (T[i, j] <= np.maximum(T[i, :], T[:, j])).all()


# -- isomorphism ----------------------------------------------------------------


@given(dendrograms())
def test_relabelled_copy_is_isomorphic(d):
    assert is_isomorphic(d, relabel(d, range(100, 100 + d.n_atoms)))


def test_swapped_masses_isomorphic():
    assert is_isomorphic(two_leaf(3, 1, 2), two_leaf(3, 2, 1))


def test_different_heights_not_isomorphic():
    assert not is_isomorphic(two_leaf(3), two_leaf(4))


@given(dendrograms(max_atoms=4), dendrograms(max_atoms=4), dendrograms(max_atoms=4))
def test_isomorphism_is_an_equivalence(a, b, c):
    assert is_isomorphic(a, a)
    assert is_isomorphic(a, b) == is_isomorphic(b, a)
    if is_isomorphic(a, b) and is_isomorphic(b, c):
        assert is_isomorphic(a, c)


# -- scaling --------------------------------------------------------------------


def test_scale_metric_examples():
    d = two_leaf(3)
    assert scale_metric(1, d) == d
    assert scale_metric(2, d) == two_leaf(6)
    with pytest.raises(DomainError):
        scale_metric(0, d)


def test_scale_mass_examples():
    d = two_leaf(3)
    assert scale_mass(1, d) == d
    assert scale_mass(0, d) == NULL


@given(dendrograms(), st.sampled_from([Fraction(1, 2), Fraction(2), Fraction(3, 2), Fraction(5)]))
def test_diameter_scales(d, a):
    assert scale_metric(a, d).diameter_ticks == a * d.diameter_ticks


@given(dendrograms(), st.sampled_from([Fraction(1, 2), Fraction(2), Fraction(3)]), st.sampled_from([Fraction(1, 4), Fraction(3), Fraction(2)]))
def test_scaling_composes(d, a, b):
    assert scale_metric(a, scale_metric(b, d)) == scale_metric(a * b, d)
    assert scale_mass(a, scale_mass(b, d)) == scale_mass(a * b, d)


@given(dendrograms(max_atoms=8), st.sampled_from([Fraction(1, 2), Fraction(3)]))
def test_pair_measure_scales_quadratically(d, a):
    base = distance_matrix_measure(2, d)
    scaled = distance_matrix_measure(2, scale_mass(a, d))
    assert {k: w * a * a for k, w in base.weights.items()} == scaled.weights
