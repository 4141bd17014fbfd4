import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from umforest import MonomialSpec, concat, count_balls, decompose, eval_monomial, leaf, make, node, truncate
from umforest.dendrogram import Dendrogram, Leaf, to_ticks
from umforest.errors import DomainError
from umforest.generators import random_dendrogram
from umforest.marked import (
    MarkedDendrogram,
    MarkSpace,
    marked_concat,
    marked_decompose,
    marked_distance_matrix_measure,
    marked_is_isomorphic,
    marked_monomial_eval,
    marked_truncate,
    project_to_mark_measure,
    project_to_unmarked,
)
from umforest.polynomials import Bump, Constant, Coordinate, DistanceSum, ExpSum
from umforest.random_forests import LevyModel
from umforest.rng import stream

from conftest import dendrograms, depths, oracle_monomial

ABC = MarkSpace.finite("abc")


@st.composite
def marked_spaces(draw, max_atoms=8):
    return MarkedDendrogram(ABC, draw(dendrograms(max_atoms=max_atoms, marks=tuple("abc"))))


def one(mark, mass=1):
    return MarkedDendrogram(ABC, Dendrogram(Leaf(Fraction(mass), mark)))


def weight(marks):
    return math.prod({"a": 1.0, "b": 2.0, "c": 0.5}[x] for x in marks)


# -- mark spaces -------------------------------------------------------------------


def test_mark_space_variants():
    assert ABC.neutral == "a" and len(ABC) == 3
    box = MarkSpace.box((0, 0), (1, 2))
    assert len(box) == 6 and box.neutral == (0, 0)
    assert box.contains((1, 2)) and not box.contains((2, 0))
    assert MarkSpace.from_json(box.to_json()) == box
    with pytest.raises(DomainError):
        MarkSpace.finite("ab", neutral="z")


def test_marks_must_belong_to_space():
    with pytest.raises(DomainError):
        one("z")


def test_equal_marks_merge_at_distance_zero_only():
    same = MarkedDendrogram(ABC, make(node(0, leaf(1, "a"), leaf(2, "a"))))
    diff = MarkedDendrogram(ABC, make(node(0, leaf(1, "a"), leaf(2, "b"))))
    assert same.tree.n_atoms == 1 and diff.tree.n_atoms == 2


# -- operations ----------------------------------------------------------------------


def test_concat_keeps_marks():
    d = marked_concat(1, [one("a"), one("b")])
    assert sorted(a.mark for a in d.tree.atoms) == ["a", "b"]
    assert d.tree.diameter_ticks == to_ticks(2)
    assert marked_concat(1, [d, MarkedDendrogram(ABC, Dendrogram())]) == d
    with pytest.raises(DomainError):
        marked_concat(1, [])


def test_concat_rejects_mixed_spaces():
    other = MarkedDendrogram(MarkSpace.finite("xy"), Dendrogram(Leaf(Fraction(1), "x")))
    with pytest.raises(DomainError):
        marked_concat(1, [one("a"), other])


@given(marked_spaces(), marked_spaces(), depths)
def test_mark_measure_adds_under_concat(u, v, h):
    u, v = marked_truncate(h, u), marked_truncate(h, v)
    whole = project_to_mark_measure(marked_concat(h, [u, v]))
    parts = Counter(project_to_mark_measure(u)) + Counter(project_to_mark_measure(v))
    assert whole == dict(parts)


@given(marked_spaces(), depths)
def test_truncation_keeps_marks_and_commutes_with_projection(d, h):
    t = marked_truncate(h, d)
    assert project_to_mark_measure(t) == project_to_mark_measure(d)
    assert project_to_unmarked(t) == truncate(h, project_to_unmarked(d))
    if d.tree.diameter_ticks <= 2 * to_ticks(h):
        assert t == d


@given(marked_spaces(12), depths)
def test_marked_primes_shadow_unmarked_primes(d, h):
    primes = marked_decompose(h, d)
    assert marked_concat(h, primes, space=ABC) == marked_truncate(h, d)
    shadow = Counter(project_to_unmarked(p).encoding.data for p in primes)
    assert shadow == decompose(h, project_to_unmarked(d)).encodings()
    total = Counter()
    for p in primes:
        total.update(project_to_mark_measure(p))
    assert dict(total) == project_to_mark_measure(d)


def test_single_ball_keeps_all_marks():
    d = MarkedDendrogram(ABC, make(node(1, leaf(1, "a"), leaf(1, "c"))))
    assert marked_decompose(1, d) == (d,)


@given(marked_spaces(), marked_spaces(), depths)
def test_shadow_counts_are_additive(u, v, h):
    u, v = marked_truncate(h, u), marked_truncate(h, v)
    both = project_to_unmarked(marked_concat(h, [u, v]))
    assert count_balls(h, both) == count_balls(h, project_to_unmarked(u)) + count_balls(h, project_to_unmarked(v))
    assert project_to_unmarked(marked_concat(h, [u, v])) == concat(h, [project_to_unmarked(u), project_to_unmarked(v)])


def test_projections_of_single_atom():
    d = one("b", 3)
    assert project_to_unmarked(d) == make(leaf(3))
    assert project_to_mark_measure(d) == {"b": 3}


# -- monomials ----------------------------------------------------------------------------


@given(marked_spaces(6), st.sampled_from([Constant(1.0), Coordinate(1, 2), Bump(2, 2)]), st.integers(2, 3), st.one_of(st.none(), depths))
def test_constant_mark_function_gives_unmarked_value(d, phi, m, h):
    got = marked_monomial_eval(m, phi, lambda marks: 1.0, d, h)
    assert got == pytest.approx(eval_monomial(MonomialSpec(m, phi, h), project_to_unmarked(d)), rel=1e-12, abs=1e-12)


@given(marked_spaces())
def test_mark_indicator_gives_mark_mass(d):
    for x in "abc":
        got = marked_monomial_eval(1, Constant(1.0), lambda marks: float(marks[0] == x), d)
        assert got == float(project_to_mark_measure(d).get(x, 0))


@given(marked_spaces(5), st.integers(1, 3), st.one_of(st.none(), depths))
def test_marked_eval_matches_tuple_loop(d, m, h):
    phi = DistanceSum()
    T, masses = d.tree.lca_ticks, [a.mass for a in d.tree.atoms]
    marks = [a.mark for a in d.tree.atoms]
    two_h = None if h is None else 2 * to_ticks(h)
    terms = []
    for tup in itertools.product(range(len(masses)), repeat=m):
        if two_h is not None and any(T[i][j] >= two_h for i in tup for j in tup):
            continue
        R = np.array([[T[i][j] / 10**12 for j in tup] for i in tup])
        terms.append(math.prod(float(masses[i]) for i in tup) * weight([marks[i] for i in tup]) * float(phi(R[None])[0]))
    assert marked_monomial_eval(m, phi, weight, d, h) == pytest.approx(math.fsum(terms), rel=1e-12, abs=1e-12)


@given(marked_spaces(6), marked_spaces(6), depths, st.integers(1, 3))
def test_marked_monomials_are_additive(u, v, h, m):
    u, v = marked_truncate(h, u), marked_truncate(h, v)
    whole = marked_monomial_eval(m, DistanceSum(), weight, marked_concat(h, [u, v]), h)
    parts = marked_monomial_eval(m, DistanceSum(), weight, u, h) + marked_monomial_eval(m, DistanceSum(), weight, v, h)
    assert abs(whole - parts) <= 1e-12 * max(1.0, abs(whole))


def test_unmarked_oracle_agrees_for_constant_marks():
    d = MarkedDendrogram(ABC, make(node(3, leaf(1, "a"), leaf(2, "b"))))
    assert marked_monomial_eval(2, Coordinate(1, 2), lambda _: 1.0, d) == oracle_monomial(Coordinate(1, 2), 2, project_to_unmarked(d))


# -- separation ---------------------------------------------------------------------------


def _marked_family():
    rng = np.random.default_rng(77)
    out = {}
    while len(out) < 150:
        t = random_dendrogram(rng, max_atoms=4, marks=tuple("abc"), masses=(Fraction(1), Fraction(2)), heights=(0, 0.5, 1, 1.5))
        d = MarkedDendrogram(ABC, t)
        out.setdefault(d.encoding.data, d)
    return list(out.values())


def test_marked_probes_separate_small_spaces():
    probes = [(m, phi) for m in (1, 2, 3) for phi in (Constant(1.0), DistanceSum(), Bump(1.0, 1.0))]
    mark_fns = [lambda xs, x=x: float(all(y == x for y in xs)) for x in "abc"] + [weight]
    sigs = {}
    for d in _marked_family():
        sig = tuple(round(marked_monomial_eval(m, phi, g, d), 9) for m, phi in probes if m > 1 or isinstance(phi, Constant) for g in mark_fns)
        assert sig not in sigs, f"{d} and {sigs[sig]} agree on all probes"
        sigs[sig] = d


def test_marked_isomorphism_respects_marks():
    a = MarkedDendrogram(ABC, make(node(1, leaf(1, "a"), leaf(1, "b"))))
    b = MarkedDendrogram(ABC, make(node(1, leaf(1, "b"), leaf(1, "a"))))
    c = MarkedDendrogram(ABC, make(node(1, leaf(1, "a"), leaf(1, "a"))))
    assert marked_is_isomorphic(a, b) and not marked_is_isomorphic(a, c)


def test_marked_measure_keys_carry_marks():
    d = MarkedDendrogram(ABC, make(node(1, leaf(1, "a"), leaf(2, "b"))))
    meas = marked_distance_matrix_measure(2, d)
    assert meas[((to_ticks(1),), ("a", "b"))] == 2
    assert sum(meas.values()) == 9


# -- marked compound Poisson forests ------------------------------------------------


def test_marked_cpf_laplace_matches_levy_integral():
    atoms = (
        (Fraction(1, 2), make(node(1, leaf(1, "a"), leaf(2, "b")))),
        (Fraction(1, 2), make(node(1.5, node(0.5, leaf(1, "c"), leaf(1, "a")), leaf(1, "b")))),
    )
    model = LevyModel(2.0, atoms, 1)

    def phi(t):
        return 0.2 * marked_monomial_eval(2, ExpSum(1.0), weight, MarkedDendrogram(ABC, t), 1)

    exact = model.theta * math.fsum(float(w) * -math.expm1(-phi(d)) for w, d in model.atoms)
    rng = stream(11, "marked-cpf")
    vals = np.array([math.exp(-phi(model.sample(rng))) for _ in range(20_000)])
    mean, se = vals.mean(), vals.std(ddof=1) / math.sqrt(len(vals))
    # delta method for -log of the mean
    assert abs(-math.log(mean) - exact) <= 4 * se / mean
