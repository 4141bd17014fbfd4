"""Shared strategies and brute-force oracles.

The oracles work on explicit distance matrices (``min``, block matrices,
connected components, Python loops over atom tuples) and never touch the
tree folds used by the library, so agreement is a two-route check.
"""

import itertools
import math
import sys
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from umforest import from_distance_matrix, to_distance_matrix
from umforest.dendrogram import NULL, SCALE
from umforest.generators import random_dendrogram

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def dendrograms(draw, max_atoms=12, min_atoms=1, marks=None, max_height=None):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return random_dendrogram(rng, max_atoms=max_atoms, min_atoms=min_atoms, marks=marks, max_height=max_height)


def spaces(max_atoms=12, **kw):
    """Dendrograms including the null space."""
    return st.one_of(st.just(NULL), dendrograms(max_atoms=max_atoms, **kw))


depths = st.sampled_from([Fraction(k, 4) for k in range(1, 25)])


# -- distance-matrix oracles ---------------------------------------------------


def matrix(d):
    """``(ticks matrix, masses, marks)`` in canonical atom order."""
    R, masses, _ = to_distance_matrix(d, ticks=True)
    return np.array(R, dtype=np.int64), list(masses), [a.mark for a in d.atoms]


def from_ticks(T, masses, marks=None):
    if len(masses) == 0:
        return NULL
    R = [[Fraction(int(x), SCALE) for x in row] for row in T]
    return from_distance_matrix(R, masses, marks=marks)


def oracle_truncate(h, d):
    T, m, mk = matrix(d)
    two_h = int(2 * Fraction(h) * SCALE)
    return from_ticks(np.minimum(T, two_h), m, mk)


def oracle_components(T, two_h):
    n = len(T)
    seen, comps = set(), []
    for s in range(n):
        if s in seen:
            continue
        comp, stack = [], [s]
        seen.add(s)
        while stack:
            a = stack.pop()
            comp.append(a)
            for b in range(n):
                if b not in seen and T[a][b] < two_h:
                    seen.add(b)
                    stack.append(b)
        comps.append(sorted(comp))
    return comps


def oracle_primes(h, d):
    T, m, mk = matrix(d)
    two_h = int(2 * Fraction(h) * SCALE)
    T = np.minimum(T, two_h)
    out = []
    for comp in oracle_components(T, two_h):
        out.append(from_ticks(T[np.ix_(comp, comp)], [m[i] for i in comp], [mk[i] for i in comp]))
    return sorted(p.encoding.data for p in out)


def oracle_concat(h, parts):
    two_h = int(2 * Fraction(h) * SCALE)
    blocks = [matrix(p) for p in parts if not p.is_null]
    n = sum(len(b[1]) for b in blocks)
    T = np.full((n, n), two_h, dtype=np.int64)
    masses, marks, off = [], [], 0
    for B, m, mk in blocks:
        k = len(m)
        T[off : off + k, off : off + k] = np.minimum(B, two_h)
        masses += m
        marks += mk
        off += k
    np.fill_diagonal(T, 0)
    return from_ticks(T, masses, marks)


def oracle_monomial(phi, m, d, h=None):
    """Sum over ordered atom m-tuples, one scalar call per tuple."""
    T, masses, _ = matrix(d)
    n = len(masses)
    two_h = None if h is None else int(2 * Fraction(h) * SCALE)
    terms = []
    for tup in itertools.product(range(n), repeat=m):
        R = np.array([[T[i][j] / SCALE for j in tup] for i in tup])
        if two_h is not None and any(T[tup[i]][tup[j]] >= two_h for i in range(m) for j in range(i + 1, m)):
            continue
        w = math.prod(float(masses[i]) for i in tup)
        terms.append(w * float(phi(R[None])[0]))
    return math.fsum(terms)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
