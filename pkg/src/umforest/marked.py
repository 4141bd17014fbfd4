"""Marked um-spaces over a finite alphabet or a bounded integer box.

Marks ride on the leaves of the genealogical tree. Ball membership,
concatenation and truncation only ever look at distances; canonical
form merges zero-distance atoms only when their marks agree.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .dendrogram import SCALE, Dendrogram, Leaf, canonicalize, fold, make, to_ticks
from .errors import DomainError
from .polynomials import ENUMERATION_BUDGET, _check_budget, _gather, _truncation_mask, _tuples, test_function
from .semigroup import concat, decompose, truncate


@dataclass(frozen=True)
class MarkSpace:
    """Finite set of marks with a neutral element.

    Either an explicit alphabet, or the integer box ``prod [low_i, high_i]``
    whose points are tuples of ints.
    """

    symbols: tuple | None = None
    low: tuple | None = None
    high: tuple | None = None
    neutral: object = None

    def __post_init__(self):
        if (self.symbols is None) == (self.low is None):
            raise DomainError("give either symbols or box bounds")
        if self.symbols is not None:
            if len(set(self.symbols)) != len(self.symbols) or not self.symbols:
                raise DomainError("alphabet must be nonempty with distinct symbols")
            if self.neutral is None:
                object.__setattr__(self, "neutral", self.symbols[0])
        else:
            if len(self.low) != len(self.high) or any(a > b for a, b in zip(self.low, self.high)):
                raise DomainError("bad box bounds")
            if self.neutral is None:
                object.__setattr__(self, "neutral", tuple(0 for _ in self.low))
        if not self.contains(self.neutral):
            raise DomainError("neutral mark must belong to the mark space")

    @classmethod
    def finite(cls, symbols, neutral=None):
        return cls(symbols=tuple(symbols), neutral=neutral)

    @classmethod
    def box(cls, low, high, neutral=None):
        return cls(low=tuple(int(x) for x in low), high=tuple(int(x) for x in high), neutral=neutral)

    def contains(self, mark) -> bool:
        if self.symbols is not None:
            return mark in self.symbols
        return (
            isinstance(mark, tuple)
            and len(mark) == len(self.low)
            and all(isinstance(x, int) and a <= x <= b for x, a, b in zip(mark, self.low, self.high))
        )

    def __iter__(self):
        if self.symbols is not None:
            return iter(self.symbols)
        return itertools.product(*(range(a, b + 1) for a, b in zip(self.low, self.high)))

    def __len__(self):
        if self.symbols is not None:
            return len(self.symbols)
        return int(np.prod([b - a + 1 for a, b in zip(self.low, self.high)]))

    def to_json(self):
        if self.symbols is not None:
            return {"symbols": list(self.symbols), "neutral": self.neutral}
        return {"low": list(self.low), "high": list(self.high), "neutral": list(self.neutral)}

    @classmethod
    def from_json(cls, obj):
        if "symbols" in obj:
            return cls.finite(obj["symbols"], obj.get("neutral"))
        neutral = obj.get("neutral")
        return cls.box(obj["low"], obj["high"], tuple(neutral) if neutral is not None else None)


@dataclass(frozen=True)
class MarkedDendrogram:
    space: MarkSpace
    tree: Dendrogram

    def __post_init__(self):
        tree = canonicalize(self.tree)
        bad = [a.mark for a in tree.atoms if not self.space.contains(a.mark)]
        if bad:
            raise DomainError(f"marks outside the mark space: {bad[:3]}")
        object.__setattr__(self, "tree", tree)

    @property
    def total_mass(self) -> Fraction:
        return self.tree.total_mass

    @property
    def encoding(self):
        return self.tree.encoding


def marked(space: MarkSpace, d: Dendrogram) -> MarkedDendrogram:
    return MarkedDendrogram(space, d)


def _same_space(parts):
    spaces = {p.space for p in parts}
    if len(spaces) > 1:
        raise DomainError("parts live on different mark spaces")
    return spaces.pop()


def marked_concat(h, parts, space: MarkSpace | None = None) -> MarkedDendrogram:
    """Genealogical concatenation; marks are carried along unchanged."""
    parts = list(parts)
    if not parts:
        if space is None:
            raise DomainError("empty concatenation needs an explicit mark space")
        return MarkedDendrogram(space, Dendrogram())
    sp = _same_space(parts)
    return MarkedDendrogram(sp, concat(h, [p.tree for p in parts]))


def marked_truncate(h, d: MarkedDendrogram) -> MarkedDendrogram:
    return MarkedDendrogram(d.space, truncate(h, d.tree))


def marked_decompose(h, d: MarkedDendrogram) -> tuple:
    """Marked primes: the open 2h-ball components with their marks."""
    return tuple(MarkedDendrogram(d.space, p) for p in decompose(h, d.tree).primes)


def marked_is_isomorphic(d1: MarkedDendrogram, d2: MarkedDendrogram) -> bool:
    return d1.space == d2.space and d1.encoding == d2.encoding


def project_to_unmarked(d: MarkedDendrogram) -> Dendrogram:
    root = fold(d.tree.root, lambda l: Leaf(l.mass), lambda n, kids: type(n)(n.ticks, tuple(kids))) if d.tree.root else None
    return make(root)


def project_to_mark_measure(d: MarkedDendrogram) -> dict:
    """Mass carried by each mark."""
    out: dict = defaultdict(Fraction)
    for a in d.tree.atoms:
        out[a.mark] += a.mass
    return dict(out)


def marked_monomial_eval(
    m: int,
    phi,
    g: Callable,
    d: MarkedDendrogram,
    h=None,
    budget: int = ENUMERATION_BUDGET,
) -> float:
    """``sum over atom m-tuples of mass * phi(distances) * g(marks)``.

    ``g`` maps a tuple of ``m`` marks to a real; it is tabulated once over
    the mark tuples that occur. With ``h`` set, tuples with a distance at or
    above ``2h`` contribute zero.
    """
    if m < 1:
        raise DomainError("order must be at least 1")
    phi = test_function(phi)
    tree = d.tree
    n = tree.n_atoms
    if n == 0:
        return 0.0
    _check_budget(n, m, budget)
    marks = [a.mark for a in tree.atoms]
    distinct = sorted(set(marks), key=repr)
    code = np.array([distinct.index(x) for x in marks])
    table = np.empty((len(distinct),) * m)
    for combo in itertools.product(range(len(distinct)), repeat=m):
        table[combo] = float(g(tuple(distinct[i] for i in combo)))
    two_h = None if h is None else 2 * to_ticks(h)
    T = tree.lca_ticks
    w_atoms = tree.masses
    partial = []
    for idx in _tuples(n, m):
        gv = table[tuple(code[idx].T)]
        keep = gv != 0
        M = _gather(T, idx)
        if two_h is not None:
            keep &= _truncation_mask(M, two_h)
        if not keep.any():
            continue
        M, sel, gv = M[keep], idx[keep], gv[keep]
        vals = phi(M / SCALE)
        if not np.all(np.isfinite(vals)):
            raise ValueError("test function returned a non-finite value")
        partial.append(math.fsum(w_atoms[sel].prod(axis=1) * gv * vals))
    return math.fsum(partial)


def marked_distance_matrix_measure(m: int, d: MarkedDendrogram, budget: int = ENUMERATION_BUDGET) -> dict:
    """Exact weights keyed by ``(upper-triangle ticks, mark tuple)`` over ordered atom m-tuples."""
    if m < 1:
        raise DomainError("order must be at least 1")
    tree = d.tree
    n = tree.n_atoms
    if n == 0:
        return {}
    _check_budget(n, m, budget)
    T = tree.lca_ticks.tolist()
    atoms = tree.atoms
    iu = list(zip(*np.triu_indices(m, 1)))
    out: dict = defaultdict(Fraction)
    for tup in itertools.product(range(n), repeat=m):
        w = Fraction(1)
        for i in tup:
            w *= atoms[i].mass
        key = (tuple(T[tup[i]][tup[j]] for i, j in iu), tuple(atoms[i].mark for i in tup))
        out[key] += w
    return dict(out)
