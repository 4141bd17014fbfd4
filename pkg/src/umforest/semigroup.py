"""Concatenation, truncation and prime decomposition of h-forests.

Conventions shared with the polynomial layer: at depth ``h`` two atoms
lie in the same prime (open 2h-ball) iff their distance is strictly
below ``2h``; atoms at distance exactly ``2h`` are separated.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .dendrogram import (
    NULL,
    SCALE,
    CanonicalEncoding,
    Dendrogram,
    Leaf,
    Node,
    as_mass,
    canonicalize,
    fold,
    make,
    ticks_to_decimal,
    to_ticks,
)
from .errors import DomainError

INFINITE = float("inf")
"""Sentinel of ``count_balls`` for infinitely many balls; unreachable on finite inputs."""


def _two_h(h, positive=True) -> int:
    t = to_ticks(h)
    if t < 0 or (positive and t == 0):
        raise DomainError(f"depth must be {'positive' if positive else 'nonnegative'}, got {h}")
    return 2 * t


# -- concatenation and truncation -----------------------------------------------


def concat(h, parts: Sequence[Dendrogram]) -> Dendrogram:
    """The h-concatenation: disjoint union with cross distances exactly ``2h``."""
    return _concat_ticks(_two_h(h), parts)


def _concat_ticks(two_h: int, parts) -> Dendrogram:
    kids = []
    for i, p in enumerate(parts):
        p = canonicalize(p)
        if p.root is None:
            continue
        if p.diameter_ticks > two_h:
            raise DomainError(
                f"part {i} has diameter {ticks_to_decimal(p.diameter_ticks)} > 2h = {ticks_to_decimal(two_h)}"
            )
        kids.append(p.root)
    if not kids:
        return NULL
    if len(kids) == 1:
        return make(kids[0])
    return make(Node(two_h, tuple(kids)))


def truncate(h, d: Dendrogram) -> Dendrogram:
    """The h-top ``[U, r ∧ 2h, mu]``."""
    return _truncate_ticks(_two_h(h, positive=False), d)


def _truncate_ticks(two_h: int, d: Dendrogram) -> Dendrogram:
    d = canonicalize(d)
    if d.root is None or d.diameter_ticks <= two_h:
        return d
    root = fold(d.root, lambda l: l, lambda t, kids: Node(min(t.ticks, two_h), tuple(kids)))
    return make(root)


# -- decomposition -------------------------------------------------------------


@dataclass(frozen=True)
class ForestDecomposition:
    """Prime factors of the h-top of ``source``, sorted canonically."""

    h: object
    primes: tuple
    source: CanonicalEncoding
    truncated: bool

    def __len__(self):
        return len(self.primes)

    def encodings(self) -> Counter:
        return Counter(p.encoding.data for p in self.primes)


def _primes_ticks(two_h: int, d: Dendrogram) -> tuple:
    top = _truncate_ticks(two_h, d)
    r = top.root
    if r is None:
        return ()
    if type(r) is Node and r.ticks == two_h:
        subs = r.children
    else:
        subs = (r,)
    return tuple(Dendrogram(s, canonical=True) for s in subs)


def decompose(h, d: Dendrogram) -> ForestDecomposition:
    """Unique factorisation of ``truncate(h, d)`` into h-trees.

    Inputs of diameter above ``2h`` are truncated first; ``truncated``
    records whether that happened.
    """
    two_h = _two_h(h)
    d = canonicalize(d)
    return ForestDecomposition(h, _primes_ticks(two_h, d), d.encoding, d.diameter_ticks > two_h)


def count_balls(h, d: Dendrogram) -> int:
    """Number of open 2h-balls (``#_h``)."""
    return len(_primes_ticks(_two_h(h), d))


def is_subforest(h, u: Dendrogram, v: Dendrogram) -> bool:
    """Partial order ``u <=_h v``: the h-primes of ``u`` embed in those of ``v``."""
    two_h = _two_h(h)
    pu = Counter(p.encoding.data for p in _primes_ticks(two_h, u))
    pv = Counter(p.encoding.data for p in _primes_ticks(two_h, v))
    return all(pv[k] >= c for k, c in pu.items())


# -- trunks -------------------------------------------------------------------


def trunk(h, d: Dendrogram) -> Dendrogram:
    """The h-trunk: one atom per h-prime, distances shifted down by ``2h``."""
    two_h = _two_h(h)
    d = canonicalize(d)
    if d.root is None:
        return NULL

    def on_leaf(l):
        return (None, l.mass)

    def on_node(t, kids):
        mass = sum((k[1] for k in kids), Fraction(0))
        if t.ticks < two_h:
            return (None, mass)
        subs = tuple(k[0] if k[0] is not None else Leaf(k[1]) for k in kids)
        return (Node(t.ticks - two_h, subs), mass)

    tree, mass = fold(d.root, on_leaf, on_node)
    return make(tree if tree is not None else Leaf(mass))


# -- paths over depth ------------------------------------------------------------


def _breakpoint_ticks(d: Dendrogram) -> list:
    """Distinct positive node heights (in ticks), i.e. ``2h`` at breakpoints."""
    if d.root is None:
        return []
    hs = set()
    stack = [d.root]
    while stack:
        t = stack.pop()
        if type(t) is Node:
            if t.ticks > 0:
                hs.add(t.ticks)
            stack.extend(t.children)
    return sorted(hs)


@dataclass(frozen=True)
class PathInterval:
    """Depth interval ``(h_low, h_high]`` on which the h-top decomposition is constant."""

    h_low: Fraction
    h_high: Fraction | float
    count: int
    masses: tuple
    primes: tuple  # canonical encodings (bytes), sorted


@dataclass(frozen=True)
class TopsPath:
    """Piecewise-constant path ``h -> decompose(h, d)``, left-continuous in ``h``."""

    breakpoints: tuple
    intervals: tuple

    def at(self, h) -> PathInterval:
        h = Fraction(to_ticks(h), SCALE)
        if h <= 0:
            raise DomainError("depth must be positive")
        for iv in self.intervals:
            if h <= iv.h_high:
                return iv
        return self.intervals[-1]


def tops_path(d: Dendrogram) -> TopsPath:
    """Breakpoints are half the distinct positive heights of ``d``."""
    d = canonicalize(d)
    if d.root is None:
        return TopsPath((), ())
    bps = _breakpoint_ticks(d)
    edges = [Fraction(0)] + [Fraction(b, 2 * SCALE) for b in bps] + [INFINITE]
    evaluation = bps + [bps[-1] + 1 if bps else 1]
    intervals = []
    for i, two_h in enumerate(evaluation):
        primes = _primes_ticks(two_h, d)
        masses = tuple(sorted((p.total_mass for p in primes), reverse=True))
        intervals.append(
            PathInterval(edges[i], edges[i + 1], len(primes), masses, tuple(sorted(p.encoding.data for p in primes)))
        )
    return TopsPath(tuple(edges[1:-1]), tuple(intervals))


def mass_fragmentation_path(d: Dendrogram) -> list:
    """``[((h_low, h_high), masses), ...]`` with masses sorted non-increasingly."""
    return [((iv.h_low, iv.h_high), iv.masses) for iv in tops_path(d).intervals]


def modulus_mass(delta, h, d: Dendrogram) -> Fraction:
    """Mass of atoms whose open 2h-ball carries mass below ``delta``."""
    delta = as_mass(delta)
    total = Fraction(0)
    for p in _primes_ticks(_two_h(h), d):
        if p.total_mass < delta:
            total += p.total_mass
    return total
