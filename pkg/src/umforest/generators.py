"""Seeded random dendrograms and exhaustive enumeration of small spaces."""

from __future__ import annotations

import itertools
from fractions import Fraction

from .dendrogram import NULL, Dendrogram, Leaf, Node, make, to_ticks
from .semigroup import truncate

HEIGHT_GRID = tuple(Fraction(k, 2) for k in range(0, 21))  # 0, 0.5, ..., 10
MASS_CHOICES = (Fraction(1), Fraction(2), Fraction(3), Fraction(1, 2), Fraction(3, 4))


def random_dendrogram(rng, max_atoms=50, min_atoms=1, marks=None, masses=MASS_CHOICES, heights=HEIGHT_GRID, max_height=None):
    """Random canonical dendrogram built by coalescing random blocks.

    Heights come from a coarse grid so ties, zero distances and exact
    ``2h`` boundaries all occur. ``marks`` is an optional mark alphabet.
    """
    n = int(rng.integers(min_atoms, max_atoms + 1))
    grid = [h for h in heights if max_height is None or h <= max_height]
    clusters = []
    for i in range(n):
        mark = None if marks is None else marks[int(rng.integers(len(marks)))]
        clusters.append((Leaf(masses[int(rng.integers(len(masses)))], mark, i), Fraction(0)))
    while len(clusters) > 1:
        k = int(rng.integers(2, min(4, len(clusters)) + 1))
        pick = sorted(rng.choice(len(clusters), size=k, replace=False).tolist(), reverse=True)
        group = [clusters.pop(i) for i in pick]
        floor = max(h for _, h in group)
        above = [h for h in grid if h >= floor and (h > floor or floor == 0)]
        H = above[int(rng.integers(min(len(above), 4)))] if above else floor
        clusters.append((Node(to_ticks(H), tuple(t for t, _ in group)), H))
    return make(clusters[0][0])


def random_forest(rng, h, max_atoms=10, **kw) -> Dendrogram:
    """Random h-forest: a random dendrogram truncated at ``h``."""
    return truncate(h, random_dendrogram(rng, max_atoms=max_atoms, **kw))


def node_depths(d: Dendrogram) -> list:
    """Half of each distinct positive height: the depths where decompositions change."""
    out = set()
    stack = [d.root] if d.root is not None else []
    while stack:
        t = stack.pop()
        if type(t) is Node:
            if t.ticks > 0:
                out.add(Fraction(t.ticks, 2 * 10**12))
            stack.extend(t.children)
    return sorted(out)


def random_depths(rng, d: Dendrogram, k: int) -> list:
    """``k`` positive depths mixing exact breakpoints and generic values."""
    bps = node_depths(d)
    out = []
    for i in range(k):
        if bps and i % 2 == 0:
            out.append(bps[int(rng.integers(len(bps)))])
        else:
            out.append(Fraction(int(rng.integers(1, 1200)), 200))
    return out


def _trees(n, heights):
    """All canonical trees with ``n`` unit-mass leaves and node heights from ``heights``."""
    if n == 1:
        yield Leaf(Fraction(1))
        return
    for hi, H in enumerate(heights):
        lower = heights[:hi]
        # multisets of subtrees with sizes forming a partition of n into >= 2 parts
        for parts in _partitions(n):
            if len(parts) < 2:
                continue
            pools = [list(_trees(p, lower)) for p in parts]
            for combo in itertools.product(*pools):
                yield Node(to_ticks(H), combo)


def _partitions(n, largest=None):
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for k in range(min(n, largest), 0, -1):
        for rest in _partitions(n - k, k):
            yield (k,) + rest


def all_small_spaces(max_atoms=6, heights=(1, 2, 3)) -> list:
    """Every canonical unit-mass dendrogram with at most ``max_atoms`` atoms, deduplicated."""
    heights = sorted(heights)
    seen = {}
    for n in range(1, max_atoms + 1):
        for t in _trees(n, heights):
            d = make(t)
            # nested equal heights or unary collapse can shrink the atom count; keep anyway
            seen.setdefault(d.encoding.data, d)
    return [NULL] + [seen[k] for k in sorted(seen)]
