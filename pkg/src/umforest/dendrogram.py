"""Finite ultrametric measure spaces as canonical dendrograms.

A finite um-space ``[U, r, mu]`` is stored as a rooted tree: leaves are
atoms carrying a mass (and optionally a mark), internal nodes carry a
height, and ``r(i, j)`` is the height of the lowest common ancestor of
leaves ``i`` and ``j``.

Heights are fixed-point integers ("ticks") with ``PRECISION`` fractional
decimal digits, and masses are :class:`fractions.Fraction`. Both choices
make the canonical form, and every algebraic identity built on it, exact.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from functools import cached_property
from numbers import Integral, Rational
from typing import Hashable, Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, MalformedDendrogram, NotUltrametric

PRECISION = 12
SCALE = 10**PRECISION
_QUANTUM = Decimal(1).scaleb(-PRECISION)


# -- number conversion ------------------------------------------------------


def to_ticks(x) -> int:
    """Quantise a height or distance to integer ticks (round half even)."""
    if isinstance(x, bool):
        raise TypeError("booleans are not heights")
    if isinstance(x, Integral):
        return int(x) * SCALE
    if isinstance(x, Rational):
        return round(Fraction(x) * SCALE)
    if isinstance(x, float):
        if x != x or x in (float("inf"), float("-inf")):
            raise ValueError(f"non-finite height {x!r}")
        x = Decimal(repr(x))
    elif isinstance(x, str):
        x = Decimal(x)
    elif not isinstance(x, Decimal):
        x = Decimal(repr(float(x)))
    return int(x.scaleb(PRECISION).quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def ticks_to_decimal(t: int) -> Decimal:
    d = Decimal(t).scaleb(-PRECISION)
    return d.quantize(Decimal(1)) if d == d.to_integral_value() else d.normalize()


def ticks_to_float(t) -> float:
    return t / SCALE


def as_mass(x) -> Fraction:
    """Exact mass: floats and strings are read as the decimal they print as."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not masses")
    if isinstance(x, (Integral, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, (str, Decimal)):
        return Fraction(str(x))
    return Fraction(repr(float(x)))


def format_mass(m: Fraction) -> str:
    """Decimal string when the fraction terminates, ``p/q`` otherwise."""
    if m.denominator == 1:
        return str(m.numerator)
    q = m.denominator
    twos = fives = 0
    while q % 2 == 0:
        q //= 2
        twos += 1
    while q % 5 == 0:
        q //= 5
        fives += 1
    if q != 1:
        return f"{m.numerator}/{m.denominator}"
    digits = max(twos, fives)
    return str((Decimal(m.numerator) / Decimal(m.denominator)).quantize(Decimal(1).scaleb(-digits)).normalize())


# -- tree types ---------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Leaf:
    """An atom. ``label`` is bookkeeping only and ignored by equality."""

    mass: Fraction
    mark: Hashable = None
    label: object = field(default=None, compare=False)


@dataclass(frozen=True, slots=True)
class Node:
    """Internal node; ``ticks`` is the height in units of ``10**-PRECISION``."""

    ticks: int
    children: tuple

    @property
    def height(self) -> float:
        return self.ticks / SCALE


Tree = Leaf | Node


def leaf(mass, mark=None, label=None) -> Leaf:
    return Leaf(as_mass(mass), mark, label)


def node(height, *children) -> Node:
    """Internal node at ``height`` (user units); children may be Dendrograms."""
    kids = []
    for c in children:
        if isinstance(c, Dendrogram):
            if c.root is not None:
                kids.append(c.root)
        else:
            kids.append(c)
    return Node(to_ticks(height), tuple(kids))


def fold(root: Tree, on_leaf, on_node):
    """Iterative post-order fold; ``on_node(node, child_results)``."""
    stack = [(root, False)]
    results: list = []
    while stack:
        t, expanded = stack.pop()
        if type(t) is Leaf:
            results.append(on_leaf(t))
        elif expanded:
            k = len(t.children)
            if k:
                kids = results[-k:]
                del results[-k:]
            else:
                kids = []
            results.append(on_node(t, kids))
        else:
            stack.append((t, True))
            for c in reversed(t.children):
                stack.append((c, False))
    return results[0]


@dataclass(frozen=True)
class CanonicalEncoding:
    """Byte encoding of a canonical dendrogram plus a short stable hash."""

    data: bytes

    @property
    def digest(self) -> str:
        return hashlib.blake2b(self.data, digest_size=12).hexdigest()

    def __str__(self):
        return self.data.decode()


@dataclass(frozen=True)
class Dendrogram:
    """A finite ultrametric measure space.

    ``root`` is ``None`` for the null space. ``canonical`` records that the
    tree is already in canonical form; operations return canonical trees.
    """

    root: Tree | None = None
    canonical: bool = field(default=False, compare=False)

    @property
    def is_null(self) -> bool:
        return self.root is None

    @cached_property
    def atoms(self) -> tuple:
        """Leaves in depth-first (canonical) order."""
        if self.root is None:
            return ()
        out = []
        stack = [self.root]
        while stack:
            t = stack.pop()
            if type(t) is Leaf:
                out.append(t)
            else:
                stack.extend(reversed(t.children))
        return tuple(out)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @cached_property
    def total_mass(self) -> Fraction:
        return sum((a.mass for a in self.atoms), Fraction(0))

    @property
    def diameter_ticks(self) -> int:
        return self.root.ticks if type(self.root) is Node else 0

    @property
    def diameter(self) -> float:
        return self.diameter_ticks / SCALE

    @cached_property
    def encoding(self) -> CanonicalEncoding:
        c = self if self.canonical else canonicalize(self)
        return CanonicalEncoding(_encode(c.root).encode())

    @cached_property
    def lca_ticks(self) -> np.ndarray:
        """Matrix of pairwise distances in ticks, atoms in ``self.atoms`` order."""
        n = self.n_atoms
        D = np.zeros((n, n), dtype=np.int64)
        if n <= 1:
            D.flags.writeable = False
            return D
        counter = iter(range(n))

        def on_leaf(_):
            return [next(counter)]

        def on_node(t, kids):
            for a in range(len(kids)):
                ia = kids[a]
                for b in range(a + 1, len(kids)):
                    ib = kids[b]
                    D[np.ix_(ia, ib)] = t.ticks
                    D[np.ix_(ib, ia)] = t.ticks
            return [i for k in kids for i in k]

        fold(self.root, on_leaf, on_node)
        D.flags.writeable = False
        return D

    @cached_property
    def masses(self) -> np.ndarray:
        return np.array([float(a.mass) for a in self.atoms], dtype=np.float64)

    def __repr__(self):
        return f"Dendrogram({_encode(self.root) if self.root is not None else 'null'})"


NULL = Dendrogram(None, canonical=True)


def singleton(mass, mark=None, label=None) -> Dendrogram:
    return canonicalize(Dendrogram(leaf(mass, mark, label)))


def star(h, masses: Sequence, marks: Sequence | None = None) -> Dendrogram:
    """Singletons at mutual distance ``2h`` (an h-forest of singleton primes)."""
    marks = marks if marks is not None else [None] * len(masses)
    return canonicalize(Dendrogram(Node(2 * to_ticks(h), tuple(leaf(m, k) for m, k in zip(masses, marks)))))


# -- encoding -----------------------------------------------------------------


def _leaf_code(t: Leaf) -> str:
    code = "m" + format_mass(t.mass)
    if t.mark is not None:
        code += "@" + repr(t.mark)
    return code


def _encode(root) -> str:
    if root is None:
        return "0"
    return fold(root, _leaf_code, lambda t, kids: f"n{t.ticks}[" + ",".join(kids) + "]")


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class Issue:
    kind: str
    severity: str  # "error" or "noncanonical"
    path: tuple
    message: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple = ()

    @property
    def ok(self) -> bool:
        """No hard errors (canonicalisation is possible)."""
        return not any(i.severity == "error" for i in self.issues)

    @property
    def clean(self) -> bool:
        return not self.issues

    def kinds(self) -> set:
        return {i.kind for i in self.issues}

    def __str__(self):
        if self.clean:
            return "clean"
        return "\n".join(f"{i.severity}: {i.kind} at {list(i.path)}: {i.message}" for i in self.issues)


def validate(d: Dendrogram, canonical_checks: bool = True) -> ValidationReport:
    """Report every violated structural invariant of ``d``.

    Hard errors: negative mass, negative height, child height above its
    parent, foreign objects. Canonical-form violations (unary or empty
    nodes, zero-mass leaves, nested equal heights, mergeable zero-distance
    atoms, unsorted children) are reported with severity "noncanonical".
    """
    issues = []
    if d.root is None:
        return ValidationReport(())
    stack = [(d.root, ())]
    while stack:
        t, path = stack.pop()
        if type(t) is Leaf:
            if not isinstance(t.mass, Fraction):
                issues.append(Issue("bad mass", "error", path, f"mass {t.mass!r} is not exact"))
            elif t.mass < 0:
                issues.append(Issue("negative mass", "error", path, f"mass {t.mass}"))
            elif t.mass == 0 and canonical_checks:
                issues.append(Issue("zero mass", "noncanonical", path, "atom outside the support"))
            continue
        if type(t) is not Node:
            issues.append(Issue("bad node", "error", path, f"unexpected object {type(t).__name__}"))
            continue
        if t.ticks < 0:
            issues.append(Issue("negative height", "error", path, f"height {ticks_to_decimal(t.ticks)}"))
        if not canonical_checks:
            for i, c in enumerate(t.children):
                if type(c) is Node and c.ticks > t.ticks:
                    issues.append(Issue("heights not decreasing", "error", path + (i,), "child height above parent"))
                stack.append((c, path + (i,)))
            continue
        if len(t.children) == 0:
            issues.append(Issue("empty node", "noncanonical", path, "node without children"))
        elif len(t.children) == 1:
            issues.append(Issue("unary node", "noncanonical", path, "node with a single child"))
        for i, c in enumerate(t.children):
            if type(c) is Node:
                if c.ticks > t.ticks:
                    issues.append(
                        Issue(
                            "heights not decreasing",
                            "error",
                            path + (i,),
                            f"child height {ticks_to_decimal(c.ticks)} above parent {ticks_to_decimal(t.ticks)}",
                        )
                    )
                elif c.ticks == t.ticks:
                    issues.append(Issue("equal nested heights", "noncanonical", path + (i,), "child at parent height"))
            stack.append((c, path + (i,)))
        if t.ticks == 0 and len(t.children) > 1:
            marks = [c.mark for c in t.children if type(c) is Leaf]
            if len(set(marks)) < len(marks):
                issues.append(Issue("mergeable atoms", "noncanonical", path, "zero-distance atoms with equal marks"))
        if len(t.children) > 1 and all(type(c) in (Leaf, Node) for c in t.children):
            codes = [_encode(c) for c in t.children]
            if codes != sorted(codes):
                issues.append(Issue("unsorted children", "noncanonical", path, "children not in canonical order"))
    issues.sort(key=lambda i: (i.path, i.kind))
    return ValidationReport(tuple(issues))


# -- canonicalisation ---------------------------------------------------------


def canonicalize(d: Dendrogram) -> Dendrogram:
    """Canonical representative of the isomorphism class of ``d``.

    Drops zero-mass atoms, collapses unary and empty nodes, flattens nested
    nodes of equal height, merges zero-distance atoms with equal marks and
    sorts children by their encodings. Idempotent.
    """
    if d.canonical:
        return d
    if d.root is None:
        return NULL
    report = validate(d, canonical_checks=False)
    if not report.ok:
        raise MalformedDendrogram(str(report))
    res = fold(d.root, _canon_leaf, _canon_node)
    if res is None:
        return NULL
    out = Dendrogram(res[0], canonical=True)
    out.__dict__["encoding"] = CanonicalEncoding(res[1].encode())
    return out


def _canon_leaf(t: Leaf):
    if t.mass == 0:
        return None
    return (t, _leaf_code(t), None)


def _canon_node(t: Node, kids):
    H = t.ticks
    items = []
    for k in kids:
        if k is None:
            continue
        sub = k[0]
        if type(sub) is Node and sub.ticks == H:
            items.extend(k[2])
        else:
            items.append(k)
    if H == 0 and len(items) > 1:
        merged: dict = {}
        for it in items:
            lf = it[0]
            if lf.mark in merged:
                prev = merged[lf.mark]
                merged[lf.mark] = Leaf(prev.mass + lf.mass, lf.mark, None)
            else:
                merged[lf.mark] = lf
        items = [(lf, _leaf_code(lf), None) for lf in merged.values()]
    if not items:
        return None
    if len(items) == 1:
        return items[0]
    items.sort(key=lambda it: it[1])
    tree = Node(H, tuple(it[0] for it in items))
    return (tree, f"n{H}[" + ",".join(it[1] for it in items) + "]", items)


def make(root: Tree | None) -> Dendrogram:
    """Canonical dendrogram from a raw tree."""
    return canonicalize(Dendrogram(root))


def is_isomorphic(d1: Dendrogram, d2: Dendrogram) -> bool:
    return canonicalize(d1).encoding == canonicalize(d2).encoding


# -- distance matrices --------------------------------------------------------


def _ticks_matrix(R) -> np.ndarray:
    R = np.asarray(R)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise NotUltrametric(f"distance matrix must be square, got shape {R.shape}")
    if R.dtype.kind in "iu":
        return R.astype(np.int64) * SCALE
    out = np.empty(R.shape, dtype=np.int64)
    for idx, x in np.ndenumerate(R):
        out[idx] = to_ticks(x.item() if hasattr(x, "item") else x)
    return out


def from_distance_matrix(R, masses: Sequence, eps_um=0, marks: Sequence | None = None) -> Dendrogram:
    """Dendrogram realising the ultrametric ``R`` with atom masses ``masses``.

    ``eps_um`` is the tolerance (user units) for the diagonal, symmetry and
    the strong triangle inequality. Leaves are labelled with their row
    index so that ``to_distance_matrix`` can restore the input order.
    """
    T = _ticks_matrix(R)
    n = T.shape[0]
    if len(masses) != n:
        raise ValueError(f"{len(masses)} masses for a {n}x{n} matrix")
    tol = to_ticks(eps_um)
    if np.any(T < 0):
        i, j = map(int, np.argwhere(T < 0)[0])
        raise NotUltrametric(f"negative distance r[{i},{j}]", (i, j, j))
    diag = np.abs(np.diag(T))
    if np.any(diag > tol):
        i = int(np.argmax(diag))
        raise NotUltrametric(f"nonzero diagonal entry r[{i},{i}]", (i, i, i))
    asym = np.abs(T - T.T)
    if np.any(asym > tol):
        i, j = map(int, np.argwhere(asym > tol)[0])
        raise NotUltrametric(f"asymmetric entries r[{i},{j}] != r[{j},{i}]", (i, j, i))
    T = np.maximum(T, T.T)
    np.fill_diagonal(T, 0)
    i, j, k = _kernels.ultrametric_violation(np.ascontiguousarray(T), tol)
    if i >= 0:
        raise NotUltrametric(
            f"strong triangle inequality fails for ({i},{j},{k}): "
            f"r[{i},{j}]={ticks_to_decimal(int(T[i, j]))} > max(r[{i},{k}]={ticks_to_decimal(int(T[i, k]))}, "
            f"r[{k},{j}]={ticks_to_decimal(int(T[k, j]))})",
            (i, j, k),
        )
    mass = [as_mass(m) for m in masses]
    if any(m < 0 for m in mass):
        raise MalformedDendrogram("negative mass")
    mk = list(marks) if marks is not None else [None] * n
    if n == 0:
        return NULL
    root = _single_linkage(T, list(range(n)), mass, mk)
    return canonicalize(Dendrogram(root))


def _single_linkage(T, idx, mass, marks):
    # exact top-down split at the block maximum; components of {r < H}
    work = [(idx, None)]
    built: dict = {}
    order = []
    while work:
        block, parent = work.pop()
        key = len(order)
        order.append((block, parent))
        if len(block) == 1:
            i = block[0]
            built[key] = Leaf(mass[i], marks[i], i)
            continue
        sub = T[np.ix_(block, block)]
        H = int(sub.max())
        if H == 0:
            built[key] = Node(0, tuple(Leaf(mass[i], marks[i], i) for i in block))
            continue
        built[key] = H
        seen = np.zeros(len(block), dtype=bool)
        for s in range(len(block)):
            if seen[s]:
                continue
            comp = []
            queue = deque([s])
            seen[s] = True
            while queue:
                a = queue.popleft()
                comp.append(a)
                nbr = np.nonzero((sub[a] < H) & ~seen)[0]
                seen[nbr] = True
                queue.extend(nbr.tolist())
            work.append(([block[c] for c in sorted(comp)], key))
    children: dict = {}
    for key in range(len(order) - 1, -1, -1):
        block, parent = order[key]
        val = built[key]
        if not isinstance(val, (Leaf, Node)):
            val = Node(val, tuple(reversed(children.get(key, []))))
            built[key] = val
        if parent is not None:
            children.setdefault(parent, []).append(val)
    return built[0]


def to_distance_matrix(d: Dendrogram, ticks: bool = False):
    """``(R, masses, labels)`` with atoms in canonical order.

    ``R`` holds distances as floats (or integer ticks with ``ticks=True``).
    """
    c = canonicalize(d)
    T = np.array(c.lca_ticks)
    R = T if ticks else T / SCALE
    return R, [a.mass for a in c.atoms], [a.label for a in c.atoms]


# -- scaling ------------------------------------------------------------------


def _map_tree(root, leaf_fn, ticks_fn):
    return fold(root, leaf_fn, lambda t, kids: Node(ticks_fn(t.ticks), tuple(kids)))


def scale_metric(a, d: Dendrogram) -> Dendrogram:
    """``a ⊛ d``: every distance multiplied by ``a > 0``."""
    fa = as_mass(a)
    if fa <= 0:
        raise DomainError(f"metric scale factor must be positive, got {a}")
    if d.root is None:
        return NULL
    return make(_map_tree(d.root, lambda l: l, lambda t: round(t * fa)))


def scale_mass(a, d: Dendrogram) -> Dendrogram:
    """Every mass multiplied by ``a >= 0``; ``a = 0`` gives the null space."""
    fa = as_mass(a)
    if fa < 0:
        raise DomainError(f"mass scale factor must be nonnegative, got {a}")
    if d.root is None or fa == 0:
        return NULL
    return make(_map_tree(d.root, lambda l: Leaf(l.mass * fa, l.mark, l.label), lambda t: t))


def relabel(d: Dendrogram, labels: Iterable) -> Dendrogram:
    """Copy of canonical ``d`` with leaf labels replaced in atom order."""
    c = canonicalize(d)
    if c.root is None:
        return c
    it = iter(labels)
    root = _map_tree(c.root, lambda l: Leaf(l.mass, l.mark, next(it)), lambda t: t)
    out = Dendrogram(root, canonical=True)
    return out
