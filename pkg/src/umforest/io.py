"""Dendrogram documents (JSON / JSON Lines) and CSV emitters.

Document grammar::

    leaf  := {"mass": <decimal>, "mark": <json, optional>, "id": <json, optional>}
    node  := {"height": <decimal>, "children": [leaf | node, ...]}
    doc   := leaf | node | null
           | {"mark_space": <space>, "tree": leaf | node | null}

Numbers are written as strings so they survive JSON round trips exactly;
on input, numbers and strings are both accepted. Masses that do not
terminate in decimal are written as ``"p/q"``.
"""

from __future__ import annotations

import csv
import json
from decimal import Decimal
from fractions import Fraction

from .dendrogram import Dendrogram, Leaf, Node, as_mass, fold, format_mass, make, ticks_to_decimal, to_ticks
from .errors import MalformedDendrogram
from .marked import MarkedDendrogram, MarkSpace


def _num(x):
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise MalformedDendrogram(f"expected a number, got {x!r}")
    return x


def _mark_in(x):
    return tuple(_mark_in(v) for v in x) if isinstance(x, list) else x


def _mark_out(x):
    return [_mark_out(v) for v in x] if isinstance(x, tuple) else x


def tree_from_json(obj):
    """Raw (not canonicalised) tree from parsed JSON; ``None`` for the null space."""
    if obj is None:
        return None
    stack = [(obj, False)]
    out = []
    while stack:
        o, done = stack.pop()
        if not isinstance(o, dict):
            raise MalformedDendrogram(f"expected an object, got {type(o).__name__}")
        if "mass" in o:
            try:
                m = as_mass(_num(o["mass"]))
            except (ValueError, ZeroDivisionError) as e:
                raise MalformedDendrogram(f"bad mass {o['mass']!r}") from e
            out.append(Leaf(m, _mark_in(o.get("mark")), _mark_in(o.get("id"))))
        elif "height" in o and "children" in o:
            kids = o["children"]
            if not isinstance(kids, list):
                raise MalformedDendrogram("children must be a list")
            if done:
                k = len(kids)
                ch = tuple(out[len(out) - k :]) if k else ()
                del out[len(out) - k :]
                try:
                    t = to_ticks(_num(o["height"]))
                except (ValueError, ArithmeticError) as e:
                    raise MalformedDendrogram(f"bad height {o['height']!r}") from e
                out.append(Node(t, ch))
            else:
                stack.append((o, True))
                stack.extend((c, False) for c in reversed(kids))
        else:
            raise MalformedDendrogram(f"object is neither a leaf nor a node: keys {sorted(o)}")
    return out[0]


def tree_to_json(root):
    if root is None:
        return None

    def on_leaf(l):
        o = {"mass": format_mass(l.mass)}
        if l.mark is not None:
            o["mark"] = _mark_out(l.mark)
        if l.label is not None:
            o["id"] = _mark_out(l.label)
        return o

    return fold(root, on_leaf, lambda n, kids: {"height": str(ticks_to_decimal(n.ticks)), "children": kids})


def from_document(obj):
    """Canonical ``Dendrogram`` or ``MarkedDendrogram`` (when a mark space header is present)."""
    if isinstance(obj, dict) and "mark_space" in obj:
        space = MarkSpace.from_json(obj["mark_space"])
        return MarkedDendrogram(space, Dendrogram(tree_from_json(obj.get("tree"))))
    return make(tree_from_json(obj))


def raw_from_document(obj):
    """``(tree, mark_space or None)`` without canonicalisation, for validation."""
    if isinstance(obj, dict) and "mark_space" in obj:
        return Dendrogram(tree_from_json(obj.get("tree"))), MarkSpace.from_json(obj["mark_space"])
    return Dendrogram(tree_from_json(obj)), None


def to_document(d):
    if isinstance(d, MarkedDendrogram):
        return {"mark_space": d.space.to_json(), "tree": tree_to_json(d.tree.root)}
    return tree_to_json(d.root)


def dumps(d) -> str:
    return json.dumps(to_document(d), separators=(",", ":"))


def loads(text: str):
    return from_document(json.loads(text))


def parse_documents(text: str) -> list:
    """Parsed JSON values: one whole-text document, or one per non-empty line."""
    try:
        return [json.loads(text)]
    except json.JSONDecodeError:
        pass
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise MalformedDendrogram(f"line {n}: {e}") from e
    return out


def read_documents(path) -> list:
    with open(path) as fh:
        return [from_document(o) for o in parse_documents(fh.read())]


def write_documents(docs, fh):
    for d in docs:
        fh.write(dumps(d) + "\n")


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return format_mass(x)
    if isinstance(x, float) and x == float("inf"):
        return "inf"
    if isinstance(x, Decimal):
        return str(x)
    return str(x)


def emit_path_csv(path, fh):
    """Rows ``h_low, h_high, count, mass_1, ...``; short rows are padded with empty cells."""
    width = max((iv.count for iv in path.intervals), default=0)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["h_low", "h_high", "count"] + [f"mass_{i + 1}" for i in range(width)])
    for iv in path.intervals:
        masses = [_fmt(m) for m in iv.masses]
        w.writerow([_fmt(iv.h_low), _fmt(iv.h_high), iv.count] + masses + [""] * (width - len(masses)))
