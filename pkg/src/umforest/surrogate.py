"""Transport-based surrogate distance between finite um-spaces.

``sum_{m=2}^{m_max} 2^-m W1(nu^m(d1), nu^m(d2)) + |mass(d1) - mass(d2)|``
where ``W1`` is the exact optimal transport cost between the (unnormalised)
distance-matrix measures under the max-norm on upper triangles. When the
total weights differ, the lighter side gets a sink atom reachable from
everywhere at cost ``max(diam d1, diam d2)``.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .dendrogram import SCALE, Dendrogram, canonicalize
from .errors import DomainError
from .polynomials import ENUMERATION_BUDGET, distance_matrix_measure


def _support(measure):
    keys = sorted(measure.weights)
    X = np.array(keys, dtype=np.float64).reshape(len(keys), -1) / SCALE
    w = np.array([float(measure.weights[k]) for k in keys])
    return X, w


def transport_cost(X1, w1, X2, w2, sink_cost: float) -> float:
    """Exact W1 between weighted point clouds under the max-norm, with a sink for unequal mass."""
    s1, s2 = w1.sum(), w2.sum()
    if s1 < s2:
        X1, w1, X2, w2, s1, s2 = X2, w2, X1, w1, s2, s1
    n1, n2 = len(w1), len(w2)
    if n1 == 0:
        return 0.0
    if X1.shape[1] == 0:
        C = np.zeros((n1, n2))
    else:
        C = np.abs(X1[:, None, :] - X2[None, :, :]).max(axis=2) if n2 else np.zeros((n1, 0))
    # the sink column absorbs the surplus of the heavier side
    C = np.hstack([C, np.full((n1, 1), sink_cost)])
    b2 = np.append(w2, s1 - s2)
    k = n2 + 1
    rows = np.concatenate([np.repeat(np.arange(n1), k), n1 + np.tile(np.arange(k), n1)])
    cols = np.concatenate([np.arange(n1 * k), np.arange(n1 * k)])
    A = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n1 + k, n1 * k)).tocsr()
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([w1, b2]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport solver failed: {res.message}")
    return max(0.0, float(res.fun))


def gw_surrogate_distance(d1: Dendrogram, d2: Dendrogram, m_max: int = 3, budget: int = ENUMERATION_BUDGET) -> float:
    """Symmetric, zero on isomorphic pairs; see module docstring."""
    if m_max < 2:
        raise DomainError("m_max must be at least 2")
    d1, d2 = canonicalize(d1), canonicalize(d2)
    sink = max(d1.diameter, d2.diameter)
    total = abs(float(d1.total_mass - d2.total_mass))
    for m in range(2, m_max + 1):
        X1, w1 = _support(distance_matrix_measure(m, d1, budget))
        X2, w2 = _support(distance_matrix_measure(m, d2, budget))
        total += 2.0**-m * transport_cost(X1, w1, X2, w2, sink)
    return total
