"""Pure-Python reference kernels.

Every function here has a bit-identical twin in ``_ckernels.pyx``. The
random streams are counter based: a draw is a pure function of a 64-bit
key and a counter, so lineages can be simulated in any order and still
agree across backends.
"""

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
CHILD_SALT = 0xD1B54A32D192ED03
_TWO_M53 = 1.0 / 9007199254740992.0


def mix64(z):
    """SplitMix64 finaliser."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def counter_uniform(key, counter):
    """Uniform double in [0, 1) addressed by ``(key, counter)``."""
    z = mix64((key + (counter + 1) * GOLDEN) & MASK64)
    return (z >> 11) * _TWO_M53


def child_key(key, index):
    return mix64(((key ^ (((index + 1) * CHILD_SALT) & MASK64)) + GOLDEN) & MASK64)


def child_keys(key, start, n):
    """``[child_key(key, start + i) for i < n]`` as uint64."""
    return np.array([child_key(key, start + i) for i in range(n)], dtype=np.uint64)


def counter_uniforms(key, start, n):
    return np.array([counter_uniform(key, start + i) for i in range(n)], dtype=np.float64)


def gw_forest(root_keys, beta, horizon, p_split, max_nodes):
    """Simulate binary branching lineages for each root individual.

    Each individual is born at some time ``s`` and carries a key. Its
    lifetime is exponential with rate ``beta`` (draw 0); at death it
    splits in two with probability ``p_split`` (draw 1), otherwise it
    leaves no offspring. Children get keys ``child_key(key, 0|1)``.

    Returns ``(parent, time)`` arrays over emitted records. A record is a
    surviving individual (``time`` is NaN) or a split event at ``time``.
    ``parent[i] >= 0`` indexes another record; ``parent[i] = -(r + 1)``
    marks the top record of root ``r``. Dead lineages emit nothing.
    """
    parents = []
    times = []
    for r in range(len(root_keys)):
        stack = [(int(root_keys[r]), 0.0, -(r + 1))]
        while stack:
            key, birth, parent = stack.pop()
            if beta <= 0.0:
                death = math.inf
            else:
                death = birth - math.log(1.0 - counter_uniform(key, 0)) / beta
            if death >= horizon:
                parents.append(parent)
                times.append(math.nan)
            elif counter_uniform(key, 1) < p_split:
                idx = len(parents)
                parents.append(parent)
                times.append(death)
                # second child pushed first so child 0 is expanded first
                stack.append((child_key(key, 1), death, idx))
                stack.append((child_key(key, 0), death, idx))
            if len(parents) > max_nodes:
                raise OverflowError("branching simulation exceeded max_nodes=%d" % max_nodes)
    return np.asarray(parents, dtype=np.int64), np.asarray(times, dtype=np.float64)


def gw_survivors(root_keys, beta, horizon, p_split, max_nodes):
    """Number of individuals alive at ``horizon``; same lineages as ``gw_forest``."""
    count = 0
    work = 0
    for r in range(len(root_keys)):
        stack = [(int(root_keys[r]), 0.0)]
        while stack:
            key, birth = stack.pop()
            if beta <= 0.0:
                death = math.inf
            else:
                death = birth - math.log(1.0 - counter_uniform(key, 0)) / beta
            if death >= horizon:
                count += 1
            elif counter_uniform(key, 1) < p_split:
                stack.append((child_key(key, 1), death))
                stack.append((child_key(key, 0), death))
            work += 1
            if work > max_nodes:
                raise OverflowError("branching simulation exceeded max_nodes=%d" % max_nodes)
    return count


def ultrametric_violation(D, tol):
    """First ``(i, j, k)`` breaking ``D[i, j] <= max(D[i, k], D[k, j]) + tol``.

    Returns ``(-1, -1, -1)`` if none. ``D`` is a square int64 matrix that
    is already known to be symmetric with a zero diagonal.
    """
    n = D.shape[0]
    rows = D.tolist()
    for i in range(n):
        ri = rows[i]
        for j in range(i + 1, n):
            rij = ri[j] - tol
            rj = rows[j]
            for k in range(n):
                a = ri[k]
                b = rj[k]
                if rij > (a if a > b else b):
                    return (i, j, k)
    return (-1, -1, -1)
