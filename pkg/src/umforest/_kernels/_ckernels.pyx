# cython: boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled twins of the kernels in ``_pykernels``; outputs are bit-identical."""

from libc.math cimport log, INFINITY, NAN
from libc.stdint cimport uint64_t, int64_t
from libcpp.vector cimport vector

import numpy as np

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t CHILD_SALT = 0xD1B54A32D192ED03ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t key, uint64_t counter) nogil:
    cdef uint64_t z = _mix64(key + (counter + 1) * GOLDEN)
    return <double>(z >> 11) * TWO_M53


cdef inline uint64_t _child(uint64_t key, uint64_t index) nogil:
    return _mix64((key ^ ((index + 1) * CHILD_SALT)) + GOLDEN)


def mix64(z):
    return int(_mix64(<uint64_t>z))


def counter_uniform(key, counter):
    return _uniform(<uint64_t>key, <uint64_t>counter)


def child_key(key, index):
    return int(_child(<uint64_t>key, <uint64_t>index))


def child_keys(key, start, Py_ssize_t n):
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] view = out
    cdef uint64_t k = <uint64_t>key
    cdef uint64_t s = <uint64_t>start
    cdef Py_ssize_t i
    for i in range(n):
        view[i] = _child(k, s + i)
    return out


def counter_uniforms(key, start, Py_ssize_t n):
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] view = out
    cdef uint64_t k = <uint64_t>key
    cdef uint64_t s = <uint64_t>start
    cdef Py_ssize_t i
    for i in range(n):
        view[i] = _uniform(k, s + i)
    return out


cdef struct Pending:
    uint64_t key
    double birth
    int64_t parent


def gw_forest(root_keys, double beta, double horizon, double p_split, Py_ssize_t max_nodes):
    cdef uint64_t[::1] keys = np.ascontiguousarray(root_keys, dtype=np.uint64)
    cdef vector[int64_t] parents
    cdef vector[double] times
    cdef vector[Pending] stack
    cdef Pending cur, nxt
    cdef Py_ssize_t r, n_roots = keys.shape[0]
    cdef double death
    cdef int64_t idx
    cdef bint overflow = False
    with nogil:
        for r in range(n_roots):
            cur.key = keys[r]
            cur.birth = 0.0
            cur.parent = -(r + 1)
            stack.push_back(cur)
            while stack.size() > 0:
                cur = stack.back()
                stack.pop_back()
                if beta <= 0.0:
                    death = INFINITY
                else:
                    death = cur.birth - log(1.0 - _uniform(cur.key, 0)) / beta
                if death >= horizon:
                    parents.push_back(cur.parent)
                    times.push_back(NAN)
                elif _uniform(cur.key, 1) < p_split:
                    idx = <int64_t>parents.size()
                    parents.push_back(cur.parent)
                    times.push_back(death)
                    nxt.birth = death
                    nxt.parent = idx
                    nxt.key = _child(cur.key, 1)
                    stack.push_back(nxt)
                    nxt.key = _child(cur.key, 0)
                    stack.push_back(nxt)
                if <Py_ssize_t>parents.size() > max_nodes:
                    overflow = True
                    break
            if overflow:
                break
    if overflow:
        raise OverflowError("branching simulation exceeded max_nodes=%d" % max_nodes)
    cdef Py_ssize_t n = parents.size()
    out_p = np.empty(n, dtype=np.int64)
    out_t = np.empty(n, dtype=np.float64)
    cdef int64_t[::1] vp = out_p
    cdef double[::1] vt = out_t
    cdef Py_ssize_t i
    for i in range(n):
        vp[i] = parents[i]
        vt[i] = times[i]
    return out_p, out_t


def gw_survivors(root_keys, double beta, double horizon, double p_split, Py_ssize_t max_nodes):
    cdef uint64_t[::1] keys = np.ascontiguousarray(root_keys, dtype=np.uint64)
    cdef vector[Pending] stack
    cdef Pending cur, nxt
    cdef Py_ssize_t r, n_roots = keys.shape[0]
    cdef Py_ssize_t count = 0, work = 0
    cdef double death
    cdef bint overflow = False
    with nogil:
        for r in range(n_roots):
            cur.key = keys[r]
            cur.birth = 0.0
            cur.parent = 0
            stack.push_back(cur)
            while stack.size() > 0:
                cur = stack.back()
                stack.pop_back()
                if beta <= 0.0:
                    death = INFINITY
                else:
                    death = cur.birth - log(1.0 - _uniform(cur.key, 0)) / beta
                if death >= horizon:
                    count += 1
                elif _uniform(cur.key, 1) < p_split:
                    nxt.birth = death
                    nxt.parent = 0
                    nxt.key = _child(cur.key, 1)
                    stack.push_back(nxt)
                    nxt.key = _child(cur.key, 0)
                    stack.push_back(nxt)
                work += 1
                if work > max_nodes:
                    overflow = True
                    break
            if overflow:
                break
    if overflow:
        raise OverflowError("branching simulation exceeded max_nodes=%d" % max_nodes)
    return count


def ultrametric_violation(D, int64_t tol):
    cdef int64_t[:, ::1] M = np.ascontiguousarray(D, dtype=np.int64)
    cdef Py_ssize_t n = M.shape[0]
    cdef Py_ssize_t i, j, k
    cdef int64_t rij, a, b
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                rij = M[i, j] - tol
                for k in range(n):
                    a = M[i, k]
                    b = M[j, k]
                    if rij > (a if a > b else b):
                        with gil:
                            return (i, j, k)
    return (-1, -1, -1)
