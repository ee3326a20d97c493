# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex tableau kernels (hot inner loops).

Mirror of ``_py_kernel``; see that module for the tableau contract.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def pivot(double[:, ::1] T, long long[::1] basis, Py_ssize_t row, Py_ssize_t col):
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t n = T.shape[1]
    cdef Py_ssize_t i, j
    # true division, not reciprocal-multiply, to match the numpy kernel
    cdef double pivval = T[row, col]
    cdef double a
    for j in range(n):
        T[row, j] = T[row, j] / pivval
    for i in range(m):
        if i == row:
            continue
        a = T[i, col]
        if a != 0.0:
            for j in range(n):
                T[i, j] = T[i, j] - a * T[row, j]
    for i in range(m):
        T[i, col] = 0.0
    T[row, col] = 1.0
    basis[row] = col


def entering_bland(double[:, ::1] T, cnp.uint8_t[::1] allowed, double tol):
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t n = T.shape[1] - 1
    cdef Py_ssize_t j
    for j in range(n):
        if allowed[j] and T[m - 1, j] < -tol:
            return j
    return -1


def entering_steepest(double[:, ::1] T, cnp.uint8_t[::1] allowed, double tol):
    cdef Py_ssize_t m = T.shape[0] - 1
    cdef Py_ssize_t n = T.shape[1] - 1
    cdef Py_ssize_t i, j
    cdef Py_ssize_t best = -1
    cdef double best_score = -1.0
    cdef double r, gamma, score
    for j in range(n):
        r = T[m, j]
        if not allowed[j] or r >= -tol:
            continue
        gamma = 1.0
        for i in range(m):
            gamma = gamma + T[i, j] * T[i, j]
        score = r * r / gamma
        if score > best_score:
            best_score = score
            best = j
    return best


def ratio_test(double[:, ::1] T, long long[::1] basis, Py_ssize_t col,
               double tol_piv, double harris_slack=1e-9):
    cdef Py_ssize_t m = T.shape[0] - 1
    cdef Py_ssize_t last = T.shape[1] - 1
    cdef Py_ssize_t i
    cdef Py_ssize_t best = -1
    cdef double theta = 0.0
    cdef int have = 0
    cdef double a, t, best_a
    # pass 1: slack-relaxed minimum ratio
    for i in range(m):
        a = T[i, col]
        if a > tol_piv:
            t = (T[i, last] + harris_slack) / a
            if not have or t < theta:
                theta = t
                have = 1
    if not have:
        return -1
    # pass 2: largest pivot among rows within the relaxed ratio
    best_a = 0.0
    for i in range(m):
        a = T[i, col]
        if a > tol_piv and T[i, last] / a <= theta:
            if best < 0 or a > best_a:
                best_a = a
                best = i
            elif a == best_a and basis[i] < basis[best]:
                best = i
    return best
