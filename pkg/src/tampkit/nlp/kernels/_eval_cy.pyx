# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled evaluator for packed factor tables.

Mirrors _eval_py row for row; only graphs whose factors all have closed-form
shapes are routed here.  The equivalence test in tests/test_kernels.py diffs
the two backends on random graphs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

DEF EPS_NORM = 1e-12

F_LIN_EQ = 0
F_NORM = 1
F_SEP = 2
F_BOX = 3


cdef inline void _expr(const int[:] scope, const int[:] scope_start,
                       const double[:] sign, const double[:] const,
                       const int[:] const_start, int i,
                       const double[:] x, double* out, int* dim_out) nogil:
    cdef int s0 = scope_start[i]
    cdef int s1 = scope_start[i + 1]
    cdef int c0 = const_start[i]
    cdef int c1 = const_start[i + 1]
    cdef int n_scope = (s1 - s0) / 2
    cdef int dim = c1 - c0
    cdef int k, d, off, j
    if n_scope > 0 and scope[s0 + 1] > dim:
        dim = scope[s0 + 1]
    for j in range(dim):
        out[j] = const[c0 + j] if j < (c1 - c0) else 0.0
    cdef int sign_base = s0 / 2
    cdef double s
    for k in range(n_scope):
        off = scope[s0 + 2 * k]
        d = scope[s0 + 2 * k + 1]
        s = sign[sign_base + k]
        for j in range(d):
            out[j] += s * x[off + j]
    dim_out[0] = dim


def residuals(p, cnp.ndarray[double, ndim=1] x):
    cdef const int[:] kind = p.kind
    cdef const int[:] scope = p.scope
    cdef const int[:] scope_start = p.scope_start
    cdef const double[:] sign = p.sign
    cdef const double[:] const = p.const
    cdef const int[:] const_start = p.const_start
    cdef const double[:] aux = p.aux
    cdef const int[:] aux_start = p.aux_start
    cdef const int[:] eq_start = p.eq_start
    cdef const int[:] ineq_start = p.ineq_start

    cdef cnp.ndarray[double, ndim=1] h = np.zeros(p.nh)
    cdef cnp.ndarray[double, ndim=1] g = np.zeros(p.ng)
    cdef double[:] hv = h
    cdef double[:] gv = g
    cdef const double[:] xv = x

    cdef int i, j, dim, a0, out
    cdef double e[8]
    cdef double nrm, r
    cdef int nf = kind.shape[0]
    with nogil:
        for i in range(nf):
            _expr(scope, scope_start, sign, const, const_start, i, xv, e, &dim)
            if kind[i] == 0:      # LIN
                if eq_start[i] >= 0:
                    for j in range(dim):
                        hv[eq_start[i] + j] = e[j]
                else:
                    for j in range(dim):
                        gv[ineq_start[i] + j] = e[j]
            elif kind[i] == 1:    # NORM
                nrm = 0.0
                for j in range(dim):
                    nrm += e[j] * e[j]
                gv[ineq_start[i]] = sqrt(nrm + EPS_NORM) - aux[aux_start[i]]
            elif kind[i] == 2:    # SEP
                nrm = 0.0
                for j in range(dim):
                    nrm += e[j] * e[j]
                gv[ineq_start[i]] = aux[aux_start[i]] - sqrt(nrm + EPS_NORM)
            else:                 # BOX
                a0 = aux_start[i]
                out = ineq_start[i]
                for j in range(dim):
                    gv[out + j] = aux[a0 + j] - e[j]
                    gv[out + dim + j] = e[j] - aux[a0 + dim + j]
    return h, g


def al_value(p, cnp.ndarray[double, ndim=1] x,
             cnp.ndarray[double, ndim=1] lam, cnp.ndarray[double, ndim=1] mu,
             double rho, double w_ref, cnp.ndarray[double, ndim=1] x_ref):
    h, g = residuals(p, x)
    cdef double val = 0.0
    cdef const double[:] hv = h
    cdef const double[:] gv = g
    cdef const double[:] muv = mu
    cdef const double[:] lamv = lam
    cdef int j
    cdef double t
    for j in range(hv.shape[0]):
        t = hv[j] + lamv[j] / rho
        val += 0.5 * rho * t * t
    for j in range(gv.shape[0]):
        if gv[j] >= 0.0 or muv[j] > 0.0:
            t = gv[j] + muv[j] / rho
            val += 0.5 * rho * t * t
    cdef const double[:] xv = x
    cdef const double[:] xr = x_ref
    if w_ref > 0.0:
        for j in range(xv.shape[0]):
            t = xv[j] - xr[j]
            val += 0.5 * w_ref * t * t
    return val


def al_normal(p, cnp.ndarray[double, ndim=1] x,
              cnp.ndarray[double, ndim=1] lam, cnp.ndarray[double, ndim=1] mu,
              double rho, double w_ref, cnp.ndarray[double, ndim=1] x_ref):
    cdef const int[:] kind = p.kind
    cdef const int[:] scope = p.scope
    cdef const int[:] scope_start = p.scope_start
    cdef const double[:] sign = p.sign
    cdef const double[:] const = p.const
    cdef const int[:] const_start = p.const_start
    cdef const double[:] aux = p.aux
    cdef const int[:] aux_start = p.aux_start
    cdef const int[:] eq_start = p.eq_start
    cdef const int[:] ineq_start = p.ineq_start

    cdef int n = p.nx
    cdef cnp.ndarray[double, ndim=1] grad = np.zeros(n)
    cdef cnp.ndarray[double, ndim=2] JtJ = np.zeros((n, n))
    cdef double[:] gr = grad
    cdef double[:, :] H = JtJ
    cdef const double[:] xv = x
    cdef const double[:] lamv = lam
    cdef const double[:] muv = mu
    cdef const double[:] xr = x_ref

    cdef double val = 0.0
    cdef int i, j, k, k2, k2d, dim, off, off2, d, d2, row, a0
    cdef double e[8]
    cdef double resid[8]
    cdef double nrm, t, s, s2, w, coef
    cdef int nf = kind.shape[0]
    cdef int s0, n_scope, sign_base

    with nogil:
        for i in range(nf):
            _expr(scope, scope_start, sign, const, const_start, i, xv, e, &dim)
            s0 = scope_start[i]
            n_scope = (scope_start[i + 1] - s0) / 2
            sign_base = s0 / 2

            if kind[i] == 0:      # LIN rows: resid = e (+ lam/rho when eq)
                if eq_start[i] >= 0:
                    for j in range(dim):
                        resid[j] = e[j] + lamv[eq_start[i] + j] / rho
                else:
                    for j in range(dim):
                        row = ineq_start[i] + j
                        if e[j] >= 0.0 or muv[row] > 0.0:
                            resid[j] = e[j] + muv[row] / rho
                        else:
                            resid[j] = 0.0
                for j in range(dim):
                    val += 0.5 * rho * resid[j] * resid[j]
                # grad += rho * J^T r ; J rows are sign-scaled identities
                for k in range(n_scope):
                    off = scope[s0 + 2 * k]
                    s = sign[sign_base + k]
                    for j in range(dim):
                        if kind[i] == 0 and eq_start[i] < 0 and resid[j] == 0.0:
                            continue
                        gr[off + j] += rho * s * resid[j]
                for k in range(n_scope):
                    off = scope[s0 + 2 * k]
                    s = sign[sign_base + k]
                    for k2 in range(n_scope):
                        off2 = scope[s0 + 2 * k2]
                        s2 = sign[sign_base + k2]
                        coef = rho * s * s2
                        for j in range(dim):
                            if eq_start[i] < 0:
                                row = ineq_start[i] + j
                                if not (e[j] >= 0.0 or muv[row] > 0.0):
                                    continue
                            H[off + j, off2 + j] += coef
            elif kind[i] == 1 or kind[i] == 2:   # NORM / SEP: one row
                nrm = 0.0
                for j in range(dim):
                    nrm += e[j] * e[j]
                nrm = sqrt(nrm + EPS_NORM)
                row = ineq_start[i]
                if kind[i] == 1:
                    t = nrm - aux[aux_start[i]]
                else:
                    t = aux[aux_start[i]] - nrm
                if t >= 0.0 or muv[row] > 0.0:
                    t = t + muv[row] / rho
                    val += 0.5 * rho * t * t
                    # direction d_j = +-e_j/nrm per scope var sign
                    for k in range(n_scope):
                        off = scope[s0 + 2 * k]
                        s = sign[sign_base + k]
                        if kind[i] == 2:
                            s = -s
                        for j in range(dim):
                            gr[off + j] += rho * t * s * e[j] / nrm
                    for k in range(n_scope):
                        off = scope[s0 + 2 * k]
                        s = sign[sign_base + k]
                        if kind[i] == 2:
                            s = -s
                        for k2 in range(n_scope):
                            off2 = scope[s0 + 2 * k2]
                            s2 = sign[sign_base + k2]
                            if kind[i] == 2:
                                s2 = -s2
                            coef = rho * s * s2
                            for j in range(dim):
                                for k2d in range(dim):
                                    H[off + j, off2 + k2d] += coef * (e[j] / nrm) * (e[k2d] / nrm)
            else:                  # BOX: rows lo - e and e - hi
                a0 = aux_start[i]
                for j in range(dim):
                    row = ineq_start[i] + j
                    t = aux[a0 + j] - e[j]
                    if t >= 0.0 or muv[row] > 0.0:
                        t = t + muv[row] / rho
                        val += 0.5 * rho * t * t
                        for k in range(n_scope):
                            off = scope[s0 + 2 * k]
                            s = -sign[sign_base + k]
                            gr[off + j] += rho * t * s
                            for k2 in range(n_scope):
                                off2 = scope[s0 + 2 * k2]
                                H[off + j, off2 + j] += rho * s * (-sign[sign_base + k2])
                    row = ineq_start[i] + dim + j
                    t = e[j] - aux[a0 + dim + j]
                    if t >= 0.0 or muv[row] > 0.0:
                        t = t + muv[row] / rho
                        val += 0.5 * rho * t * t
                        for k in range(n_scope):
                            off = scope[s0 + 2 * k]
                            s = sign[sign_base + k]
                            gr[off + j] += rho * t * s
                            for k2 in range(n_scope):
                                off2 = scope[s0 + 2 * k2]
                                H[off + j, off2 + j] += rho * s * sign[sign_base + k2]

        if w_ref > 0.0:
            for j in range(n):
                t = xv[j] - xr[j]
                val += 0.5 * w_ref * t * t
                gr[j] += w_ref * t
                H[j, j] += w_ref
    return val, grad, JtJ
