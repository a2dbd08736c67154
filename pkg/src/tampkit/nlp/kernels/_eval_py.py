"""Pure-Python evaluator: reference semantics for the compiled twin.

Everything here is defined on the packed arrays so the two backends can be
diffed row by row.  Keep this file boring; the Cython version mirrors it.
"""

from __future__ import annotations

import numpy as np

from .packed import F_BOX, F_CUSTOM, F_LIN_EQ, F_NORM, F_SEP, PackedGraph

EPS_NORM = 1e-12


def _factor_expr(p: PackedGraph, i: int, x: np.ndarray):
    """sum_k s_k * v_k + c for factor i, plus the scope layout."""
    s0, s1 = p.scope_start[i], p.scope_start[i + 1]
    n_scope = (s1 - s0) // 2
    c0, c1 = p.const_start[i], p.const_start[i + 1]
    dim = max(c1 - c0, p.scope[s0 + 1] if n_scope else 0)
    expr = np.zeros(dim)
    if c1 > c0:
        expr += p.const[c0:c1]
    sign_base = s0 // 2
    for k in range(n_scope):
        off = p.scope[s0 + 2 * k]
        d = p.scope[s0 + 2 * k + 1]
        expr += p.sign[sign_base + k] * x[off:off + d]
    return expr, s0, n_scope, sign_base


def residuals(p: PackedGraph, x: np.ndarray):
    h = np.zeros(p.nh)
    g = np.zeros(p.ng)
    custom_iter = iter(p.custom)
    nxt = next(custom_iter, None)
    for i in range(len(p.kind)):
        kind = p.kind[i]
        if kind == F_CUSTOM:
            fi, fn, _, dim, relation = nxt
            assert fi == i
            nxt = next(custom_iter, None)
            vals = _scope_values(p, i, x)
            r = np.atleast_1d(np.asarray(fn(*vals), dtype=float))
            if relation == "eq":
                h[p.eq_start[i]:p.eq_start[i] + dim] = r
            else:
                g[p.ineq_start[i]:p.ineq_start[i] + dim] = r
            continue
        expr, s0, n_scope, sign_base = _factor_expr(p, i, x)
        if kind == F_LIN_EQ:
            if p.eq_start[i] >= 0:
                h[p.eq_start[i]:p.eq_start[i] + len(expr)] = expr
            else:
                g[p.ineq_start[i]:p.ineq_start[i] + len(expr)] = expr
        elif kind == F_NORM:
            r = p.aux[p.aux_start[i]]
            g[p.ineq_start[i]] = np.sqrt(expr @ expr + EPS_NORM) - r
        elif kind == F_SEP:
            r = p.aux[p.aux_start[i]]
            g[p.ineq_start[i]] = r - np.sqrt(expr @ expr + EPS_NORM)
        elif kind == F_BOX:
            a0 = p.aux_start[i]
            d = len(expr)
            lo = p.aux[a0:a0 + d]
            hi = p.aux[a0 + d:a0 + 2 * d]
            out = p.ineq_start[i]
            g[out:out + d] = lo - expr
            g[out + d:out + 2 * d] = expr - hi
    return h, g


def _scope_values(p: PackedGraph, i: int, x: np.ndarray):
    s0, s1 = p.scope_start[i], p.scope_start[i + 1]
    vals = []
    for k in range((s1 - s0) // 2):
        off = p.scope[s0 + 2 * k]
        d = p.scope[s0 + 2 * k + 1]
        vals.append(x[off:off + d])
    return vals


def factor_jacobian(p: PackedGraph, i: int, x: np.ndarray):
    """Dense Jacobian rows of factor i w.r.t. the full x (for checks)."""
    kind = p.kind[i]
    n = int(p.rows[i])
    J = np.zeros((n, p.nx))
    if kind == F_CUSTOM:
        for fi, fn, jac, dim, relation in p.custom:
            if fi == i:
                vals = _scope_values(p, i, x)
                blocks = jac(*vals)
                s0 = p.scope_start[i]
                for k, blk in enumerate(blocks):
                    off = p.scope[s0 + 2 * k]
                    d = p.scope[s0 + 2 * k + 1]
                    J[:, off:off + d] = np.asarray(blk, dtype=float).reshape(n, d)
                return J
        raise KeyError(i)
    expr, s0, n_scope, sign_base = _factor_expr(p, i, x)
    if kind == F_LIN_EQ:
        for k in range(n_scope):
            off = p.scope[s0 + 2 * k]
            d = p.scope[s0 + 2 * k + 1]
            J[:, off:off + d] += p.sign[sign_base + k] * np.eye(d)
    elif kind in (F_NORM, F_SEP):
        norm = np.sqrt(expr @ expr + EPS_NORM)
        direction = expr / norm
        sgn = 1.0 if kind == F_NORM else -1.0
        for k in range(n_scope):
            off = p.scope[s0 + 2 * k]
            d = p.scope[s0 + 2 * k + 1]
            J[0, off:off + d] += sgn * p.sign[sign_base + k] * direction
    elif kind == F_BOX:
        d = len(expr)
        for k in range(n_scope):
            off = p.scope[s0 + 2 * k]
            dd = p.scope[s0 + 2 * k + 1]
            J[:d, off:off + dd] += -p.sign[sign_base + k] * np.eye(dd)
            J[d:, off:off + dd] += p.sign[sign_base + k] * np.eye(dd)
    return J


def al_value(p: PackedGraph, x, lam, mu, rho, w_ref, x_ref) -> float:
    """0.5 * || weighted residual ||^2 of the augmented-Lagrangian LSQ form.

    Inequalities enter when g >= 0 or mu > 0 (treated active at the
    boundary).
    """
    h, g = residuals(p, x)
    val = 0.0
    if p.nh:
        t = h + lam / rho
        val += 0.5 * rho * float(t @ t)
    if p.ng:
        active = (g >= 0.0) | (mu > 0.0)
        t = np.where(active, g + mu / rho, 0.0)
        val += 0.5 * rho * float(t @ t)
    if w_ref > 0.0:
        d = x - x_ref
        val += 0.5 * w_ref * float(d @ d)
    return val


def _scope_indices(p: PackedGraph, i: int):
    s0, s1 = p.scope_start[i], p.scope_start[i + 1]
    idx = []
    for k in range((s1 - s0) // 2):
        off = p.scope[s0 + 2 * k]
        d = p.scope[s0 + 2 * k + 1]
        idx.extend(range(off, off + d))
    return np.asarray(idx, dtype=np.intp)


def al_normal(p: PackedGraph, x, lam, mu, rho, w_ref, x_ref):
    """(value, gradient, JtJ); factor blocks scattered straight into the
    normal matrix, no global Jacobian materialized."""
    h, g = residuals(p, x)
    n = p.nx
    grad = np.zeros(n)
    JtJ = np.zeros((n, n))
    val = 0.0

    active = (g >= 0.0) | (mu > 0.0) if p.ng else None

    for i in range(len(p.kind)):
        nrows = int(p.rows[i])
        idx = _scope_indices(p, i)
        J = factor_jacobian(p, i, x)[:, idx]
        if p.eq_start[i] >= 0:
            sl = slice(p.eq_start[i], p.eq_start[i] + nrows)
            r = h[sl] + lam[sl] / rho
        else:
            sl = slice(p.ineq_start[i], p.ineq_start[i] + nrows)
            mask = active[sl]
            r = np.where(mask, g[sl] + mu[sl] / rho, 0.0)
            J = J * mask[:, None]
        val += 0.5 * rho * float(r @ r)
        grad[idx] += rho * (J.T @ r)
        JtJ[np.ix_(idx, idx)] += rho * (J.T @ J)
    if w_ref > 0.0:
        d = x - x_ref
        val += 0.5 * w_ref * float(d @ d)
        grad += w_ref * d
        JtJ[np.diag_indices(n)] += w_ref
    return val, grad, JtJ
