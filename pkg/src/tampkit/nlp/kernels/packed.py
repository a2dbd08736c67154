"""Flat-array form of a FactoredNlp, shared by both evaluator backends.

Factors with a closed-form shape are packed into integer/float tables the
compiled kernel can walk without touching Python objects; custom-callback
factors keep their callables and force the pure-Python backend.
"""

from __future__ import annotations

import numpy as np

from ..graph import BOX, CUSTOM, LIN, NORM, SEP, FactoredNlp

F_LIN_EQ = 0
F_NORM = 1
F_SEP = 2
F_BOX = 3
F_CUSTOM = 4

_CODES = {LIN: F_LIN_EQ, NORM: F_NORM, SEP: F_SEP, BOX: F_BOX, CUSTOM: F_CUSTOM}


class PackedGraph:
    def __init__(self, g: FactoredNlp):
        self.graph = g
        order = sorted(g.vars, key=lambda v: (v.t, v.id))
        self.var_order = [v.id for v in order]
        self.offsets = {}
        self.dims = {}
        off = 0
        for v in order:
            self.offsets[v.id] = off
            self.dims[v.id] = v.dim
            off += v.dim
        self.nx = off

        kinds, scopes_flat, scope_starts, signs_flat = [], [], [0], []
        const_flat, const_starts = [], [0]
        aux_flat, aux_starts = [], [0]
        rows, row_is_eq = [], []
        self.custom = []          # (index into factor table, fn, jac, dim, relation)
        self.ids = []

        for c in g.cons:
            if len(set(c.scope)) != len(c.scope):
                raise ValueError(f"constraint {c.id!r} repeats a variable in scope")
            if c.form != CUSTOM:
                scope_dims = {g.var_by_id[vid].dim for vid in c.scope}
                if len(scope_dims) > 1 or (c.const and scope_dims and
                                           len(c.const) != next(iter(scope_dims))):
                    raise ValueError(
                        f"constraint {c.id!r}: scope dims {scope_dims} vs "
                        f"const length {len(c.const)}")
            self.ids.append(c.id)
            kinds.append(_CODES[c.form])
            for vid in c.scope:
                scopes_flat.append(self.offsets[vid])
                scopes_flat.append(self.dims[vid])
            scope_starts.append(len(scopes_flat))
            signs_flat.extend(c.signs if c.signs else [1.0] * len(c.scope))
            const = np.asarray(c.const, dtype=float)
            const_flat.extend(const.tolist())
            const_starts.append(len(const_flat))
            if c.form == LIN:
                rows.append(len(const))
                row_is_eq.append(c.relation == "eq")
                aux_starts.append(len(aux_flat))
            elif c.form in (NORM, SEP):
                aux_flat.append(float(c.params["radius"]))
                aux_starts.append(len(aux_flat))
                rows.append(1)
                row_is_eq.append(False)
            elif c.form == BOX:
                lo = np.atleast_1d(c.params["lo"]).astype(float)
                hi = np.atleast_1d(c.params["hi"]).astype(float)
                aux_flat.extend(lo.tolist())
                aux_flat.extend(hi.tolist())
                aux_starts.append(len(aux_flat))
                rows.append(2 * len(lo))
                row_is_eq.append(False)
            else:
                dim = int(c.params["dim"])
                self.custom.append(
                    (len(kinds) - 1, c.params["fn"], c.params.get("jac"), dim,
                     c.relation))
                aux_starts.append(len(aux_flat))
                rows.append(dim)
                row_is_eq.append(c.relation == "eq")

        self.kind = np.asarray(kinds, dtype=np.int32)
        self.scope = np.asarray(scopes_flat, dtype=np.int32)
        self.scope_start = np.asarray(scope_starts, dtype=np.int32)
        self.sign = np.asarray(signs_flat, dtype=np.float64)
        self.const = np.asarray(const_flat, dtype=np.float64)
        self.const_start = np.asarray(const_starts, dtype=np.int32)
        self.aux = np.asarray(aux_flat, dtype=np.float64)
        self.aux_start = np.asarray(aux_starts, dtype=np.int32)

        # global row layout: equalities first, then inequalities
        eq_row, ineq_row = 0, 0
        eq_starts, ineq_starts = [], []
        for nrows, is_eq in zip(rows, row_is_eq):
            if is_eq:
                eq_starts.append(eq_row)
                ineq_starts.append(-1)
                eq_row += nrows
            else:
                eq_starts.append(-1)
                ineq_starts.append(ineq_row)
                ineq_row += nrows
        self.nh = eq_row
        self.ng = ineq_row
        self.rows = np.asarray(rows, dtype=np.int32)
        self.eq_start = np.asarray(eq_starts, dtype=np.int32)
        self.ineq_start = np.asarray(ineq_starts, dtype=np.int32)
        # compiled kernel uses fixed-size stack buffers per factor expression
        max_expr = 0
        for i in range(len(kinds)):
            c_dim = const_starts[i + 1] - const_starts[i]
            s0, s1 = scope_starts[i], scope_starts[i + 1]
            v_dim = max((scopes_flat[j + 1] for j in range(s0, s1, 2)), default=0)
            max_expr = max(max_expr, c_dim, v_dim)
        self.all_builtin = not self.custom and max_expr <= 8

    # -- assignment packing --------------------------------------------------

    def pack_values(self, assignment: dict) -> np.ndarray:
        x = np.zeros(self.nx)
        for vid, off in self.offsets.items():
            val = np.asarray(assignment[vid], dtype=float).reshape(-1)
            if val.shape[0] != self.dims[vid]:
                raise ValueError(f"dim mismatch for {vid!r}")
            x[off:off + self.dims[vid]] = val
        return x

    def unpack_values(self, x: np.ndarray) -> dict:
        return {
            vid: np.array(x[off:off + self.dims[vid]])
            for vid, off in self.offsets.items()
        }

    def random_init(self, rng) -> np.ndarray:
        x = np.empty(self.nx)
        for vid, off in self.offsets.items():
            d = self.dims[vid]
            lo, hi = self.graph.ranges.get(vid, (-2.0, 2.0))
            lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,))
            hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,))
            x[off:off + d] = lo + (hi - lo) * rng.random(d)
        return x

    def violations(self, h: np.ndarray, g: np.ndarray) -> dict:
        """Max violation per constraint id (only ids violating > 0)."""
        out = {}
        for i, cid in enumerate(self.ids):
            n = self.rows[i]
            if self.eq_start[i] >= 0:
                v = float(np.max(np.abs(h[self.eq_start[i]:self.eq_start[i] + n]))) if n else 0.0
            else:
                v = float(np.max(g[self.ineq_start[i]:self.ineq_start[i] + n])) if n else 0.0
            if v > 0:
                out[cid] = v
        return out
