"""Augmented-Lagrangian feasibility and projection solver.

Outer loop: multiplier updates lambda += rho*h, mu = max(0, mu + rho*g) and a
penalty increase when the violation does not at least halve.  Inner loop:
Gauss-Newton on the least-squares form of the augmented Lagrangian with
Levenberg damping and Armijo backtracking.  An inequality row is active when
g >= 0 or its multiplier is positive (active at the boundary).
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field

import numpy as np

from ..rng import child_rng
from . import kernels
from .graph import FactoredNlp
from .kernels.packed import PackedGraph

FEASIBLE = "Feasible"
INFEASIBLE = "Infeasible"


class NumericalFailure(Exception):
    """Residuals went non-finite; distinct from plain infeasibility."""


@dataclass
class SolveOptions:
    rho0: float = 1.0
    rho_growth: float = 10.0
    max_outer: int = 20
    max_inner: int = 30
    tol_constraint: float = 1e-6
    tol_step: float = 1e-8
    seed: int = 0
    restarts: int = 1

    def __post_init__(self):
        if self.rho0 <= 0 or self.rho_growth <= 1:
            raise ValueError("need rho0 > 0 and rho_growth > 1")
        if self.tol_constraint <= 0 or self.tol_step <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveStats:
    outer_iters: int = 0
    inner_iters: int = 0
    residual_evals: int = 0
    restarts_used: int = 1

    def merge(self, other: "SolveStats"):
        self.outer_iters += other.outer_iters
        self.inner_iters += other.inner_iters
        self.residual_evals += other.residual_evals


@dataclass
class SolveResult:
    status: str
    assignment: dict
    violated: dict = field(default_factory=dict)
    stats: SolveStats = field(default_factory=SolveStats)
    multipliers: dict = field(default_factory=dict)
    max_violation: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


def _max_violation(h: np.ndarray, g: np.ndarray) -> float:
    v = 0.0
    if h.size:
        v = float(np.max(np.abs(h)))
    if g.size:
        v = max(v, float(np.max(g)))
    return v


def _solve_single(packed: PackedGraph, ev, x0: np.ndarray, opts: SolveOptions,
                  w_ref: float, x_ref: np.ndarray, stats: SolveStats):
    x = x0.copy()
    lam = np.zeros(packed.nh)
    mu = np.zeros(packed.ng)
    rho = opts.rho0
    tol = opts.tol_constraint

    h, g = ev.residuals(packed, x)
    stats.residual_evals += 1
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
        raise NumericalFailure("non-finite residuals at the initial point")
    prev_viol = _max_violation(h, g)
    history = [prev_viol]

    step_cap = 4.0 * max(1.0, math.sqrt(packed.nx / 4.0))
    for outer in range(opts.max_outer):
        stats.outer_iters += 1
        beta = 1e-6
        prev_val = None
        for inner in range(opts.max_inner):
            stats.inner_iters += 1
            val, grad, JtJ = ev.al_normal(packed, x, lam, mu, rho, w_ref, x_ref)
            stats.residual_evals += 1
            if not np.isfinite(val):
                raise NumericalFailure("non-finite augmented Lagrangian")
            if float(np.linalg.norm(grad)) <= 1e-8 * max(1.0, val):
                break
            if prev_val is not None and prev_val - val <= 1e-10 * max(1.0, abs(prev_val)):
                break
            prev_val = val
            diag = np.diag(JtJ).copy()
            moved = False
            tiny_step = False
            # Levenberg loop: grow damping until a damped Gauss-Newton step
            # (with a short Armijo backtrack) actually decreases the value
            for attempt in range(12):
                H = JtJ + np.diag(beta * (diag + 1.0))
                try:
                    step = np.linalg.solve(H, -grad)
                except np.linalg.LinAlgError:
                    beta = max(beta * 100.0, 1e-4)
                    continue
                norm = float(np.linalg.norm(step))
                if norm <= opts.tol_step * (1.0 + float(np.linalg.norm(x))):
                    tiny_step = True
                    break
                if norm > step_cap:
                    step = step * (step_cap / norm)
                gTd = float(grad @ step)
                for alpha in (1.0, 0.5, 0.25):
                    trial = x + alpha * step
                    v2 = ev.al_value(packed, trial, lam, mu, rho, w_ref, x_ref)
                    stats.residual_evals += 1
                    if np.isfinite(v2) and v2 <= val + 1e-4 * alpha * gTd:
                        x = trial
                        moved = True
                        break
                if moved:
                    beta = max(beta * 0.33, 1e-10)
                    break
                beta *= 10.0
            if tiny_step or not moved:
                break

        h, g = ev.residuals(packed, x)
        stats.residual_evals += 1
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
            raise NumericalFailure("non-finite residuals")
        viol = _max_violation(h, g)
        if viol <= tol:
            return FEASIBLE, x, lam, mu, h, g, viol
        lam = lam + rho * h
        mu = np.maximum(0.0, mu + rho * g)
        if viol > 0.5 * prev_viol:
            rho = min(rho * opts.rho_growth, 1e8)
        prev_viol = viol
        history.append(viol)
        # stalled: relative improvement < 1e-3 over two consecutive updates
        if len(history) >= 4:
            a, c = history[-3], history[-1]
            if a > 0 and (a - c) / a < 1e-3 and viol > tol:
                break
    return INFEASIBLE, x, lam, mu, h, g, viol


def _prepare(g_or_packed):
    if isinstance(g_or_packed, PackedGraph):
        return g_or_packed
    return PackedGraph(g_or_packed)


def _run(graph: FactoredNlp, init, opts: SolveOptions, w_ref: float,
         x_ref_values) -> SolveResult:
    packed = _prepare(graph)
    ev = kernels.backend_for(packed)
    stats = SolveStats()
    x_ref = packed.pack_values(x_ref_values) if x_ref_values is not None \
        else np.zeros(packed.nx)

    if packed.nx == 0:
        return SolveResult(FEASIBLE, {}, {}, stats, {}, 0.0)

    best = None
    for r in range(max(1, opts.restarts)):
        if r == 0 and init is not None:
            x0 = packed.pack_values(init)
        else:
            rng = child_rng(opts.seed, f"nlp-restart{r}")
            x0 = packed.random_init(rng)
            if w_ref > 0.0 and init is None and r == 0:
                x0 = x_ref.copy()
        status, x, lam, mu, h, g, viol = _solve_single(
            packed, ev, x0, opts, w_ref, x_ref, stats)
        if status == FEASIBLE:
            stats.restarts_used = r + 1
            mults = _multipliers(packed, lam, mu)
            return SolveResult(FEASIBLE, packed.unpack_values(x), {},
                               stats, mults, viol)
        if best is None or viol < best[-1]:
            best = (x, lam, mu, h, g, viol)
    x, lam, mu, h, g, viol = best
    stats.restarts_used = max(1, opts.restarts)
    return SolveResult(
        INFEASIBLE, packed.unpack_values(x),
        packed.violations(h, g), stats, _multipliers(packed, lam, mu), viol)


def _multipliers(packed: PackedGraph, lam, mu) -> dict:
    out = {}
    for i, cid in enumerate(packed.ids):
        n = packed.rows[i]
        if packed.eq_start[i] >= 0:
            out[cid] = np.array(lam[packed.eq_start[i]:packed.eq_start[i] + n])
        else:
            out[cid] = np.array(mu[packed.ineq_start[i]:packed.ineq_start[i] + n])
    return out


def solve(graph: FactoredNlp, init=None, opts: SolveOptions | None = None) -> SolveResult:
    """Feasibility solve; ``init`` is an assignment dict or None for seeded
    random restarts."""
    return _run(graph, init, opts or SolveOptions(), 0.0, None)


def project(graph: FactoredNlp, x_ref: dict, opts: SolveOptions | None = None) -> SolveResult:
    """Minimize ||x - x_ref||^2 subject to the graph constraints."""
    return _run(graph, None, opts or SolveOptions(), 1.0, x_ref)


def check_jacobian(graph: FactoredNlp, constraint_id: str, values: dict) -> float:
    """Max relative error between the analytic Jacobian and central
    differences at ``values`` (h = 1e-6 * scale)."""
    packed = _prepare(graph)
    from .kernels import _eval_py

    i = packed.ids.index(constraint_id)
    x = packed.pack_values(values)
    J = _eval_py.factor_jacobian(packed, i, x)

    def row_residual(xv):
        h, g = _eval_py.residuals(packed, xv)
        n = packed.rows[i]
        if packed.eq_start[i] >= 0:
            return np.array(h[packed.eq_start[i]:packed.eq_start[i] + n])
        return np.array(g[packed.ineq_start[i]:packed.ineq_start[i] + n])

    scale = max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
    step = 1e-6 * scale
    fd = np.zeros_like(J)
    for k in range(packed.nx):
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] -= step
        fd[:, k] = (row_residual(xp) - row_residual(xm)) / (2 * step)
    denom = max(1.0, float(np.max(np.abs(J))))
    return float(np.max(np.abs(J - fd)) / denom)
