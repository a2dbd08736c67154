"""Backend equivalence: the compiled evaluator must reproduce the pure-Python
reference bit-for-bit (well, to float tolerance) on random packed graphs."""

import numpy as np
import pytest

from tampkit.nlp.graph import (
    ABS_POSE,
    BOX,
    GENERIC,
    LIN,
    NORM,
    SEP,
    ConstraintNode,
    FactoredNlp,
    VarNode,
)
from tampkit.nlp.kernels import HAVE_COMPILED, _eval_py, backend_for
from tampkit.nlp.kernels.packed import PackedGraph

if HAVE_COMPILED:
    from tampkit.nlp.kernels import _eval_cy
else:  # pragma: no cover
    _eval_cy = None


def random_graph(rng, n_vars=6, n_cons=10):
    vars_ = [VarNode(f"v{i}", ABS_POSE, f"e{i}", int(rng.integers(0, 3)), 2)
             for i in range(n_vars)]
    cons = []
    for k in range(n_cons):
        form = rng.choice([LIN, LIN, NORM, SEP, BOX])
        n_scope = int(rng.integers(1, min(4, n_vars) + 1))
        scope = tuple(f"v{i}" for i in rng.choice(n_vars, size=n_scope, replace=False))
        signs = tuple(float(s) for s in rng.choice([-1.0, 1.0], size=n_scope))
        const = tuple(float(c) for c in rng.normal(size=2))
        if form == LIN:
            rel = "eq" if rng.random() < 0.7 else "ineq"
            cons.append(ConstraintNode(f"c{k}", "Lin", rel, scope, LIN, signs, const))
        elif form in (NORM, SEP):
            cons.append(ConstraintNode(
                f"c{k}", "Ball", "ineq", scope, form, signs, const,
                {"radius": float(rng.uniform(0.1, 2.0))}))
        else:
            lo = rng.normal(size=2)
            cons.append(ConstraintNode(
                f"c{k}", "Box", "ineq", scope, BOX, signs, const,
                {"lo": lo, "hi": lo + rng.uniform(0.1, 2.0, size=2)}))
    return FactoredNlp(vars_, cons)


@pytest.mark.skipif(not HAVE_COMPILED, reason="extension not built")
@pytest.mark.parametrize("seed", range(12))
def test_backends_agree(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng)
    packed = PackedGraph(g)
    assert packed.all_builtin

    for trial in range(5):
        x = rng.normal(size=packed.nx)
        lam = rng.normal(size=packed.nh)
        mu = np.abs(rng.normal(size=packed.ng)) * (rng.random(packed.ng) < 0.5)
        rho = float(rng.uniform(0.5, 20.0))
        x_ref = rng.normal(size=packed.nx)
        for w_ref in (0.0, 1.0):
            h_py, g_py = _eval_py.residuals(packed, x)
            h_cy, g_cy = _eval_cy.residuals(packed, x)
            np.testing.assert_allclose(h_cy, h_py, atol=1e-12)
            np.testing.assert_allclose(g_cy, g_py, atol=1e-12)

            v_py = _eval_py.al_value(packed, x, lam, mu, rho, w_ref, x_ref)
            v_cy = _eval_cy.al_value(packed, x, lam, mu, rho, w_ref, x_ref)
            assert v_cy == pytest.approx(v_py, rel=1e-12, abs=1e-12)

            val_py, grad_py, H_py = _eval_py.al_normal(packed, x, lam, mu, rho, w_ref, x_ref)
            val_cy, grad_cy, H_cy = _eval_cy.al_normal(packed, x, lam, mu, rho, w_ref, x_ref)
            assert val_cy == pytest.approx(val_py, rel=1e-11, abs=1e-11)
            np.testing.assert_allclose(grad_cy, grad_py, atol=1e-10)
            np.testing.assert_allclose(H_cy, H_py, atol=1e-10)


def test_backend_selection_prefers_compiled_for_builtin():
    rng = np.random.default_rng(0)
    packed = PackedGraph(random_graph(rng))
    if HAVE_COMPILED:
        assert backend_for(packed) is _eval_cy
    else:
        assert backend_for(packed) is _eval_py


def test_custom_factors_fall_back_to_python():
    v = VarNode("x", GENERIC, "x", 0, 1)
    c = ConstraintNode(
        "c", "Custom", "eq", ("x",), "custom", (), (),
        {"dim": 1, "fn": lambda x: x - 1.0, "jac": lambda x: [np.ones((1, 1))]})
    packed = PackedGraph(FactoredNlp([v], [c]))
    assert not packed.all_builtin
    assert backend_for(packed) is _eval_py


def test_env_override_forces_python(monkeypatch):
    monkeypatch.setenv("TAMPKIT_KERNEL", "py")
    rng = np.random.default_rng(0)
    packed = PackedGraph(random_graph(rng))
    assert backend_for(packed) is _eval_py
