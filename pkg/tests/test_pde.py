import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liprpinn.errors import DimensionError, ExpressionError
from liprpinn.expr import Expression
from liprpinn.jets import Jet3
from liprpinn.pde import (BUILTIN_EXACT, Box, OperatorSpec, heat1d, manufacture, poisson1d,
                          residual, residual_gradient)

# tanh(1) and sech(1)^2, written out
T1 = 0.7615941559557649
S1 = 1 - T1**2


def tanh_jet(x):
    return Expression("tanh(x)").jet(np.atleast_2d(x))


def test_poisson_residual_of_tanh_at_zero():
    assert residual(OperatorSpec.poisson(), tanh_jet(0.0))[0] == 0.0


def test_zero_jet_residual_and_gradient():
    for op in (OperatorSpec.poisson(), OperatorSpec.heat(0.7)):
        z = Jet3.zeros(op.dim, (3,))
        assert np.all(residual(op, z) == 0)
        assert np.all(residual_gradient(op, z) == 0)


def test_heat_residual_closed_form():
    nu = 0.3
    X = np.array([[0.5, 0.25]])
    jet = Expression("sin(pi*x) * exp(-t)", ("x", "t")).jet(X)
    want = (1 - nu * math.pi**2) * math.sin(math.pi * 0.5) * math.exp(-0.25)
    assert residual(OperatorSpec.heat(nu), jet)[0] == pytest.approx(want, rel=1e-14)


def test_poisson_residual_gradient_of_tanh_at_zero():
    assert residual_gradient(OperatorSpec.poisson(), tanh_jet(0.0))[0, 0] == pytest.approx(2.0)


def test_heat_residual_gradient_components():
    nu = 1.7
    rng = np.random.default_rng(0)
    jet = Jet3(rng.standard_normal(1), rng.standard_normal((1, 2)),
               np.zeros((1, 2, 2)), np.zeros((1, 2, 2, 2)))
    d2 = rng.standard_normal((2, 2))
    d2 = d2 + d2.T
    d3 = np.zeros((2, 2, 2))
    d3[0, 0, 0], d3[0, 0, 1] = 0.4, -1.1
    for p in [(0, 1, 0), (1, 0, 0)]:
        d3[p] = d3[0, 0, 1]
    jet = Jet3(jet.value, jet.d1, d2[None], d3[None])
    g = residual_gradient(OperatorSpec.heat(nu), jet)[0]
    assert g[0] == pytest.approx(-d2[1, 0] + nu * 0.4)
    assert g[1] == pytest.approx(-d2[1, 1] + nu * -1.1)


@pytest.mark.parametrize("name", ["tanh", "sin6pi", "heat_sin"])
def test_residual_gradient_matches_fd(name):
    op = OperatorSpec.heat(1.0) if name == "heat_sin" else OperatorSpec.poisson()
    src, variables = BUILTIN_EXACT[name]
    e = Expression(src, variables)
    rng = np.random.default_rng(1)
    X = rng.uniform(-0.9, 0.9, (10, len(variables)))
    g = residual_gradient(op, e.jet(X))
    h = 1e-4
    for k in range(len(variables)):
        E = np.zeros(len(variables))
        E[k] = h
        fd = (residual(op, e.jet(X + E)) - residual(op, e.jet(X - E))) / (2 * h)
        np.testing.assert_allclose(g[:, k], fd, rtol=1e-4, atol=1e-4 * np.abs(fd).max())


def test_manufactured_tanh_forcing():
    p = poisson1d("tanh")
    f = p.f(np.array([[0.0], [1.0]]))
    assert f[0] == 0.0
    # 2 tanh(1) sech^2(1)
    assert f[1] == pytest.approx(2 * T1 * S1, rel=1e-14)
    assert f[1] == pytest.approx(0.639700008, abs=1e-9)


def test_sin6pi_boundary_data_vanishes():
    p = poisson1d("sin6pi")
    ends = np.array([[-1.0], [1.0]])
    np.testing.assert_allclose(p.g(0, ends), 0.0, atol=1e-15)


def test_heat_forcing():
    p = heat1d(nu=2.0)
    X = np.array([[0.3, 0.7], [-0.6, 0.1]])
    want = (1 - 2.0 * math.pi**2) * np.sin(math.pi * X[:, 0]) * np.exp(-X[:, 1])
    np.testing.assert_allclose(p.f(X), want, rtol=1e-13)


def test_heat_boundary_groups():
    p = heat1d()
    names = [g.name for g in p.boundary_groups]
    assert names == ["left", "right", "initial"]
    assert p.boundary_groups[0].tangential_axes == (1,)
    assert p.boundary_groups[2].tangential_axes == (0,)
    assert poisson1d().boundary_groups[0].tangential_axes == ()
    X = np.array([[-1.0, 0.2], [-1.0, 0.9]])
    np.testing.assert_allclose(p.g(0, X), p.exact(X))


@pytest.mark.parametrize("name", ["tanh", "sin6pi", "heat_sin"])
def test_manufactured_identity(name):
    src, variables = BUILTIN_EXACT[name]
    p = heat1d() if name == "heat_sin" else poisson1d(name)
    # quasi-random (Halton-like golden-ratio) points in the domain
    k = np.arange(1, 1001)[:, None]
    phi = np.array([0.6180339887498949, 0.7548776662466927])[: p.dim]
    U = (k * phi) % 1.0
    lo = np.array([b[0] for b in p.domain.bounds])
    hi = np.array([b[1] for b in p.domain.bounds])
    X = lo + U * (hi - lo)
    assert np.max(np.abs(residual(p.op, p.exact.jet(X)) - p.f(X))) < 1e-12


def test_wrapped_problem_exact_has_zero_boundary_data():
    p = poisson1d("sin6pi")
    ends = np.array([[-1.0], [1.0]])
    assert np.all(np.abs(p.g(0, ends)) < 1e-15)
    x = np.linspace(-1, 1, 50)[:, None]
    assert np.max(np.abs(residual(p.op, p.exact.jet(x)) - p.f(x))) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.integers(0, 1000))
def test_residual_is_linear(alpha, seed):
    rng = np.random.default_rng(seed)
    op = OperatorSpec.heat(0.9)

    def rjet():
        d2 = rng.standard_normal((4, 2, 2))
        return Jet3(rng.standard_normal(4), rng.standard_normal((4, 2)), d2 + d2.transpose(0, 2, 1),
                    np.zeros((4, 2, 2, 2)))

    a, b = rjet(), rjet()
    combo = a.scale(alpha) + b
    np.testing.assert_allclose(residual(op, combo), alpha * residual(op, a) + residual(op, b),
                               rtol=0, atol=1e-14)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        residual(OperatorSpec.heat(), tanh_jet(0.1))


def test_elliptic_needs_definite_coefficients():
    with pytest.raises(DimensionError):
        OperatorSpec("elliptic", ((0.0,),))
    with pytest.raises(DimensionError):
        OperatorSpec("elliptic", ((1.0, 0.5), (0.4, 1.0)), (0.0, 0.0))
    assert OperatorSpec("elliptic", ((2.0,),)).dim == 1


def test_box_geometry():
    b = Box(((-1.0, 1.0), (0.0, 0.0)))
    assert b.free_axes == (0,)
    assert b.measure == 2.0
    assert b.contains(np.array([[0.5, 0.0], [0.5, 0.1]])).tolist() == [True, False]


# -- expressions -------------------------------------------------------------

def test_expression_values_and_caret():
    e = Expression("2^x + exp(-x)*cos(pi*x) - tanh(x)/3 + e")
    x = np.array([[0.3], [-0.4]])
    v = x[:, 0]
    want = 2**v + np.exp(-v) * np.cos(np.pi * v) - np.tanh(v) / 3 + math.e
    np.testing.assert_allclose(e(x), want, rtol=1e-14)


def test_expression_derivatives():
    e = Expression("x**3 * t + sin(x*t)", ("x", "t"))
    jet = e.jet(np.array([[0.5, 2.0]]))
    x, t = 0.5, 2.0
    assert jet.d1[0, 0] == pytest.approx(3 * x**2 * t + t * math.cos(x * t))
    assert jet.d2[0, 0, 1] == pytest.approx(3 * x**2 + math.cos(x * t) - x * t * math.sin(x * t))
    assert jet.d3[0, 0, 0, 0] == pytest.approx(6 * t - t**3 * math.cos(x * t))


@pytest.mark.parametrize("src", ["import os", "x.real", "foo(x)", "y + 1", "x if x else 1",
                                 "lambda: 1", "'a'", "sin(x, x)", "x @ x", "(", "True"])
def test_expression_rejects(src):
    with pytest.raises(ExpressionError):
        Expression(src)


def test_manufacture_rejects_bad_expression():
    with pytest.raises(ExpressionError):
        manufacture("sqrt(x)", OperatorSpec.poisson())
