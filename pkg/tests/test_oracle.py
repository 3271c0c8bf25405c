from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hovi.errors import CapabilityError, InputError
from hovi.oracle import OperatorOracle, estimate_lipschitz, fd_dir_derivative, fd_jacobian, taylor
from hovi.problems import PROBLEM_NAMES, linear_operator, make_problem

M = np.array([[1.0, 2.0], [-2.0, 0.5]])
points = arrays(float, 2, elements=st.floats(-1.5, 1.5))


def test_eval_shape_checked():
    bad = OperatorOracle(2, lambda z: np.zeros(3))
    with pytest.raises(InputError):
        bad.eval([0.0, 0.0])


@given(points, points)
def test_dir_derivative_order_zero_is_value(z, h):
    op = make_problem("forsaken").oracle
    np.testing.assert_array_equal(op.dir_derivative(z, h, 0), op.eval(z))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
@given(z=points, h=points, t=st.floats(-3, 3))
def test_dir_derivative_homogeneous(k, z, h, t):
    op = make_problem("modified_forsaken").oracle
    lhs = op.dir_derivative(z, t * h, k)
    rhs = t**k * op.dir_derivative(z, h, k)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-9)


def test_linear_taylor_is_exact():
    op = linear_operator(M)
    zp = np.array([0.3, -1.1])
    for center in ([0.0, 0.0], [2.0, -5.0]):
        np.testing.assert_allclose(taylor(op, center, 1).evaluate(zp), M @ zp, rtol=1e-14)


def test_order_zero_model_is_constant():
    op = make_problem("forsaken").oracle
    z = np.array([0.2, 0.9])
    np.testing.assert_array_equal(taylor(op, z, 0).evaluate([1.0, -1.0]), op.eval(z))


@given(points)
def test_taylor_at_center(z):
    op = make_problem("x2y").oracle
    for order in range(4):
        np.testing.assert_allclose(taylor(op, z, order).evaluate(z), op.eval(z), rtol=1e-15)


@pytest.mark.parametrize("name", PROBLEM_NAMES)
@given(z=points, zp=points)
def test_polynomial_exactness(name, z, zp):
    op = make_problem(name).oracle
    order = op.degree
    ref = op.eval(zp)
    np.testing.assert_allclose(taylor(op, z, order).evaluate(zp), ref, rtol=1e-10, atol=1e-10 * (1 + np.abs(ref).max()))


def test_forsaken_second_order_model():
    op = make_problem("forsaken").oracle
    z, zp = np.array([0.5, 0.5]), np.array([0.6, 0.4])
    model = taylor(op, z, 2).evaluate(zp)
    assert np.abs(model - op.eval(zp)).max() <= 5e-3
    # independent oracle: t -> F(z + t (zp - z)) is a quintic, so a degree-6 fit
    # on 9 nodes is exact; its first three coefficients give the order-2 model
    ts = np.linspace(-1, 1, 9)
    vals = np.array([op.eval(z + t * (zp - z)) for t in ts])
    coef = np.polynomial.polynomial.polyfit(ts, vals, 6)
    np.testing.assert_allclose(model, coef[:3].sum(axis=0), atol=1e-10)
    np.testing.assert_allclose(model, [-0.105, -0.5175], atol=1e-12)


def test_fd_examples():
    ident = linear_operator(np.eye(2))
    h = np.array([0.7, -3.0])
    np.testing.assert_allclose(fd_dir_derivative(ident, [0.1, 0.2], h, 1), h, rtol=1e-9)
    np.testing.assert_allclose(fd_dir_derivative(linear_operator(M), [1.0, 2.0], h, 2), 0.0, atol=1e-5)
    op = make_problem("forsaken").oracle
    jvp = op.jacobian(np.array([1.0, 1.0])) @ np.array([1.0, 0.0])
    np.testing.assert_allclose(fd_dir_derivative(op, [1.0, 1.0], [1.0, 0.0], 1), jvp, atol=1e-5)


def test_fd_order_limit():
    op = make_problem("forsaken").oracle
    with pytest.raises(CapabilityError):
        fd_dir_derivative(op, [0.0, 0.0], [1.0, 0.0], 4)


def test_capability_error_without_fallback():
    op = OperatorOracle(2, lambda z: z**3, fd_fallback=False)
    with pytest.raises(CapabilityError):
        taylor(op, [0.0, 0.0], 1)
    fd_op = OperatorOracle(2, lambda z: z**3)
    with pytest.raises(CapabilityError):
        taylor(fd_op, [0.0, 0.0], 4)


def test_fd_fallback_taylor():
    op = OperatorOracle(2, lambda z: np.array([z[0] ** 3, z[0] * z[1]]))
    model = taylor(op, [1.0, 1.0], 3)
    np.testing.assert_allclose(model.evaluate([1.2, 0.9]), op.eval([1.2, 0.9]), atol=1e-6)
    np.testing.assert_allclose(fd_jacobian(op.eval, [1.0, 2.0]), [[3.0, 0.0], [2.0, 1.0]], atol=1e-8)


def test_estimate_lipschitz_linear():
    assert estimate_lipschitz(linear_operator(np.eye(2)), 1, 2, ((-1, -1), (1, 1)), 200, 0) == pytest.approx(1.0)
    # zero up to the round-off of F(b) - F(a) - M(b - a)
    assert estimate_lipschitz(linear_operator(M), 2, 3, ((-1, -1), (1, 1)), 200, 0) <= 1e-10
    est = estimate_lipschitz(linear_operator(M), 1, 2, ((-1, -1), (1, 1)), 2000, 0)
    assert 0.97 * np.linalg.norm(M, 2) <= est <= np.linalg.norm(M, 2) + 1e-12


def test_estimate_lipschitz_forsaken():
    entry = make_problem("forsaken")
    est = estimate_lipschitz(entry.oracle, 1, 2, entry.box, 10_000, 7)
    assert 3 <= est <= 12
    assert est == pytest.approx(11.94013962638954, rel=1e-12)
    # grid maximisation of the spectral norm of the Jacobian bounds it from above
    xs = np.linspace(-1.5, 1.5, 200)
    grid = max(np.linalg.norm(entry.oracle.jacobian(np.array([x, y])), 2) for x in xs for y in xs)
    assert est <= grid


def test_estimate_lipschitz_deterministic_and_validated():
    op = make_problem("x2y").oracle
    box = ((-1, -1), (1, 1))
    assert estimate_lipschitz(op, 2, 2, box, 500, 4) == estimate_lipschitz(op, 2, 2, box, 500, 4)
    with pytest.raises(InputError):
        estimate_lipschitz(op, 1, 2, ((0, 0), (0, 1)), 100, 0)


def test_derivative_beyond_degree_is_zero():
    op = make_problem("x2y").oracle
    assert op.is_zero_order(3)
    assert math.isinf(op.max_analytic_order)
    np.testing.assert_array_equal(op.derivative([1.0, 1.0], 5), np.zeros((2,) * 6))
