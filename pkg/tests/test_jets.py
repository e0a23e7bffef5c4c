import math

import numpy as np
import pytest

from taylorsr.expr import Expr, SymbolLibrary, random_expr
from taylorsr.jets import Jet, derivative, jet_var, taylor_coeffs

X0, X1 = Expr.var(0), Expr.var(1)


class TestJetBasics:
    def test_active_variable_seed(self):
        j = jet_var(3.0, True, 5)
        np.testing.assert_array_equal(j.coeffs, [3, 1, 0, 0, 0, 0])

    def test_inactive_variable_seed(self):
        j = jet_var(3.0, False, 5)
        np.testing.assert_array_equal(j.coeffs, [3, 0, 0, 0, 0, 0])

    def test_minimal_order(self):
        np.testing.assert_array_equal(jet_var(0.0, True, 2).coeffs, [0, 1, 0])

    def test_order_bounds(self):
        with pytest.raises(ValueError):
            jet_var(0.0, True, 1)
        with pytest.raises(ValueError):
            jet_var(0.0, True, 9)


class TestJetArithmetic:
    def test_exp_taylor_at_zero(self):
        e = jet_var(0.0, True, 5).exp()
        np.testing.assert_allclose(
            e.coeffs, [1, 1, 1 / 2, 1 / 6, 1 / 24, 1 / 120], atol=1e-15
        )

    def test_sin_taylor_at_zero(self):
        s = jet_var(0.0, True, 5).sin()
        np.testing.assert_allclose(s.coeffs, [0, 1, 0, -1 / 6, 0, 1 / 120], atol=1e-15)

    def test_square_of_one_plus_h(self):
        j = jet_var(1.0, True, 2)
        np.testing.assert_allclose((j * j).coeffs, [1, 2, 1], atol=1e-15)

    def test_sin_sq_plus_cos_sq(self):
        j = jet_var(0.7, True, 6)
        s, c = j.sin(), j.cos()
        total = s * s + c * c
        np.testing.assert_allclose(total.coeffs, [1, 0, 0, 0, 0, 0, 0], atol=1e-14)

    def test_div_inverts_mul(self):
        rng = np.random.default_rng(0)
        a = Jet(rng.normal(size=6))
        b = Jet(rng.normal(size=6) + np.array([2.0, 0, 0, 0, 0, 0]))
        np.testing.assert_allclose(((a * b) / b).coeffs, a.coeffs, atol=1e-12)

    def test_div_by_zero_constant_term_invalid(self):
        a = jet_var(1.0, True, 3)
        b = jet_var(0.0, True, 3)
        assert not (a / b).is_valid

    def test_overflow_invalid(self):
        big = Jet(np.array([1e308, 1e308, 0.0]))
        assert not (big * big).is_valid

    def test_tanh_taylor_at_zero(self):
        t = jet_var(0.0, True, 5).tanh()
        np.testing.assert_allclose(t.coeffs, [0, 1, 0, -1 / 3, 0, 2 / 15], atol=1e-14)


class TestTaylorCoeffs:
    def test_sin_of_difference(self):
        f = Expr.unary("sin", Expr.binary("sub", X0, X1))
        c = taylor_coeffs(f, np.array([0.0, 0.0]), axis=0, order=5)
        np.testing.assert_allclose(c, [0, 1, 0, -1 / 6, 0, 1 / 120], atol=1e-15)

    def test_constant_function(self):
        c = taylor_coeffs(Expr.const(1.0), np.array([0.3, 0.4]), axis=1, order=5)
        np.testing.assert_allclose(c, [1, 0, 0, 0, 0, 0], atol=0)

    def test_quartic_binomial_expansion(self):
        # 2.5*(1+h)^4 = 2.5 + 10h + 15h^2 + 10h^3 + 2.5h^4
        f = Expr.binary("mul", Expr.const(2.5), Expr.powi(X0, 4))
        c = taylor_coeffs(f, np.array([1.0]), axis=0, order=5)
        np.testing.assert_allclose(c, [2.5, 10, 15, 10, 2.5, 0], atol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(2)
        lib = SymbolLibrary(n_vars=2)
        anchor = np.array([0.3, -0.2])
        for _ in range(20):
            f = random_expr(lib, 4, rng)
            g = random_expr(lib, 4, rng)
            a, b = rng.normal(size=2)
            combo = Expr.binary(
                "add",
                Expr.binary("mul", Expr.const(a), f),
                Expr.binary("mul", Expr.const(b), g),
            )
            cf = taylor_coeffs(f, anchor, 0, 5)
            cg = taylor_coeffs(g, anchor, 0, 5)
            cc = taylor_coeffs(combo, anchor, 0, 5)
            if np.isfinite(cf).all() and np.isfinite(cg).all():
                np.testing.assert_allclose(
                    cc, a * cf + b * cg, rtol=1e-9, atol=1e-9
                )

    def test_axis_independence(self):
        # expression without the active axis has zero higher coefficients
        f = Expr.unary("cos", X0)
        c = taylor_coeffs(f, np.array([0.5, 0.7]), axis=1, order=5)
        assert c[0] == pytest.approx(math.cos(0.5))
        np.testing.assert_allclose(c[1:], 0.0, atol=0)


class TestDerivative:
    def test_second_derivative_of_sin_pix(self):
        f = Expr.unary("sin", Expr.binary("mul", Expr.const(math.pi), X0))
        d2 = derivative(f, np.array([0.5]), axis=0, order=2)
        assert d2 == pytest.approx(-math.pi**2, rel=1e-12)

    def test_time_derivative_of_difference(self):
        f = Expr.binary("sub", X0, X1)
        assert derivative(f, np.array([0.8, 0.1]), axis=1, order=1) == -1.0

    def test_quartic_second_derivative(self):
        f = Expr.binary("mul", Expr.const(2.5), Expr.powi(X0, 4))
        assert derivative(f, np.array([1.0]), axis=0, order=2) == pytest.approx(30.0)

    def test_batched(self):
        f = Expr.powi(X0, 3)
        pts = np.array([[0.5], [1.0], [2.0]])
        np.testing.assert_allclose(
            derivative(f, pts, axis=0, order=2), 6 * pts[:, 0], rtol=1e-12
        )


def _finite_difference(f, point, axis, order, h=1e-4):
    """Central finite differences, the independent oracle for jet derivatives."""
    point = np.asarray(point, dtype=float)

    def g(s):
        p = point.copy()
        p[axis] += s
        return f.eval(p)

    if order == 1:
        return (g(h) - g(-h)) / (2 * h)
    if order == 2:
        return (g(h) - 2 * g(0) + g(-h)) / h**2
    if order == 3:
        return (g(2 * h) - 2 * g(h) + 2 * g(-h) - g(-2 * h)) / (2 * h**3)
    if order == 4:
        return (g(2 * h) - 4 * g(h) + 6 * g(0) - 4 * g(-h) + g(-2 * h)) / h**4
    if order == 5:
        return (
            g(3 * h) - 4 * g(2 * h) + 5 * g(h) - 5 * g(-h) + 4 * g(-2 * h) - g(-3 * h)
        ) / (2 * h**5)
    raise ValueError(order)


class TestFiniteDifferenceOracle:
    def test_random_expressions_low_orders(self):
        rng = np.random.default_rng(11)
        lib = SymbolLibrary(n_vars=2, use_pow=True)
        checked = 0
        while checked < 50:
            f = random_expr(lib, 4, rng)
            point = rng.uniform(-1, 1, size=2)
            for order in (1, 2):
                exact = derivative(f, point, 0, order)
                approx = _finite_difference(f, point, 0, order)
                if not (np.isfinite(exact) and np.isfinite(approx)):
                    continue
                if abs(exact) < 1e-3 or abs(exact) > 1e4:
                    continue  # FD oracle unreliable near zero/blowup
                assert exact == pytest.approx(approx, rel=1e-4)
                checked += 1
