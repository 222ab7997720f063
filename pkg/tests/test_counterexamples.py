import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dini_reglab.counterexamples import (BMOParams, W21Params, apply_operator, bmo_alpha, bmo_d12, bmo_residual,
                                         bmo_solution, coefficient_field, find_bmo_logR, w21_alpha, w21_derivs,
                                         w21_hessian, w21_hessian_norm, w21_limit_at_origin, w21_residual, w21_value)
from dini_reglab.errors import DomainError, EllipticityError, SingularPointError
from dini_reglab.moduli import dini_integral, empirical_modulus

W21 = W21Params(gamma=2.0, logR=10.0)


def polar(r, th):
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def test_w21_boundary_examples():
    u, du, _ = w21_derivs(W21, 1.0)
    assert u == 0.0
    assert du == pytest.approx(-0.01, rel=1e-14)
    assert w21_alpha(W21, 1.0) == pytest.approx(0.25, rel=1e-14)


def test_w21_value_closed_form_gamma_two():
    # for n = 2, gamma = 2: u(r) = 1/logR - 1/(logR + log(1/r))
    r = np.geomspace(1e-10, 1.0, 25)
    exact = 1 / 10.0 - 1 / (10.0 + np.log(1 / r))
    assert np.allclose(w21_derivs(W21, r)[0], exact, rtol=1e-11, atol=1e-15)
    assert w21_limit_at_origin(W21) == pytest.approx(0.1)
    assert w21_value(W21, np.zeros((1, 2)))[0] == pytest.approx(0.1)


def test_w21_first_derivative_matches_difference_quotient():
    r = np.array([0.01, 0.1, 0.5])
    h = 1e-5 * r
    fd = (w21_derivs(W21, r + h)[0] - w21_derivs(W21, r - h)[0]) / (2 * h)
    assert np.allclose(fd, w21_derivs(W21, r)[1], rtol=1e-7)


def test_w21_hessian_matches_difference_quotient():
    x = np.array([0.3, -0.2])
    h = 1e-4
    grad = lambda y: np.array([(w21_value(W21, y + h * e) - w21_value(W21, y - h * e)) / (2 * h)
                               for e in np.eye(2)])
    fd = np.column_stack([(grad(x + h * e) - grad(x - h * e)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(fd, w21_hessian(W21, x), rtol=1e-4)


def test_w21_residual_vanishes_on_polar_samples():
    r = np.geomspace(1e-6, 1.0, 300)
    th = np.linspace(0, 2 * np.pi, 7)[:, None]
    x = polar(r[None, :], th)
    field = coefficient_field(W21.alpha_profile())
    H = w21_hessian(W21, x)
    res = apply_operator(field, H, x)
    assert np.all(np.abs(res) <= 1e-9 * np.linalg.norm(H, axis=(-2, -1)))


def test_w21_hessian_norm_and_eigenvalues():
    x = polar(np.array([0.01, 0.2]), np.array([0.3, 2.0]))
    H = w21_hessian(W21, x)
    assert np.allclose(np.linalg.norm(H, axis=(-2, -1)), w21_hessian_norm(W21, np.array([0.01, 0.2])), rtol=1e-13)
    A = coefficient_field(W21.alpha_profile())(x)
    ev = np.linalg.eigvalsh(A)
    a = w21_alpha(W21, np.array([0.01, 0.2]))
    assert np.allclose(ev[:, 0], 1.0) and np.allclose(ev[:, 1], 1 + a)


def test_w21_in_three_dimensions_reduces_radially():
    p = W21Params(gamma=1.5, logR=5.0, dim=3)
    res, scale = w21_residual(p, np.geomspace(1e-5, 1.0, 50))
    assert np.all(np.abs(res) <= 1e-12 * scale)


def test_w21_parameter_errors():
    with pytest.raises(ValueError):
        W21Params(gamma=1.0)
    with pytest.raises(EllipticityError):
        W21Params(gamma=2.0, logR=1.5)
    with pytest.raises(SingularPointError):
        w21_hessian(W21, np.zeros(2))
    with pytest.raises(DomainError):
        w21_derivs(W21, -0.5)


def test_alpha_profiles_are_not_dini():
    for prof in (W21.alpha_profile(), BMOParams().alpha_profile()):
        spec = empirical_modulus(prof)
        assert dini_integral(spec, lower_cut=spec.smallest_sample).verdict == "divergent"
    # alpha(0) = 0 along both profiles
    assert W21.alpha_profile()(np.array([0.0]))[0] == 0.0
    assert abs(BMOParams().alpha_profile().of_log(1e12)) < 1e-10


def test_bmo_admissible_logR():
    lr = find_bmo_logR()
    assert lr > (3 + math.sqrt(5)) / 2
    p = BMOParams()
    r = np.geomspace(1e-6, 1.0, 200)
    th = np.linspace(0, 2 * np.pi, 33)[:, None]
    x = polar(r[None, :], th)
    L = p.logR + np.log(1 / r)
    assert np.all(bmo_d12(p, x) >= 0.5 * L ** 2)
    assert np.all(1 + bmo_alpha(p, r) > 0)


def test_bmo_derivatives_match_closed_form_u():
    p = BMOParams(logR=6.0)
    u = lambda y: y[0] * y[1] * (6.0 + math.log(1 / math.hypot(*y))) ** 2
    x = np.array([0.2, -0.35])
    h = 1e-4
    _, grad, H = bmo_solution(p, x)
    fdg = np.array([(u(x + h * e) - u(x - h * e)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(fdg, grad, rtol=1e-7)
    fdH = np.array([[(u(x + h * a + h * b) - u(x + h * a - h * b) - u(x - h * a + h * b) + u(x - h * a - h * b))
                     / (4 * h * h) for b in np.eye(2)] for a in np.eye(2)])
    assert np.allclose(fdH, H, rtol=1e-5)
    assert bmo_d12(p, x) == pytest.approx(H[0, 1], rel=1e-13)


def test_bmo_residual():
    p = BMOParams()
    x = polar(np.geomspace(1e-6, 1, 200)[None, :], np.linspace(0.1, 6.2, 9)[:, None])
    res, scale = bmo_residual(p, x)
    assert np.all(np.abs(res) <= 1e-9 * scale)


def test_bmo_small_logR_rejected():
    with pytest.raises(EllipticityError):
        BMOParams(logR=2.0)


@given(st.floats(1.05, 4.0), st.floats(0.0, 20.0), st.floats(-13.0, 0.0))
def test_w21_residual_property(gamma, extra, log10r):
    p = W21Params(gamma=gamma, logR=gamma + 0.5 + extra)
    res, scale = w21_residual(p, 10.0 ** log10r)
    assert abs(res) <= 1e-10 * scale


@given(st.floats(-12.0, 0.0), st.floats(0.0, 2 * math.pi))
def test_bmo_mixed_derivative_lower_bound_property(log10r, th):
    p = BMOParams()
    r = 10.0 ** log10r
    assert bmo_d12(p, polar(np.array(r), np.array(th))) >= 0.5 * (p.logR + math.log(1 / r)) ** 2
