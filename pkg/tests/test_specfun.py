import math

import numpy as np
import pytest
from scipy import special

from evaluation.oracle import chi_term_quadrature, shi_quadrature, w_real_quadrature
from spinboson.errors import DomainError
from spinboson.specfun import (chi, chi_term, ci_negative_imaginary, r_function, shi, sine_lorentz_integral,
                               theta, w_function)


def test_shi_and_chi_term_known_values():
    assert shi(0.0) == 0.0
    assert shi(1.0) == pytest.approx(1.0572508753757285, rel=1e-14)
    assert chi_term(1.0) == pytest.approx(0.33740392290096816, rel=1e-14)


@pytest.mark.parametrize("m", [0.01, 0.3, 1.0, 2.5, 5.0])
def test_shi_and_chi_term_match_direct_quadrature(m):
    assert shi(m) == pytest.approx(shi_quadrature(m), abs=1e-10)
    assert chi_term(m) == pytest.approx(chi_term_quadrature(m), abs=1e-10)


def test_chi_term_rejects_zero_and_negative():
    with pytest.raises(DomainError):
        chi_term(0.0)
    with pytest.raises(DomainError):
        shi(-1.0)
    with pytest.raises(DomainError):
        chi(float("nan"))


def test_ci_branch_gives_positive_imaginary_part():
    value = ci_negative_imaginary(0.7)
    assert value.real == pytest.approx(special.shichi(0.7)[1])
    assert value.imag == pytest.approx(math.pi / 2)


@pytest.mark.parametrize("m", [0.05, 0.5, 1.0, 3.0, 10.0])
def test_imaginary_part_of_w_is_sinh(m):
    assert w_function(m, 1.0).imag == pytest.approx(math.sinh(m), rel=1e-12)


@pytest.mark.parametrize("m", [1.5, 2.0, 3.0, 5.0])
def test_stable_form_agrees_with_shi_chi_assembly(m):
    s, c = special.shichi(m)
    literal = (-s * math.cosh(m) + c * math.sinh(m)) / math.pi
    assert w_function(m, 1.0).real == pytest.approx(literal, abs=1e-10)


@pytest.mark.parametrize("m", [1.0, 40.0])
def test_sine_lorentz_integral_is_continuous_across_switches(m):
    assert sine_lorentz_integral(m - 1e-9) == pytest.approx(sine_lorentz_integral(m + 1e-9), abs=1e-8)


def test_sine_lorentz_integral_large_m_asymptote():
    # ∫ sin(mx)/(1+x²) dx → 1/m
    assert sine_lorentz_integral(200.0) == pytest.approx(1.0 / 200.0, rel=1e-3)


@pytest.mark.parametrize("m", np.linspace(0.01, 5.0, 12))
def test_real_part_of_w_matches_oscillatory_quadrature(m):
    assert w_function(m, 1.0).real == pytest.approx(w_real_quadrature(m), abs=1e-8)


def test_imaginary_part_of_w_shrinks_with_cutoff():
    values = [abs(w_function(1.0, wc).imag) for wc in (4.0, 5.0, 10.0, 25.0, 100.0)]
    assert all(a > b for a, b in zip(values, values[1:]))
    # 大截止下 |Im W| ≈ m
    assert abs(w_function(1.0, 1e4).imag) == pytest.approx(1e-4, rel=1e-8)


def test_theta_is_cosh_and_positive():
    for omega in (0.1, 1.0, 7.0, 30.0):
        assert theta(omega, 4.0) == pytest.approx(math.cosh(omega / 4.0), rel=1e-12)
        assert theta(omega, 4.0) > 0.0


def test_r_function_imaginary_part():
    omega, omega_c = 1.3, 4.0
    m = omega / omega_c
    expected = -math.pi / omega * (math.exp(-m) + math.sinh(m))
    assert r_function(omega, omega_c).imag == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("omega, omega_c", [(-1.0, 1.0), (0.0, 1.0), (1.0, 0.0), (1.0, -2.0), (800.0, 1.0)])
def test_w_function_domain(omega, omega_c):
    with pytest.raises(DomainError):
        w_function(omega, omega_c)
