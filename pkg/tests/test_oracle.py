import math

import numpy as np
import pytest
from scipy import linalg

from evaluation.oracle import (DiscreteModeBath, OracleReport, coefficient_quadrature, decoherence_function,
                               discrete_dephasing, exact_dephasing, pv_integrand, pv_quadrature_R,
                               small_bath_exact)
from spinboson.bath import InfluenceCoefficients, build_coefficients
from spinboson.errors import DomainError, TruncationError
from spinboson.quapi import PropagationConfig, SystemSpec, propagate
from spinboson.specfun import r_function
from spinboson.spectral import ModelParams, SpectralDensityId
from utils.presets import get_preset

A_I = SpectralDensityId.parse("A_I")


@pytest.mark.parametrize("omega", [0.25, 1.0, 2.0, 4.0])
def test_real_part_of_r_is_minus_principal_value(omega):
    assert r_function(omega, 4.0).real == pytest.approx(-pv_quadrature_R(omega, 4.0), abs=1e-8)


def test_principal_value_pair_cancellation():
    omega, omega_c = 1.0, 4.0

    def pair(u):
        return pv_integrand(omega + u, omega, omega_c) + pv_integrand(omega - u, omega, omega_c)

    # 单侧发散，对称的一对有限，趋于 2g′(ω)
    assert abs(pv_integrand(omega + 1e-4, omega, omega_c)) > 1e3
    assert abs(pair(1e-4) - pair(1e-3)) < 1e-4
    g_prime = math.exp(-omega / omega_c) * (-1 / (omega_c * 2 * omega) - 1 / (2 * omega) ** 2)
    assert pair(1e-4) == pytest.approx(2 * g_prime, rel=1e-4)


def test_principal_value_vanishes_with_cutoff():
    values = [abs(pv_quadrature_R(1.0, wc)) for wc in (4.0, 10.0, 100.0)]
    assert values[0] > values[1] > values[2]
    assert values[2] < 0.06


def test_principal_value_domain():
    with pytest.raises(DomainError):
        pv_quadrature_R(0.0, 4.0)


def test_exact_dephasing_shape():
    preset = get_preset("dephasing")
    bath = preset.bath(A_I)
    times = np.linspace(0.0, 20.0, 81)
    values = exact_dephasing(preset.system(), bath, times)
    assert values[0] == pytest.approx(0.5)
    assert np.all(np.diff(values) <= 1e-12)
    assert values[-1] < values[0]
    assert np.all(decoherence_function(bath, times) >= 0.0)


def test_exact_dephasing_requires_pure_dephasing():
    with pytest.raises(DomainError):
        exact_dephasing(SystemSpec.superposition(1.0, 0.1), get_preset("dephasing").bath(A_I), [0.0, 1.0])


def test_small_bath_without_modes_is_unitary():
    system = SystemSpec.localized(0.3, 1.0)
    times = np.linspace(0.0, 5.0, 11)
    result = small_bath_exact(system, None, times)
    for t, rho in zip(times, result.rho):
        u = linalg.expm(-1j * system.hamiltonian() * t)
        assert np.allclose(rho, u @ system.initial_state @ u.conj().T, atol=1e-12)


def test_uncoupled_mode_leaves_qubit_unitary():
    system = SystemSpec.localized(0.3, 1.0)
    times = np.linspace(0.0, 5.0, 11)
    modes = DiscreteModeBath((2.0,), (0.0,), beta_hbar=5.0)
    exact = small_bath_exact(system, modes, times, fock_cut=5)
    bare = small_bath_exact(system, None, times)
    assert np.allclose(exact.rho, bare.rho, atol=1e-10)


def test_small_bath_limits():
    system = SystemSpec.localized(0.0, 1.0)
    modes = DiscreteModeBath((1.0,) * 5, (0.1,) * 5, beta_hbar=5.0)
    with pytest.raises(DomainError):
        small_bath_exact(system, modes, [0.0])
    with pytest.raises(DomainError):
        DiscreteModeBath((1.0, 2.0), (0.1,), beta_hbar=1.0)


def test_small_fock_space_is_rejected():
    modes = DiscreteModeBath((1.0,), (1.0,), beta_hbar=5.0)
    with pytest.raises(TruncationError):
        small_bath_exact(SystemSpec.superposition(1.0, 0.0), modes, [0.0, 1.0], fock_cut=3)


def test_discrete_line_broadening_matches_dephasing_formula():
    modes = DiscreteModeBath((1.0, 1.7), (0.3, 0.25), beta_hbar=2.0)
    t = 1.3
    expected = sum(2 * c * c / w ** 3 / math.tanh(w) * (1 - math.cos(w * t))
                   for w, c in zip(modes.frequencies, modes.couplings))
    values = discrete_dephasing(SystemSpec.superposition(1.0, 0.0), modes, [t])
    assert values[0] == pytest.approx(0.5 * math.exp(-expected), rel=1e-14)


@pytest.mark.slow
def test_two_mode_exact_diagonalization_matches_dephasing_formula():
    system = SystemSpec.superposition(1.0, 0.0)
    modes = DiscreteModeBath((1.0, 1.7), (0.3, 0.25), beta_hbar=2.0)
    times = np.linspace(0.0, 4.0, 9)
    exact = small_bath_exact(system, modes, times)
    assert np.max(np.abs(exact.abs_rho12() - discrete_dephasing(system, modes, times))) < 1e-6


@pytest.mark.slow
def test_small_bath_matches_quapi_at_short_times():
    sampled = DiscreteModeBath.from_density(A_I, ModelParams(eta=0.05, omega_c=4.0), (1.0, 2.0), (1.0, 1.0),
                                            beta_hbar=2.0)
    system = SystemSpec.localized(0.0, 1.0)
    config = PropagationConfig(0.25, 8, 8)
    coeffs = InfluenceCoefficients.from_line_broadening(sampled.line_broadening, 0.25, 8)
    result = propagate(system, coeffs, config)
    exact = small_bath_exact(system, sampled, result.times)
    assert np.max(np.abs(exact.rho11() - result.rho11())) < 0.01


@pytest.mark.slow
def test_coefficients_match_double_quadrature(ohmic_bath):
    coeffs = build_coefficients(ohmic_bath, 0.1, 3)
    for lag in range(4):
        assert coefficient_quadrature(ohmic_bath, 0.1, lag, "interior") == pytest.approx(coeffs.interior[lag],
                                                                                         abs=1e-8)
        assert coefficient_quadrature(ohmic_bath, 0.1, lag, "mixed") == pytest.approx(coeffs.mixed[lag], abs=1e-8)
    for lag in range(1, 4):
        assert coefficient_quadrature(ohmic_bath, 0.1, lag, "both") == pytest.approx(coeffs.both[lag], abs=1e-8)


def test_coefficient_quadrature_rejects_unknown_kind(ohmic_bath):
    with pytest.raises(DomainError):
        coefficient_quadrature(ohmic_bath, 0.1, 1, "corner")


def test_report_compare_and_text():
    passed = OracleReport.compare("demo", [1.0, 2.0], [1.0, 2.0 + 1e-10], "2 点", 1e-8)
    assert passed.passed
    assert passed.max_abs_error == pytest.approx(1e-10, rel=1e-3)
    assert "status: PASS" in passed.to_text()

    scaled = OracleReport.compare("rel", [10.0], [10.1], "1 点", 0.2)
    assert scaled.passed
    assert scaled.max_rel_error == pytest.approx(0.01)

    failed = OracleReport.compare("bad", [1.0], [1.5], "1 点", 1e-3, gating=False)
    assert not failed.passed
    assert "status: INFO" in failed.to_text()


def test_report_from_failure():
    report = OracleReport.failure("broken", "无", TruncationError("too small"))
    assert not report.passed
    assert math.isinf(report.max_abs_error)
    assert "TruncationError" in report.to_text()
    assert "status: FAIL" in report.to_text()


def test_ordering_report():
    passed = OracleReport.ordering("fast", 1.0, 2.0, "2 点")
    assert passed.passed and passed.max_abs_error == 0.0
    failed = OracleReport.ordering("slow", 3.0, 2.0, "2 点", gating=False)
    assert not failed.passed
    assert failed.max_abs_error == pytest.approx(1.0)
    assert "INFO" in failed.to_text()
    assert not OracleReport.ordering("never", None, None, "2 点").passed
    assert OracleReport.ordering("open", 1.0, None, "2 点").passed


def test_bound_report():
    inside = OracleReport.bound("gap", 0.01, "1 点", 0.05)
    assert inside.passed
    assert inside.max_rel_error == pytest.approx(0.2)
    assert not OracleReport.bound("gap", 0.06, "1 点", 0.05).passed
    assert not OracleReport.bound("gap", float("nan"), "1 点", 0.05).passed
