import math
from dataclasses import replace

import numpy as np
import pytest

from spinboson.errors import DomainError, NoRootError, SingularityError
from spinboson.spectral import (FrequencyGrid, ModelParams, SpectralDensityId, calibrate_eta, effective_coupling,
                                evaluate, grows_without_bound, negative_samples, reduction_check, resonances,
                                sample)


def sd(text):
    return SpectralDensityId.parse(text)


@pytest.mark.parametrize("text, expected", [("A_I", "A_I"), ("a_i", "A_I"), ("A,I", "A_I"), ("AI", "A_I"),
                                            (" d_f ", "D_F")])
def test_parse_density_id(text, expected):
    assert str(sd(text)) == expected


@pytest.mark.parametrize("text", ["E_I", "A_X", "A", "A_I_F"])
def test_parse_rejects_unknown_ids(text):
    with pytest.raises(DomainError):
        sd(text)


def test_all_ids_are_eight_distinct():
    ids = SpectralDensityId.all()
    assert len(ids) == 8
    assert len(set(ids)) == 8


@pytest.mark.parametrize("omega", [0.05, 1.0, 4.0, 19.0])
def test_model_a_closed_forms(omega):
    params = ModelParams(eta=0.02, omega_c=4.0)
    m = omega / 4.0
    assert evaluate(sd("A_I"), params, omega) == pytest.approx(0.02 * omega * math.exp(-m), rel=1e-15)
    assert evaluate(sd("A_F"), params, omega) == pytest.approx(0.02 * omega * math.cosh(m), rel=1e-12)


def test_model_b_peaks_near_oscillator_frequency():
    params = ModelParams(eta=0.02, omega_c=11.0, iho_omega=10.0)
    near = evaluate(sd("B_I"), params, 9.9)
    far = evaluate(sd("B_I"), params, 2.0)
    assert near > 0.0
    assert near > 100.0 * far


def test_gamma_is_derived_from_mass():
    params = ModelParams(eta=0.02, omega_c=11.0, kappa1=2.0, iho_mass=4.0)
    assert params.gamma == pytest.approx(0.01)
    held = params.with_gamma(52.0)
    assert held.gamma == pytest.approx(52.0)
    assert held.iho_mass == pytest.approx(2.0 * 0.02 / 52.0)
    assert params.to_dict()["gamma"] == pytest.approx(0.01)


@pytest.mark.parametrize("kwargs", [dict(eta=-1.0, omega_c=1.0), dict(eta=0.1, omega_c=0.0),
                                    dict(eta=0.1, omega_c=1.0, iho_mass=0.0),
                                    dict(eta=0.1, omega_c=1.0, lam=float("inf"))])
def test_model_params_validation(kwargs):
    with pytest.raises(DomainError):
        ModelParams(**kwargs)


@pytest.mark.parametrize("source, target, limit", [
    ("C", "A", dict(lam=0.0, kappa1=0.0, kappa2=1.0)),
    ("C", "B", dict(kappa2=0.0)),
    ("D", "A", dict(lam=0.0, kappa1=0.0, kappa2=1.0)),
    ("D", "B", dict(kappa2=0.0)),
])
@pytest.mark.parametrize("variant", ["I", "F"])
def test_reduction_limits(source, target, limit, variant):
    params = replace(ModelParams(eta=0.02, omega_c=11.0, iho_omega=52.0), **limit)
    grid = FrequencyGrid.linspace(0.05, 20.0, 200)
    deviation = reduction_check(sd(f"{source}_{variant}"), sd(f"{target}_{variant}"), params, grid)
    assert deviation < 1e-12


def test_reduction_check_rejects_unmet_limit():
    params = ModelParams(eta=0.02, omega_c=11.0, kappa2=0.5)
    grid = FrequencyGrid.linspace(0.1, 1.0, 5)
    with pytest.raises(DomainError):
        reduction_check(sd("C_I"), sd("B_I"), params, grid)
    with pytest.raises(DomainError):
        reduction_check(sd("C_I"), sd("B_F"), params, grid)
    with pytest.raises(DomainError):
        reduction_check(sd("A_I"), sd("C_I"), params, grid)


@pytest.mark.parametrize("model", ["A", "B", "C", "D"])
def test_infinite_and_finite_variants_approach_each_other(model):
    # 截止频率越高，两种截止的差别越小
    omegas = np.linspace(0.1, 5.0, 50)
    gaps = []
    for omega_c in (3.0, 5.0, 10.0, 25.0):
        params = ModelParams(eta=0.02, omega_c=omega_c, iho_omega=10.0)
        gaps.append(max(abs(evaluate(sd(f"{model}_I"), params, w) - evaluate(sd(f"{model}_F"), params, w))
                        for w in omegas))
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_undamped_oscillator_is_singular_at_resonance():
    params = ModelParams(eta=0.0, omega_c=4.0, iho_omega=2.0)
    with pytest.raises(SingularityError) as info:
        evaluate(sd("D_I"), params, 2.0)
    assert info.value.omega == 2.0


@pytest.mark.parametrize("omega", [0.0, -1.0, float("nan")])
def test_evaluate_rejects_non_positive_frequency(omega):
    with pytest.raises(DomainError):
        evaluate(sd("A_I"), ModelParams(eta=0.02, omega_c=4.0), omega)


def test_frequency_grid_validation():
    with pytest.raises(DomainError):
        FrequencyGrid(())
    with pytest.raises(DomainError):
        FrequencyGrid((0.0, 1.0))
    with pytest.raises(DomainError):
        FrequencyGrid((1.0, 1.0, 2.0))
    assert len(FrequencyGrid.linspace(0.05, 20.0, 400)) == 400


def test_sample_preserves_grid_order():
    grid = FrequencyGrid((0.5, 1.0, 3.0))
    pairs = sample(sd("A_I"), ModelParams(eta=0.02, omega_c=4.0), grid)
    assert [omega for omega, _ in pairs] == [0.5, 1.0, 3.0]


def test_negative_samples_are_reported():
    assert negative_samples([(1.0, -0.1), (2.0, 0.3), (3.0, -1e-20)]) == [1.0, 3.0]


def test_resonances():
    params = ModelParams(eta=0.02, omega_c=4.0, iho_omega=10.0)
    assert resonances(sd("A_F"), params) == []
    assert resonances(sd("D_I"), params) == [10.0]


@pytest.mark.parametrize("omega_c", [4.0, 10.0])
def test_calibrate_model_a_infinite_closed_form(omega_c):
    params = ModelParams(eta=0.0, omega_c=omega_c)
    eta = calibrate_eta(sd("A_I"), params, 1.0, 0.004)
    assert eta == pytest.approx(0.004 * math.exp(1.0 / omega_c), rel=1e-10)


def test_calibrate_model_a_finite_closed_form():
    eta = calibrate_eta(sd("A_F"), ModelParams(eta=0.0, omega_c=4.0), 1.0, 0.004)
    assert eta == pytest.approx(0.004 / math.cosh(0.25), rel=1e-10)


@pytest.mark.parametrize("text", ["B_I", "B_F", "C_I", "D_F"])
def test_calibration_reaches_target(text):
    params = ModelParams(eta=0.0, omega_c=7.0, iho_omega=10.0)
    eta = calibrate_eta(sd(text), params, 1.0, 0.0035)
    assert effective_coupling(sd(text), params.with_eta(eta), 1.0) == pytest.approx(0.0035, rel=1e-10)


def test_calibration_with_held_damping():
    params = ModelParams(eta=0.0, omega_c=5.0, iho_omega=10.0)
    eta = calibrate_eta(sd("B_I"), params, 1.0, 0.0035, hold_gamma=52.0)
    held = params.with_eta(eta).with_gamma(52.0)
    assert held.gamma == pytest.approx(52.0)
    assert effective_coupling(sd("B_I"), held, 1.0) == pytest.approx(0.0035, rel=1e-10)


def test_calibration_without_root():
    with pytest.raises(NoRootError):
        calibrate_eta(sd("A_I"), ModelParams(eta=0.0, omega_c=4.0), 1.0, 1e6)


def test_calibration_rejects_non_positive_target():
    with pytest.raises(DomainError):
        calibrate_eta(sd("A_I"), ModelParams(eta=0.0, omega_c=4.0), 1.0, 0.0)


def test_only_direct_theta_terms_grow_without_bound():
    params = ModelParams(eta=0.02, omega_c=4.0)
    assert grows_without_bound(sd("A_F"), params)
    assert grows_without_bound(sd("C_F"), params)
    assert grows_without_bound(sd("D_F"), params)
    assert not grows_without_bound(sd("B_F"), params)
    assert not grows_without_bound(sd("C_F"), replace(params, kappa2=0.0))
    assert not any(grows_without_bound(sd(f"{m}_I"), params) for m in "ABCD")
