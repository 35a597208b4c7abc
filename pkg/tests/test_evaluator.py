import io
import json

import numpy as np
import pytest
from rich.console import Console

from evaluation.evaluator import (Evaluator, _decay_time, check_principal_value, check_reductions,
                                  check_special_functions, run_oracle_suite)
from spinboson.spectral import SpectralDensityId
from ui.renderer import ReportRenderer
from utils.presets import PRESETS, get_preset, list_presets


def short_preset(name, steps=30):
    return get_preset(name).with_overrides({"steps": str(steps)})


def test_calibration_rows():
    rows = Evaluator(get_preset("cd")).calibrate()
    assert [row["density"] for row in rows] == ["C_I", "C_F", "D_I", "D_F"]
    assert all(row["eta"] > 0.0 and row["eta_prime"] == 0.0035 for row in rows)


def test_dynamics_and_comparison_summary():
    evaluator = Evaluator(short_preset("a-wc4"), deterministic=True)
    trajectories = evaluator.run_dynamics()
    assert set(map(str, trajectories)) == {"A_I", "A_F"}
    assert len(evaluator.results["runs"]) == 2
    assert all(run["trace_drift"] < 1e-10 for run in evaluator.results["runs"])

    columns = evaluator.dynamics_columns(trajectories)
    assert list(columns) == ["t_over_Delta", "rho11_A_I", "rho11_A_F", "abs_rho12_A_I", "abs_rho12_A_F"]
    assert len(columns["t_over_Delta"]) == 31

    summary = evaluator.compare_variants(trajectories)
    assert set(summary["decay_times"]) == {"A_I", "A_F"}
    assert set(summary["faster_first"]["rho11"]) == {"A_I", "A_F"}
    assert list(summary["max_pointwise_difference"]) == ["A_I-A_F"]


def test_memory_override_in_dynamics():
    evaluator = Evaluator(short_preset("a-wc4-offdiag", 10), deterministic=True)
    evaluator.run_dynamics(memory_length=1)
    assert all(run["memory_length"] == 1 for run in evaluator.results["runs"])


def test_sample_densities_columns():
    columns = Evaluator(get_preset("cd-offdiag")).sample_densities()
    assert list(columns) == ["omega_over_epsilon", "J_C_I", "J_C_F", "J_D_I", "J_D_F"]
    assert len(columns["J_C_I"]) == 400


def test_save_results(tmp_path):
    evaluator = Evaluator(short_preset("a-wc4", 10), deterministic=True)
    evaluator.calibrate()
    path = evaluator.save(str(tmp_path))
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    assert data["preset"] == "a-wc4"
    assert len(data["summary"]["calibration"]) == 2


def test_fast_oracle_checks_pass():
    reports = check_special_functions() + [check_principal_value()] + check_reductions()
    assert len(reports) == 12
    failed = [report.name for report in reports if not report.passed]
    assert failed == []


def test_renderer_writes_tables():
    buffer = io.StringIO()
    renderer = ReportRenderer(Console(file=buffer, width=200))
    evaluator = Evaluator(short_preset("a-wc4", 10), deterministic=True)
    trajectories = evaluator.run_dynamics()
    renderer.render_header("约化动力学", "a-wc4")
    renderer.render_calibration(evaluator.calibrate())
    renderer.render_runs(evaluator.results["runs"])
    renderer.render_comparison(evaluator.compare_variants(trajectories))
    renderer.render_presets(list_presets()[:3], "1")
    renderer.render_oracle_reports(check_reductions()[:2])
    renderer.render_output("out.csv")
    text = buffer.getvalue()
    assert "A_I" in text
    assert "a-wc4" in text
    assert "out.csv" in text


@pytest.mark.slow
def test_memory_truncation_is_visible_for_dephasing():
    evaluator = Evaluator(get_preset("a-wc4-offdiag"), deterministic=True)
    deviation = evaluator.memory_comparison(SpectralDensityId.parse("A_I"), memory_length=0)
    assert deviation["abs_rho12"] > 0.02
    assert evaluator.results["summary"]["memory_comparison"]["memory_lengths"] == [0, 3]


@pytest.mark.slow
@pytest.mark.parametrize("name, key", [("a-wc10", "rho11"), ("a-wc10-offdiag", "abs_rho12")])
def test_high_cutoff_variants_agree(name, key):
    evaluator = Evaluator(get_preset(name), deterministic=True)
    summary = evaluator.compare_variants(evaluator.run_dynamics())
    assert summary["max_pointwise_difference"]["A_I-A_F"][key] < 0.05


@pytest.mark.slow
def test_sweep_reports_each_density():
    evaluator = Evaluator(short_preset("a-wc4", 40), deterministic=True)
    reports = evaluator.run_sweep()
    assert set(map(str, reports)) == {"A_I", "A_F"}
    for report in reports.values():
        assert set(report.deviations) == {"half_step", "memory_plus_one", "half_step_memory_plus_one"}
        assert 0.0 < report.max_deviation < 0.02
        assert report.converged
    assert set(evaluator.results["summary"]["sweep"]) == {"A_I", "A_F"}


@pytest.mark.slow
def test_oracle_suite_gating_checks_pass():
    reports = run_oracle_suite()
    failed = [report.name for report in reports if report.gating and not report.passed]
    assert failed == []
    assert any(not report.gating for report in reports)


def test_decay_time_interpolates_between_steps():
    times = np.array([0.0, 1.0, 2.0, 3.0])
    env = np.array([1.0, 0.5, 0.1, 0.0])
    assert _decay_time(times, env, level=0.3) == pytest.approx(1.5)
    assert _decay_time(times, env, level=0.5) == pytest.approx(1.0)
    assert _decay_time(times, np.array([1.0, 0.9, 0.8, 0.7]), level=0.3) is None
    assert _decay_time(times, np.zeros(4)) is None


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_propagates(name):
    evaluator = Evaluator(short_preset(name, 20), deterministic=True)
    trajectories = evaluator.run_dynamics()
    assert set(trajectories) == set(evaluator.preset.densities)
    for run in evaluator.results["runs"]:
        assert run["trace_drift"] < 1e-10
        assert run["hermiticity_defect"] < 1e-10


@pytest.mark.slow
@pytest.mark.parametrize("name, key", [("a-wc4", "rho11"), ("a-wc4-offdiag", "abs_rho12")])
def test_infinite_cutoff_decays_faster_at_low_cutoff(name, key):
    evaluator = Evaluator(get_preset(name), deterministic=True)
    decay = evaluator.compare_variants(evaluator.run_dynamics())["decay_times"]
    assert decay["A_I"][key] < decay["A_F"][key]


@pytest.mark.slow
@pytest.mark.parametrize("name, key", [("cd", "rho11"), ("cd-offdiag", "abs_rho12")])
def test_model_d_decays_slower_than_model_c(name, key):
    evaluator = Evaluator(get_preset(name), deterministic=True)
    decay = evaluator.compare_variants(evaluator.run_dynamics())["decay_times"]
    assert decay["C_I"][key] < decay["D_I"][key]
    assert decay["C_F"][key] < decay["D_F"][key]


@pytest.mark.slow
@pytest.mark.parametrize("name, key", [("b-wc25-omega52", "rho11"), ("b-wc25-omega52-offdiag", "abs_rho12")])
def test_model_b_variants_coincide_at_high_cutoff(name, key):
    evaluator = Evaluator(get_preset(name), deterministic=True)
    summary = evaluator.compare_variants(evaluator.run_dynamics())
    assert summary["max_pointwise_difference"]["B_I-B_F"][key] < 0.05


@pytest.mark.slow
@pytest.mark.xfail(reason="ω_c = 3 时 J_B^I 下的包络仍比 J_B^F 衰减得快", strict=False)
@pytest.mark.parametrize("name, key", [("b-wc3-omega52", "rho11"), ("b-wc3-omega52-offdiag", "abs_rho12")])
def test_model_b_reversal_at_low_cutoff(name, key):
    evaluator = Evaluator(get_preset(name), deterministic=True)
    decay = evaluator.compare_variants(evaluator.run_dynamics())["decay_times"]
    assert decay["B_F"][key] < decay["B_I"][key]
