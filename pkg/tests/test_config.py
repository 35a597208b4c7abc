import dataclasses

import pytest

from spinboson.errors import ConfigError
from utils.config_loader import NumericsSettings, RunConfig, get_numerics_settings, load_config
from utils.presets import PRESET_ALIASES, PRESET_CATALOG_VERSION, PRESETS, get_preset, list_presets


def write_ini(tmp_path, text):
    path = tmp_path / "config.ini"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_run_config_text_round_trip():
    config = RunConfig("dynamics", preset="a-wc4", overrides={"omega_c": "4.1", "steps": "50"},
                       output_path="out.csv", deterministic=True)
    assert RunConfig.from_text(config.to_text()) == config


def test_run_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig("dynamics", overrides={"colour": "blue"})
    with pytest.raises(ConfigError):
        RunConfig("plot")
    with pytest.raises(ConfigError):
        RunConfig.from_text("[run]\ncommand = sdf\nspeed = fast\n")
    with pytest.raises(ConfigError):
        RunConfig.from_text("[run]\npreset = all-densities\n")
    with pytest.raises(ConfigError):
        RunConfig.from_text("[run]\ncommand = sdf\ndeterministic = maybe\n")


def test_command_line_overrides_win():
    config = RunConfig("sdf", overrides={"eta": "0.01", "omega_c": "11"})
    merged = config.merged({"eta": "0.02"})
    assert merged.overrides == {"eta": "0.02", "omega_c": "11"}
    assert config.overrides["eta"] == "0.01"


def test_load_config_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "absent.ini"))


def test_load_config_rejects_unknown_section(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, "[plotting]\ncolour = red\n"))
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, "[bath]\nedge = 2\n"))


def test_numerics_from_file(tmp_path):
    path = write_ini(tmp_path, "[quadrature]\nepsrel = 1e-9\n[bath]\nhz_to_angular = 6.283185307179586\n"
                               "[propagation]\nconvergence_threshold = 0.05\n[logging]\nlevel = INFO\n")
    numerics = get_numerics_settings(load_config(path))
    assert numerics.quadrature.epsrel == 1e-9
    assert numerics.quadrature.epsabs == 1e-11
    assert numerics.hz_to_angular == pytest.approx(6.283185307179586)
    assert numerics.convergence_threshold == 0.05
    assert numerics.log_level == "INFO"


def test_invalid_numeric_value(tmp_path):
    with pytest.raises(ConfigError):
        get_numerics_settings(load_config(write_ini(tmp_path, "[quadrature]\nlimit = many\n")))


def test_environment_overrides_file(tmp_path, monkeypatch):
    monkeypatch.setenv("SPINBOSON_MEMORY_BUDGET", "2048")
    path = write_ini(tmp_path, "[propagation]\nmemory_budget = 4096\n")
    assert get_numerics_settings(load_config(path)).memory_budget == 2048
    assert get_numerics_settings().memory_budget == 2048


def test_default_numerics():
    numerics = get_numerics_settings()
    assert numerics == NumericsSettings()
    assert numerics.memory_budget == 1 << 30


def test_catalog_contents():
    names = [name for name, _ in list_presets()]
    for name in ("a-wc4", "a-wc10-offdiag", "b-wc3-omega52", "b-wc25-gamma52", "all-densities", "cd", "cd-offdiag",
                 "dephasing"):
        assert name in names
    assert all(provenance for _, provenance in list_presets())
    assert get_preset("all-densities").version == PRESET_CATALOG_VERSION


def test_unknown_preset():
    with pytest.raises(ConfigError):
        get_preset("nonexistent")


def test_presets_are_immutable():
    with pytest.raises(dataclasses.FrozenInstanceError):
        get_preset("a-wc4").delta_t = 0.2


def test_preset_overrides():
    preset = get_preset("a-wc4").with_overrides({"omega_c": "4.3", "steps": "50", "densities": "A_F",
                                                 "initial": "superposition"})
    assert preset.params.omega_c == 4.3
    assert preset.n_steps == 50
    assert [str(d) for d in preset.densities] == ["A_F"]
    assert preset.scale_label == "epsilon"
    assert get_preset("a-wc4").n_steps == 400


def test_direct_eta_disables_calibration():
    preset = get_preset("a-wc4").with_overrides({"eta": "0.01"})
    assert preset.eta_prime is None
    assert preset.resolve_params(preset.densities[0]).eta == 0.01


@pytest.mark.parametrize("overrides", [{"colour": "red"}, {"steps": "many"}, {"initial": "mixed"},
                                       {"densities": "E_I"}, {"densities": ""}])
def test_bad_preset_overrides(overrides):
    with pytest.raises(ConfigError):
        get_preset("a-wc4").with_overrides(overrides)


def test_held_damping_preset():
    preset = get_preset("b-wc5-gamma52")
    params = preset.resolve_params(preset.densities[0])
    assert params.gamma == pytest.approx(52.0)
    assert params.iho_omega == 10.0


def test_bath_sign_and_memory_tail_from_file(tmp_path):
    path = write_ini(tmp_path, "[bath]\nim_w_sign = -1\n[propagation]\nmemory_tail = no\n"
                               "[quadrature]\nresonance_levels = 3\n")
    numerics = get_numerics_settings(load_config(path))
    assert numerics.im_w_sign == -1
    assert numerics.memory_tail is False
    assert numerics.quadrature.resonance_levels == 3
    assert get_numerics_settings().im_w_sign == 1


def test_bath_sign_must_be_unit():
    with pytest.raises(ConfigError):
        NumericsSettings(im_w_sign=2)


def test_sign_reaches_the_bath():
    preset = get_preset("a-wc4")
    bath = preset.bath(preset.densities[0], sign=-1)
    assert bath.im_w_sign == -1
    assert get_preset("a-wc4").propagation(memory_tail=False).memory_tail is False


@pytest.mark.parametrize("alias, target", [
    ("fig2-a", "a-wc4"), ("fig2-h", "a-wc10-offdiag"), ("fig3-a", "b-wc3-omega52"),
    ("fig3-caption-d", "b-wc25-gamma52"), ("figB-text", "b-wc3-omega52"), ("figB-caption", "b-wc3-gamma52"),
    ("fig4", "all-densities"), ("fig5", "cd"), ("fig5-offdiag", "cd-offdiag"),
])
def test_aliases_resolve_to_catalog_presets(alias, target):
    preset = get_preset(alias)
    assert preset.name == alias
    assert dataclasses.replace(preset, name=target) == PRESETS[target]


def test_aliases_are_listed():
    names = [name for name, _ in list_presets()]
    assert set(PRESET_ALIASES) <= set(names)
    assert all(target in PRESETS for target in PRESET_ALIASES.values())
