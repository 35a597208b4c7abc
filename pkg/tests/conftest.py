import pytest

from spinboson.bath import ThermalBathSpec
from spinboson.spectral import ModelParams, SpectralDensityId
from utils.presets import get_preset

A_I = SpectralDensityId.parse("A_I")
A_F = SpectralDensityId.parse("A_F")


@pytest.fixture(autouse=True)
def _clean_environment(monkeypatch):
    """测试不受外部环境变量影响"""
    monkeypatch.delenv("SPINBOSON_MEMORY_BUDGET", raising=False)
    monkeypatch.delenv("SPINBOSON_LOG_LEVEL", raising=False)


@pytest.fixture
def ohmic_preset():
    return get_preset("a-wc4")


@pytest.fixture
def ohmic_bath(ohmic_preset):
    """a-wc4 的 J_A^I 热库（已标定）"""
    return ohmic_preset.bath(A_I)


@pytest.fixture
def finite_bath():
    return ThermalBathSpec(A_F, ModelParams(eta=0.004, omega_c=4.0), temperature=300.0)
