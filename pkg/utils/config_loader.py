import configparser
import io
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

from spinboson.bath import HZ_TO_ANGULAR, QuadratureSettings
from spinboson.specfun import IM_W_SIGN
from spinboson.errors import ConfigError
from spinboson.quapi import CONVERGENCE_THRESHOLD, DEFAULT_MEMORY_BUDGET, MEMORY_BUDGET_ENV
from utils.presets import OVERRIDE_KEYS

LOG_LEVEL_ENV = "SPINBOSON_LOG_LEVEL"
COMMANDS = ("sdf", "dynamics", "calibrate", "oracle", "sweep")

# 各节允许的键
_NUMERIC_KEYS = {
    "quadrature": {"epsabs": float, "epsrel": float, "limit": int,
                   "resonance_window": float, "tail_tolerance": float, "resonance_levels": int},
    "bath": {"coverage": float, "finite_band_edge": float, "hz_to_angular": float, "im_w_sign": int},
    "propagation": {"memory_budget": int, "convergence_threshold": float, "memory_tail": bool},
    "logging": {"level": str},
}
_RUN_KEYS = ("command", "preset", "output_path", "deterministic")


def _parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # 键区分大小写
    return parser


def load_config(config_path: str = "config.ini") -> configparser.ConfigParser:
    """
    加载配置文件，并用环境变量覆盖内存预算与日志级别

    Args:
        config_path: 配置文件路径

    Returns:
        configparser.ConfigParser: 配置数据
    """
    if not os.path.exists(config_path):
        raise FileNotFoundError(f"配置文件 {config_path} 不存在")

    parser = _parser()
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except configparser.Error as e:
        raise ConfigError(f"无法解析配置文件 {config_path}: {e}") from e
    _check_sections(parser)
    return apply_environment(parser)


def apply_environment(parser: configparser.ConfigParser) -> configparser.ConfigParser:
    """环境变量优先于配置文件"""
    overlay = {(MEMORY_BUDGET_ENV, "propagation", "memory_budget"),
               (LOG_LEVEL_ENV, "logging", "level")}
    for env_key, section, key in sorted(overlay):
        value = os.environ.get(env_key)
        if value:
            if not parser.has_section(section):
                parser.add_section(section)
            parser.set(section, key, value)
    return parser


def _check_sections(parser: configparser.ConfigParser) -> None:
    known = set(_NUMERIC_KEYS) | {"run", "overrides"}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"未知配置节 [{section}]")
        if section in _NUMERIC_KEYS:
            unknown = set(parser[section]) - set(_NUMERIC_KEYS[section])
            if unknown:
                raise ConfigError(f"配置节 [{section}] 含未知键: {', '.join(sorted(unknown))}")


@dataclass(frozen=True)
class NumericsSettings:
    """数值参数，默认值与各模块的默认值一致"""
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)
    coverage: float = 1.0
    finite_band_edge: float = 1.0
    hz_to_angular: float = HZ_TO_ANGULAR
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    convergence_threshold: float = CONVERGENCE_THRESHOLD
    memory_tail: bool = True
    im_w_sign: int = IM_W_SIGN  # Im W 的分支符号，只有 +1 保证 Θ > 0
    log_level: Optional[str] = None

    def __post_init__(self):
        if self.im_w_sign not in (1, -1):
            raise ConfigError(f"[bath] im_w_sign 必须是 1 或 -1，得到 {self.im_w_sign}")


def get_numerics_settings(config: Optional[configparser.ConfigParser] = None) -> NumericsSettings:
    """
    获取数值设置

    Args:
        config: 配置数据，为 None 时只读取环境变量

    Returns:
        NumericsSettings: 数值设置
    """
    if config is None:
        config = apply_environment(_parser())
    _check_sections(config)
    values: Dict[str, Dict[str, object]] = {}
    for section, keys in _NUMERIC_KEYS.items():
        values[section] = {}
        if not config.has_section(section):
            continue
        for key, cast in keys.items():
            if key in config[section]:
                raw = config[section][key]
                try:
                    if cast is bool:
                        values[section][key] = _parse_bool(raw)
                    else:
                        values[section][key] = cast(float(raw)) if cast is int else cast(raw)
                except ValueError:
                    raise ConfigError(f"[{section}] {key}={raw!r} 不是有效数值") from None
    bath = values["bath"]
    propagation = values["propagation"]
    return NumericsSettings(
        quadrature=QuadratureSettings(**values["quadrature"]),
        coverage=bath.get("coverage", 1.0),
        finite_band_edge=bath.get("finite_band_edge", 1.0),
        hz_to_angular=bath.get("hz_to_angular", HZ_TO_ANGULAR),
        memory_budget=propagation.get("memory_budget", DEFAULT_MEMORY_BUDGET),
        convergence_threshold=propagation.get("convergence_threshold", CONVERGENCE_THRESHOLD),
        memory_tail=propagation.get("memory_tail", True),
        im_w_sign=bath.get("im_w_sign", IM_W_SIGN),
        log_level=values["logging"].get("level"),
    )


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"无法解析布尔值 {raw!r}")


@dataclass(frozen=True)
class RunConfig:
    """一次命令调用的完整描述，可序列化为 [run] 与 [overrides] 两节"""
    command: str
    preset: Optional[str] = None
    overrides: Dict[str, str] = field(default_factory=dict)
    output_path: Optional[str] = None
    deterministic: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"未知命令 {self.command}，可用命令: {', '.join(COMMANDS)}")
        for key, value in self.overrides.items():
            if key not in OVERRIDE_KEYS:
                raise ConfigError(f"未知覆盖项 {key}")
            if not isinstance(value, str):
                raise ConfigError(f"覆盖项 {key} 的值必须是字符串")

    def to_text(self) -> str:
        parser = _parser()
        parser["run"] = {"command": self.command, "deterministic": "true" if self.deterministic else "false"}
        if self.preset is not None:
            parser["run"]["preset"] = self.preset
        if self.output_path is not None:
            parser["run"]["output_path"] = self.output_path
        parser["overrides"] = dict(self.overrides)
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = _parser()
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"无法解析运行配置: {e}") from e
        return cls.from_parser(parser)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser) -> "RunConfig":
        _check_sections(parser)
        if not parser.has_section("run"):
            raise ConfigError("运行配置缺少 [run] 节")
        run = parser["run"]
        unknown = set(run) - set(_RUN_KEYS)
        if unknown:
            raise ConfigError(f"[run] 含未知键: {', '.join(sorted(unknown))}")
        if "command" not in run:
            raise ConfigError("[run] 缺少 command")
        overrides = dict(parser["overrides"]) if parser.has_section("overrides") else {}
        return cls(command=run["command"], preset=run.get("preset"), overrides=overrides,
                   output_path=run.get("output_path"),
                   deterministic=_parse_bool(run.get("deterministic", "false")))

    def merged(self, overrides: Dict[str, str]) -> "RunConfig":
        """命令行覆盖项优先于文件中的覆盖项"""
        combined = dict(self.overrides)
        combined.update(overrides)
        return RunConfig(self.command, self.preset, combined, self.output_path, self.deterministic)
