import logging
import os
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

_ROOT = "spinboson"
_configured = False


def configure_logging(level: Optional[str] = None) -> None:
    """配置全局日志，输出到 stderr

    Args:
        level: 日志级别名称，为 None 时读取 SPINBOSON_LOG_LEVEL 环境变量
    """
    global _configured
    level = (level or os.environ.get("SPINBOSON_LOG_LEVEL") or "WARNING").upper()
    root = logging.getLogger(_ROOT)
    if not _configured:
        handler = RichHandler(console=Console(stderr=True), show_path=False, markup=False)
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        root.addHandler(handler)
        root.propagate = False
        _configured = True
    root.setLevel(level)


def get_logger(name: str) -> logging.Logger:
    """获取挂在 spinboson 根日志器下的日志器"""
    if not name.startswith(_ROOT):
        name = f"{_ROOT}.{name}"
    return logging.getLogger(name)
