import os
import tempfile
from typing import Dict, Sequence

import pandas as pd

FLOAT_FORMAT = "%.17g"


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_csv(path: str, columns: Dict[str, Sequence[float]]) -> pd.DataFrame:
    """以 17 位有效数字写出 CSV（先写临时文件再改名）

    Args:
        path: 输出路径
        columns: 列名到数值序列的有序映射，第一列为自变量

    Returns:
        pd.DataFrame: 写出的数据
    """
    frame = pd.DataFrame({name: list(values) for name, values in columns.items()})
    _atomic_write(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))
    return frame


def write_text(path: str, text: str) -> None:
    """原子写出纯文本报告"""
    _atomic_write(path, text)
