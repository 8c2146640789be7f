"""Экспорт результатов: разложения, поля сетки и константы в JSON/CSV"""

import math
from dataclasses import is_dataclass
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from kernels.degenerate_fd import HalfGridField
from kernels.expansion_engine import KernelExpansion
from kernels.flat_kernels import ConstantSet
from kernels.homogeneous_algebra import AtomSum, LatticeExponent
from storage.local_fs import write_csv, write_json


FORMATS = ("json", "csv")


def to_jsonable(value: Any) -> Any:
    """Приводит numpy-типы, показатели и суммы атомов к JSON-совместимому виду"""
    if isinstance(value, KernelExpansion):
        return value.to_json()
    if isinstance(value, ConstantSet):
        return to_jsonable(value.to_dict())
    if isinstance(value, AtomSum):
        return value.to_json()
    if isinstance(value, LatticeExponent):
        return value.to_dict()
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        # inf/nan как строки: строгий JSON их не допускает
        return value if math.isfinite(value) else str(value)
    if is_dataclass(value) and hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    return value


def field_header(n: int) -> List[str]:
    """Заголовок CSV поля: y, x1..xn, value"""
    return ["y"] + [f"x{i + 1}" for i in range(n)] + ["value"]


def export(obj: Any, path: str, fmt: str = "json") -> Dict[str, Path]:
    """
    Записывает разложение, поле или константы.

    Args:
        obj: KernelExpansion, HalfGridField, ConstantSet или JSON-совместимые данные
        path: Путь без расширения или с ним
        fmt: "json" или "csv" (csv только для HalfGridField)

    Returns:
        Словарь записанных файлов {"json": ..., "csv": ...}
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    stem = Path(path).with_suffix("")
    written: Dict[str, Path] = {}

    if isinstance(obj, HalfGridField):
        if fmt == "csv":
            written["csv"] = write_csv(str(stem) + ".csv", field_header(obj.grid.n), obj.rows())
        written["json"] = write_json(str(stem) + ".json", to_jsonable(obj.summary()))
        return written

    if fmt == "csv":
        raise ValueError("CSV export is defined for sampled fields only")
    written["json"] = write_json(str(stem) + ".json", to_jsonable(obj))
    return written


def load_expansion(data: Dict[str, Any]) -> KernelExpansion:
    """Обратная операция к экспорту разложения"""
    return KernelExpansion.from_json(data)
