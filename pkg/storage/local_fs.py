"""Утилиты для работы с локальной файловой системой"""

import csv
import json
from pathlib import Path
from typing import Any, Iterable, List, Sequence

from errors import ConfigError
from utils import setup_logger


logger = setup_logger("LocalFS", "local_fs.log")


def read_json(filepath: str, field: str = "config") -> Any:
    """
    Читает JSON файл входных данных.

    Args:
        filepath: Путь к файлу
        field: Имя поля конфигурации для сообщения об ошибке

    Returns:
        Разобранный JSON

    Raises:
        ConfigError: файл не найден или не является JSON
    """
    path = Path(filepath)
    if not path.exists():
        raise ConfigError(field, "path to an existing JSON file", str(filepath))
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(field, "valid JSON", f"{filepath}: {e}")


def write_json(filepath: str, data: Any, indent: int = 2) -> Path:
    """
    Записывает данные в JSON файл.

    Args:
        filepath: Путь к файлу
        data: JSON-совместимые данные
        indent: Отступ для форматирования

    Returns:
        Путь к записанному файлу
    """
    path = Path(filepath)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=indent, ensure_ascii=False, allow_nan=True)
    logger.info(f"Файл записан: {filepath}")
    return path


def write_csv(filepath: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """
    Записывает таблицу в CSV.

    Args:
        filepath: Путь к файлу
        header: Заголовок
        rows: Строки значений

    Returns:
        Путь к записанному файлу
    """
    path = Path(filepath)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
            count += 1
    logger.info(f"CSV записан: {filepath} ({count} строк)")
    return path


def read_csv(filepath: str) -> List[List[str]]:
    """Читает CSV целиком (заголовок в первой строке)"""
    with open(Path(filepath), "r", encoding="utf-8", newline="") as f:
        return list(csv.reader(f))
