"""Утилиты для логирования и мелкие вспомогательные функции"""

import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from config import get_log_level, get_log_to_file, get_log_dir, get_default_seed


LOG_FORMAT = '%(asctime)s | %(name)-18s | %(levelname)-7s | %(message)s'
LOG_DATEFMT = '%H:%M:%S'


def _stage_file_handler(log_file: str, formatter: logging.Formatter) -> logging.Handler:
    """Файл этапа в LOG_DIR; пишет всё, включая DEBUG по градуировкам"""
    log_path = Path(get_log_dir()) / log_file
    log_path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(log_path, encoding='utf-8')
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(formatter)
    return handler


def setup_logger(name: str, log_file: str = None) -> logging.Logger:
    """
    Логгер этапа вычислений (солвер, конвейер разложения, FD-проверка).

    Повторный вызов с тем же именем пересобирает обработчики, поэтому
    run_* функции могут вызывать его на каждом запуске.

    Args:
        name: Имя этапа, например "HomogeneousSolver"
        log_file: Файл этапа внутри LOG_DIR (пишется только при LOG_TO_FILE)

    Returns:
        Настроенный логгер
    """
    logger = logging.getLogger(name)
    logger.handlers.clear()
    logger.propagate = False

    level = getattr(logging, get_log_level().upper(), logging.INFO)
    logger.setLevel(logging.DEBUG if log_file and get_log_to_file() else level)
    formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT)

    # stdout занят JSON/CSV отчётами
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(level)
    console.setFormatter(formatter)
    logger.addHandler(console)

    if log_file and get_log_to_file():
        logger.addHandler(_stage_file_handler(log_file, formatter))

    return logger


@contextmanager
def log_duration(logger: logging.Logger, label: str):
    """
    Логирует длительность блока кода.

    Args:
        logger: Логгер этапа
        label: Подпись для сообщения
    """
    start = time.perf_counter()
    try:
        yield
    finally:
        logger.debug(f"{label}: {time.perf_counter() - start:.3f}с")


def make_rng(seed: int = None) -> np.random.Generator:
    """
    Создаёт генератор случайных чисел с воспроизводимым seed.

    Args:
        seed: Seed (по умолчанию из конфига)

    Returns:
        numpy Generator
    """
    return np.random.default_rng(get_default_seed() if seed is None else seed)


def relative_error(value: float, reference: float) -> float:
    """Относительная ошибка |value - reference| / |reference| (абсолютная при reference = 0)"""
    scale = abs(reference)
    if scale == 0.0:
        return abs(value)
    return abs(value - reference) / scale
