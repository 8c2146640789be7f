"""Иерархия исключений проекта и коды выхода CLI"""

from typing import Any, Dict, Optional


# Контракт кодов выхода
EXIT_OK = 0
EXIT_INVARIANT_FAILURE = 2
EXIT_CONFIG_ERROR = 3
EXIT_SOLVER_FAILURE = 4


class KernelsError(Exception):
    """Базовое исключение проекта"""

    exit_code = EXIT_INVARIANT_FAILURE


class ConfigError(KernelsError, ValueError):
    """Ошибка конфигурации: указывает поле, ожидаемое и полученное значение"""

    exit_code = EXIT_CONFIG_ERROR

    def __init__(self, field: str, expected: str, got: Any):
        self.field = field
        self.expected = expected
        self.got = got
        super().__init__(f"{field}: expected {expected}, got {got!r}")


class LatticeError(KernelsError, ValueError):
    """Недопустимый параметр γ или вычисление в сингулярной точке"""


class QuadratureError(KernelsError):
    """Сингулярный интеграл в узлах или вырожденная матрица Грама"""


class JetError(KernelsError, ValueError):
    """Нарушение структуры метрической струи (схема, блочная форма, минимальность)"""


class SolverError(KernelsError):
    """Однородный решатель не нашёл решения в пространстве атомов"""

    exit_code = EXIT_SOLVER_FAILURE

    def __init__(self, message: str, remainder: Optional[Any] = None):
        self.remainder = remainder
        super().__init__(message)


class PipelineError(KernelsError):
    """Нарушение инвариантов конвейера поправок (рост градуировки, затухание остатка)"""

    exit_code = EXIT_SOLVER_FAILURE

    def __init__(self, message: str, piece: Optional[Any] = None):
        self.piece = piece
        super().__init__(message)


class CalibrationError(KernelsError):
    """Калибровка константы не уложилась в допуск"""

    def __init__(self, message: str, report: Optional[Dict[str, Any]] = None):
        self.report = report or {}
        super().__init__(message)


class FitError(KernelsError):
    """Плохо обусловленная подгонка у границы y = 0"""
