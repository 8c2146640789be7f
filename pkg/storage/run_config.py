"""Конфигурация запуска: JSON-файл и флаги CLI в один проверенный RunConfig"""

from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional

from config import get_default_seed, get_output_dir
from errors import ConfigError, LatticeError
from kernels.flat_kernels import FracConfig
from kernels.homogeneous_algebra import validate_gamma
from kernels.metric_model import MetricJet, flat_jet, jet_from_json
from storage.local_fs import read_json


COMMANDS = ("constants", "harmonics", "solve-homogeneous", "expand", "fd-solve", "trace", "convolve", "verify")
KIND_CHOICES = ("poisson", "green", "boundary")
SECTOR_CHOICES = ("dirichlet", "neumann")

# Допуски по умолчанию совпадают с константами модулей
DEFAULT_TOLERANCES: Dict[str, float] = {
    "zero": 1e-10,
    "c_n3": 1e-10,
    "flux_rho": 1e-4,
    "trace": 0.02,
    "eigenvalue": 1e-6,
    "spectral": 1e-8,
    "decay_slack": 0.1,
    "convolution": 0.01,
    "covariance": 1e-12,
    "determinism": 1e-12
}

# Команды, которым нужны n и γ (явно или из файла метрики)
PHYSICS_COMMANDS = ("constants", "harmonics", "solve-homogeneous", "expand", "fd-solve", "trace", "convolve")

GAMMA_EXPECTED = "number in (0, 1); γ = 1/2 is excluded (logarithmic case)"


@dataclass(frozen=True)
class RunConfig:
    """Параметры одной команды CLI"""

    command: str
    n: Optional[int] = None
    gamma: Optional[float] = None
    order: Optional[int] = None
    kind: Optional[str] = None
    sector: Optional[str] = None
    max_degree: int = 4
    max_grade: Optional[float] = None
    cutoff_radius: float = 1.0
    metric: Optional[Dict[str, Any]] = None
    deficit: Optional[list] = None
    problem: Dict[str, Any] = field(default_factory=dict)
    samples: int = 10
    seed: int = 0
    output_dir: str = "output"
    quick: bool = False
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    def frac_config(self) -> FracConfig:
        if self.n is None or self.gamma is None:
            raise ConfigError("n/gamma", "explicit boundary dimension and γ", (self.n, self.gamma))
        return FracConfig(self.n, self.gamma)

    def jet(self) -> MetricJet:
        """Струя из конфигурации (плоская, если метрика не задана)"""
        if self.metric is None:
            return flat_jet(self.frac_config().n, self.gamma, order=max(4, (self.order or 0) + 2))
        return jet_from_json(self.metric)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "n": self.n,
            "gamma": self.gamma,
            "order": self.order,
            "kind": self.kind,
            "sector": self.sector,
            "max_degree": self.max_degree,
            "max_grade": self.max_grade,
            "cutoff_radius": self.cutoff_radius,
            "metric": self.metric,
            "problem": self.problem,
            "samples": self.samples,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "quick": self.quick,
            "tolerances": dict(self.tolerances)
        }


def _integer(value: Any, name: str, minimum: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(name, f"integer ≥ {minimum}", value)
    return value


def _number(value: Any, name: str, positive: bool = False) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(name, "number", value)
    if positive and not value > 0:
        raise ConfigError(name, "positive number", value)
    return float(value)


def _gamma(value: Any, name: str = "gamma") -> float:
    _number(value, name)
    try:
        return validate_gamma(float(value))
    except LatticeError:
        raise ConfigError(name, GAMMA_EXPECTED, value)


def parse_config(path: Optional[str] = None, flags: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Собирает RunConfig: значения из JSON-файла, поверх них флаги CLI (None пропускаются).

    Args:
        path: Путь к JSON-конфигурации
        flags: Флаги командной строки

    Returns:
        RunConfig

    Raises:
        ConfigError: с указанием поля, ожидаемого и полученного значения
    """
    raw: Dict[str, Any] = {}
    if path:
        loaded = read_json(path, "config")
        if not isinstance(loaded, Mapping):
            raise ConfigError("config", "JSON object", type(loaded).__name__)
        raw.update(loaded)
    for key, value in (flags or {}).items():
        if value is not None:
            raw[key] = value

    command = raw.get("command")
    if command not in COMMANDS:
        raise ConfigError("command", " | ".join(COMMANDS), command)

    metric = raw.get("metric")
    if isinstance(metric, str):
        metric = read_json(metric, "metric")
    if metric is not None and not isinstance(metric, Mapping):
        raise ConfigError("metric", "object or path to a JSON file", metric)

    n = raw.get("n")
    gamma = raw.get("gamma")
    if metric is not None:
        if n is not None and metric.get("n") is not None and n != metric.get("n"):
            raise ConfigError("n", f"value matching metric.n = {metric.get('n')}", n)
        if gamma is not None and metric.get("gamma") is not None and float(gamma) != float(metric.get("gamma")):
            raise ConfigError("gamma", f"value matching metric.gamma = {metric.get('gamma')}", gamma)
        n = metric.get("n", n)
        gamma = metric.get("gamma", gamma)

    if command in PHYSICS_COMMANDS:
        if n is None:
            raise ConfigError("n", "positive integer (no default)", None)
        if gamma is None:
            raise ConfigError("gamma", GAMMA_EXPECTED + " (no default)", None)
    if n is not None:
        n = _integer(n, "n", 1)
    if gamma is not None:
        gamma = _gamma(gamma)

    order = raw.get("order")
    if command == "expand" and order is None:
        raise ConfigError("order", "non-negative integer (no default)", None)
    if order is not None:
        order = _integer(order, "order", 0)

    kind = raw.get("kind")
    if command == "expand" and kind not in KIND_CHOICES:
        raise ConfigError("kind", " | ".join(KIND_CHOICES), kind)

    sector = raw.get("sector")
    if command in ("harmonics", "solve-homogeneous") and sector not in SECTOR_CHOICES:
        raise ConfigError("sector", " | ".join(SECTOR_CHOICES), sector)

    deficit = raw.get("deficit")
    if isinstance(deficit, str):
        deficit = read_json(deficit, "deficit")
    if command == "solve-homogeneous" and not isinstance(deficit, list):
        raise ConfigError("deficit", "list of atoms {coeff, y, beta, r}", deficit)

    problem = raw.get("problem", {})
    if isinstance(problem, str):
        problem = read_json(problem, "problem")
    if not isinstance(problem, Mapping):
        raise ConfigError("problem", "object", problem)

    tolerances = dict(DEFAULT_TOLERANCES)
    for key, value in dict(raw.get("tolerances", {})).items():
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"tolerances.{key}", " | ".join(DEFAULT_TOLERANCES), key)
        tolerances[key] = _number(value, f"tolerances.{key}", positive=True)

    max_grade = raw.get("max_grade")
    cfg = RunConfig(
        command=command,
        n=n,
        gamma=gamma,
        order=order,
        kind=kind,
        sector=sector,
        max_degree=_integer(raw.get("max_degree", 4), "max_degree", 0),
        max_grade=_number(max_grade, "max_grade") if max_grade is not None else None,
        cutoff_radius=_number(raw.get("cutoff_radius", 1.0), "cutoff_radius", positive=True),
        metric=dict(metric) if metric is not None else None,
        deficit=deficit,
        problem=dict(problem),
        samples=_integer(raw.get("samples", 10), "samples", 1),
        seed=_integer(raw.get("seed", get_default_seed()), "seed", 0),
        output_dir=str(raw.get("output_dir", get_output_dir())),
        quick=bool(raw.get("quick", False)),
        tolerances=tolerances
    )
    if cfg.metric is not None:
        # схема метрики проверяется сразу, до запуска вычислений
        cfg.jet()
    return cfg
