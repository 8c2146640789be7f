"""Модуль 5: Metric Model

Струи метрики g = dy² + h_y в геодезических координатах Ферми и действие
разности D - D_g на суммы атомов.

Все гладкие коэффициенты являются тейлоровскими многочленами до полного порядка N
(по y и x вместе). Производные величины считаются точно в алгебре
многочленов: ½·log det h рядом по A = h - δ, обратная метрика рядом
Неймана Σ(-A)^k.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigError, JetError, LatticeError
from kernels.homogeneous_algebra import (
    AlgebraContext,
    AtomSum,
    GradedAtom,
    Y_WEIGHT,
    differentiate,
    evaluate_many,
    lattice,
    multi_indices,
    multiply,
    numeric_copy,
    truncate_grades,
    validate_gamma,
)
from utils import make_rng, setup_logger


JET_TYPES = ("flat", "jet", "pe_locally_flat")
SYMMETRY_TOL = 1e-12
COEFF_ZERO_TOL = 1e-14

CoeffKey = Tuple[int, Tuple[int, ...]]
PolyMatrix = List[List[AtomSum]]


@dataclass(frozen=True)
class JetDiagnostics:
    """Структурные свойства струи"""

    minimal: bool
    umbilic: bool
    pe_flat_order: int
    det_normalized: bool
    perturbation_order: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "minimal": self.minimal,
            "umbilic": self.umbilic,
            "pe_flat_order": self.pe_flat_order,
            "det_normalized": self.det_normalized,
            "perturbation_order": self.perturbation_order
        }


class MetricJet:
    """
    Тейлоровская струя h_y(x) = Σ h_{(j,β)}·y^j·x^β до полного порядка N.

    Коэффициенты неизменяемы; производные струи (log det, обратная метрика,
    e) вычисляются лениво и кешируются.
    """

    def __init__(self, n: int, gamma: float, order: int, h_coeffs: Mapping[CoeffKey, Any], kind: str = "jet"):
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise JetError(f"n must be a positive integer, got {n!r}")
        if not isinstance(order, (int, np.integer)) or order < 1:
            raise JetError(f"jet order must be a positive integer, got {order!r}")
        self.n = int(n)
        self.gamma = validate_gamma(gamma)
        self.order = int(order)
        self.kind = kind

        coeffs: Dict[CoeffKey, np.ndarray] = {}
        for (j, beta), matrix in h_coeffs.items():
            beta = tuple(int(b) for b in beta)
            matrix = np.array(matrix, dtype=float)
            if len(beta) != self.n or j < 0 or any(b < 0 for b in beta):
                raise JetError(f"coefficient key ({j}, {beta}) is not a valid (y-power, multi-index) pair")
            if matrix.shape != (self.n, self.n):
                raise JetError(
                    f"coefficient ({j}, {beta}) must be a {self.n}x{self.n} block of h_y "
                    f"(g = dy² + h_y has no mixed y-x entries), got shape {matrix.shape}"
                )
            if not np.all(np.isfinite(matrix)):
                raise JetError(f"coefficient ({j}, {beta}) is not finite")
            if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_TOL:
                raise JetError(f"coefficient ({j}, {beta}) is not symmetric")
            if j + sum(beta) > self.order:
                raise JetError(f"coefficient ({j}, {beta}) exceeds jet order {self.order}")
            if np.max(np.abs(matrix)) <= COEFF_ZERO_TOL and (j, beta) != (0, (0,) * self.n):
                continue
            matrix.setflags(write=False)
            coeffs[(int(j), beta)] = matrix

        origin = (0, (0,) * self.n)
        if origin not in coeffs or np.max(np.abs(coeffs[origin] - np.eye(self.n))) > SYMMETRY_TOL:
            raise JetError("h_{(0,0)} must be the identity (normalized coordinates at the origin)")
        self.h_coeffs = coeffs
        self.ctx = AlgebraContext(self.n, self.gamma)

    def __repr__(self) -> str:
        return f"MetricJet(kind={self.kind}, n={self.n}, γ={self.gamma}, N={self.order}, terms={len(self.h_coeffs)})"

    # ----- многочленные матрицы -----

    def _truncate(self, u: AtomSum, order: Optional[int] = None) -> AtomSum:
        return truncate_grades(u, self.order if order is None else order)

    @cached_property
    def perturbation(self) -> PolyMatrix:
        """A = h - δ как матрица многочленов"""
        entries = [[[] for _ in range(self.n)] for _ in range(self.n)]
        for (j, beta), matrix in self.h_coeffs.items():
            block = matrix - np.eye(self.n) if (j, sum(beta)) == (0, 0) else matrix
            for p in range(self.n):
                for q in range(self.n):
                    if block[p, q] != 0.0:
                        entries[p][q].append(GradedAtom(float(block[p, q]), lattice(j), beta, lattice(0)))
        return [[AtomSum(self.ctx, entries[p][q]) for q in range(self.n)] for p in range(self.n)]

    def _matmul(self, left: PolyMatrix, right: PolyMatrix) -> PolyMatrix:
        out = []
        for p in range(self.n):
            row = []
            for q in range(self.n):
                total = AtomSum.zero(self.ctx)
                for k in range(self.n):
                    if left[p][k].is_empty or right[k][q].is_empty:
                        continue
                    total = total + multiply(left[p][k], right[k][q])
                row.append(self._truncate(total))
            out.append(row)
        return out

    @cached_property
    def _powers(self) -> List[PolyMatrix]:
        """A, A², … пока степень не превышает N"""
        powers = []
        current = self.perturbation
        while any(not entry.is_empty for row in current for entry in row):
            powers.append(current)
            if len(powers) >= self.order:
                break
            current = self._matmul(current, self.perturbation)
        return powers

    @cached_property
    def log_sqrt_det(self) -> AtomSum:
        """L = ½·log det h = ½·Σ (-1)^{k+1} tr(A^k)/k"""
        total = AtomSum.zero(self.ctx)
        for k, power in enumerate(self._powers, start=1):
            trace = AtomSum.zero(self.ctx)
            for p in range(self.n):
                trace = trace + power[p][p]
            total = total + trace.scale(0.5 * (-1) ** (k + 1) / k)
        return total

    @cached_property
    def sqrt_det_jet(self) -> AtomSum:
        """√det h = exp(L) до порядка N"""
        total = AtomSum.monomial(self.ctx, 1.0)
        term = AtomSum.monomial(self.ctx, 1.0)
        for k in range(1, self.order + 1):
            term = self._truncate(multiply(term, self.log_sqrt_det)).scale(1.0 / k)
            if term.is_empty:
                break
            total = total + term
        return total

    @cached_property
    def inverse_perturbation(self) -> PolyMatrix:
        """g^{ij} - δ^{ij} = Σ_{k≥1} (-A)^k"""
        out = [[AtomSum.zero(self.ctx) for _ in range(self.n)] for _ in range(self.n)]
        for k, power in enumerate(self._powers, start=1):
            sign = (-1) ** k
            for p in range(self.n):
                for q in range(self.n):
                    if not power[p][q].is_empty:
                        out[p][q] = out[p][q] + power[p][q].scale(sign)
        return out

    @cached_property
    def log_gradient(self) -> List[AtomSum]:
        """[∂_y L, ∂_1 L, …, ∂_n L] = ∂_p√g/√g"""
        L = self.log_sqrt_det
        return [differentiate(L, "y")] + [differentiate(L, i) for i in range(self.n)]

    @cached_property
    def e_jet(self) -> AtomSum:
        return self.log_gradient[0].scale((self.n - 2.0 * self.gamma) / 2.0)

    def evaluate_h(self, y: float, x: Sequence[float]) -> np.ndarray:
        """Матрица h_y(x) в точке (сумма тейлоровских членов)"""
        x = np.asarray(x, dtype=float)
        out = np.zeros((self.n, self.n))
        for (j, beta), matrix in self.h_coeffs.items():
            out += matrix * (y ** j) * float(np.prod(x ** np.array(beta)))
        return out

    def evaluate_fields(self, y, x) -> Dict[str, np.ndarray]:
        """
        Поля метрики в точках: многочлен h считается точной метрикой.

        Args:
            y: Массив формы (P,)
            x: Массив формы (P, n)

        Returns:
            {"sqrt_g": (P,), "ginv": (P,n,n), "dginv": (n+1,P,n,n), "dlog": (n+1,P)}
            где индекс 0 в dginv/dlog означает производную по y
        """
        y = np.atleast_1d(np.asarray(y, dtype=float))
        x = np.asarray(x, dtype=float).reshape(len(y), self.n)
        h = np.zeros((len(y), self.n, self.n))
        dh = np.zeros((self.n + 1, len(y), self.n, self.n))
        for (j, beta), matrix in self.h_coeffs.items():
            x_part = np.prod(x ** np.array(beta), axis=1)
            h += (y ** j * x_part)[:, None, None] * matrix
            if j:
                dh[0] += (j * y ** (j - 1) * x_part)[:, None, None] * matrix
            for i, b in enumerate(beta):
                if b:
                    lowered = list(beta)
                    lowered[i] -= 1
                    partial = b * np.prod(x ** np.array(lowered), axis=1)
                    dh[i + 1] += (y ** j * partial)[:, None, None] * matrix
        sign, logdet = np.linalg.slogdet(h)
        if np.any(sign <= 0):
            raise JetError("h_y is not positive definite at some evaluation points")
        ginv = np.linalg.inv(h)
        dginv = -np.einsum("pab,kpbc,pcd->kpad", ginv, dh, ginv)
        dlog = 0.5 * np.einsum("pab,kpba->kp", ginv, dh)
        return {"sqrt_g": np.exp(0.5 * logdet), "ginv": ginv, "dginv": dginv, "dlog": dlog}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "gamma": self.gamma,
            "order": self.order,
            "type": self.kind,
            "coefficients": [
                {"y_pow": j, "beta": list(beta), "matrix": matrix.tolist()}
                for (j, beta), matrix in sorted(self.h_coeffs.items())
            ]
        }


# =========================================
# Операции
# =========================================

def perturbation_order(jet: MetricJet) -> int:
    """Наименьший полный порядок j + |β| ненулевого элемента h - δ (N + 1 для плоской струи)"""
    orders = [j + sum(beta) for (j, beta) in jet.h_coeffs if (j, sum(beta)) != (0, 0)]
    return min(orders) if orders else jet.order + 1


def validate(jet: MetricJet) -> JetDiagnostics:
    """
    Диагностика струи; неминимальная струя (tr h_{(1,0)} ≠ 0) считается ошибкой.

    Args:
        jet: Струя метрики

    Returns:
        JetDiagnostics
    """
    first = jet.h_coeffs.get((1, (0,) * jet.n))
    if first is not None and abs(np.trace(first)) > SYMMETRY_TOL:
        raise JetError(f"jet is not minimal: trace h_(1,0) = {np.trace(first):.3e} (mean curvature must vanish)")
    # H_g ≡ 0 на всей карте: слой y⁰ у ∂_y L пуст
    mean_curvature = [a for a in jet.log_gradient[0].atoms if a.y_exp.is_zero and abs(a.coeff) > SYMMETRY_TOL]
    if mean_curvature:
        raise JetError(
            f"jet is not minimal: the mean curvature has {len(mean_curvature)} nonzero Taylor terms along y = 0"
        )

    y_orders = [j for (j, beta) in jet.h_coeffs if (j, sum(beta)) != (0, 0)]
    # √det h ≡ 1 вдоль y = 0: в слое y⁰ остаётся только константа
    boundary_density = [a for a in jet.sqrt_det_jet.atoms if a.y_exp.is_zero and any(a.x_multi)]
    return JetDiagnostics(
        minimal=True,
        umbilic=first is None,
        pe_flat_order=min(y_orders) if y_orders else jet.order,
        det_normalized=not boundary_density,
        perturbation_order=perturbation_order(jet)
    )


def e_coefficient(jet: MetricJet) -> AtomSum:
    """
    e = ((n-2γ)/2)·∂_y√g/√g, так что E_g u = e·y^{-2γ}·u.

    Args:
        jet: Минимальная струя

    Returns:
        Многочлен e без слоя y⁰
    """
    validate(jet)
    return jet.e_jet


def apply_E(jet: MetricJet, u: AtomSum) -> AtomSum:
    """E_g u = e·y^{-2γ}·u"""
    return multiply(jet.e_jet, numeric_copy(u)).shift(y=lattice(0, -1))


def deficit_threshold(jet: MetricJet, u: AtomSum) -> float:
    """Максимальная градуировка, до которой (D - D_g)u точна: deg_min(u) - 1 - 2γ + N"""
    lowest = u.homogeneities()[0].value(jet.gamma)
    return lowest - 1.0 - 2.0 * jet.gamma + jet.order


def deficit_apply(jet: MetricJet, u: AtomSum, truncation_degree: Optional[float] = None) -> AtomSum:
    """
    (D - D_g)u = (∂_pL)·y^{1-2γ}g^{pq}∂_q u + y^{1-2γ}∂_i((g^{ij}-δ^{ij})∂_j u) - e·y^{-2γ}u.

    Args:
        jet: Струя метрики
        u: Сумма атомов
        truncation_degree: Верхняя градуировка результата (по умолчанию предел точности струи)

    Returns:
        Сумма атомов, точная на градуировках ≤ truncation_degree
    """
    u = numeric_copy(u)
    if u.is_empty:
        return u
    limit = deficit_threshold(jet, u)
    if truncation_degree is None:
        truncation_degree = limit
    elif truncation_degree > limit + 1e-12:
        raise JetError(
            f"truncation degree {truncation_degree:.6g} exceeds what a jet of order {jet.order} "
            f"determines for this input ({limit:.6g})"
        )

    n = jet.n
    grad_u = [differentiate(u, "y")] + [differentiate(u, i) for i in range(n)]
    inverse = jet.inverse_perturbation
    dL = jet.log_gradient

    # (g^{ij} - δ^{ij})∂_j u
    corrected = []
    for i in range(n):
        total = AtomSum.zero(u.ctx)
        for j in range(n):
            if not inverse[i][j].is_empty:
                total = total + multiply(inverse[i][j], grad_u[j + 1])
        corrected.append(total)

    flux = multiply(dL[0], grad_u[0]) if not dL[0].is_empty else AtomSum.zero(u.ctx)
    for i in range(n):
        if not dL[i + 1].is_empty:
            flux = flux + multiply(dL[i + 1], grad_u[i + 1] + corrected[i])
    divergence = AtomSum.zero(u.ctx)
    for i in range(n):
        if not corrected[i].is_empty:
            divergence = divergence + differentiate(corrected[i], i)

    result = (flux + divergence).shift(y=Y_WEIGHT) - apply_E(jet, u)
    return truncate_grades(result, truncation_degree)


def conformal_rescale(jet: MetricJet, c: float) -> MetricJet:
    """
    Постоянный конформный множитель: ĝ = c²g, ŷ = c·y, x̂ = c·x, ĥ_{(j,β)} = h_{(j,β)}·c^{-j-|β|}.
    """
    if not c > 0:
        raise JetError(f"conformal factor must be positive, got {c!r}")
    coeffs = {(j, beta): matrix * c ** (-(j + sum(beta))) for (j, beta), matrix in jet.h_coeffs.items()}
    return MetricJet(jet.n, jet.gamma, jet.order, coeffs, kind=jet.kind)


# =========================================
# Конструкторы
# =========================================

def flat_jet(n: int, gamma: float, order: int = 4) -> MetricJet:
    """h ≡ δ (модель гиперболического пространства)"""
    return MetricJet(n, gamma, order, {(0, (0,) * n): np.eye(n)}, kind="flat")


def jet_from_coefficients(
    n: int,
    gamma: float,
    order: int,
    perturbation: Mapping[CoeffKey, Any],
    kind: str = "jet"
) -> MetricJet:
    """
    Струя δ + Σ A_{(j,β)}y^jx^β по заданным возмущениям.

    Args:
        perturbation: {(j, β): матрица A_{(j,β)}}; ключ (0, 0) недопустим
    """
    coeffs: Dict[CoeffKey, Any] = {(0, (0,) * n): np.eye(n)}
    for (j, beta), matrix in perturbation.items():
        key = (int(j), tuple(beta))
        if key == (0, (0,) * n):
            raise JetError("perturbation must vanish at the origin")
        coeffs[key] = np.asarray(matrix, dtype=float)
    return MetricJet(n, gamma, order, coeffs, kind=kind)


def _random_symmetric(rng: np.random.Generator, n: int, trace_free: bool) -> np.ndarray:
    m = rng.normal(size=(n, n))
    m = 0.5 * (m + m.T)
    if trace_free:
        m -= np.trace(m) / n * np.eye(n)
    return m


def pe_locally_flat_jet(n: int, gamma: float, order: Optional[int] = None, seed: Optional[int] = None,
                        amplitude: float = 0.1) -> MetricJet:
    """
    Струя δ + O(yⁿ), чётная по y: младший слой y^k (k = pe_leading_order(n))
    бесследовый симметричный, старшие чётные слои содержат общие симметричные
    члены с x-зависимостью.

    Нечётный слой дал бы дефицит, чётный по y, а такие дефициты не решаются
    конечной суммой атомов.

    Args:
        n: Размерность границы
        gamma: γ
        order: Порядок струи (по умолчанию n + 2)
        seed: Seed генератора
        amplitude: Масштаб возмущения
    """
    order = n + 2 if order is None else order
    leading = pe_leading_order(n)
    rng = make_rng(seed)
    perturbation: Dict[CoeffKey, np.ndarray] = {}
    if leading <= order:
        perturbation[(leading, (0,) * n)] = amplitude * _random_symmetric(rng, n, trace_free=True)
    for j in range(leading, order + 1, 2):
        for total in range(0, order - j + 1):
            if (j, total) == (leading, 0):
                continue
            for beta in multi_indices(n, total):
                perturbation[(j, beta)] = amplitude * _random_symmetric(rng, n, trace_free=False)
    return jet_from_coefficients(n, gamma, order, perturbation, kind="pe_locally_flat")


def pe_leading_order(n: int) -> int:
    """Показатель младшего слоя чётной струи δ + O(yⁿ): n, округлённое вверх до чётного"""
    return n + n % 2


def _require(data: Mapping[str, Any], key: str, path: str, expected: str):
    if key not in data:
        raise ConfigError(f"{path}{key}", expected, None)
    return data[key]


def jet_from_json(data: Mapping[str, Any]) -> MetricJet:
    """
    Струя из JSON-описания {n, gamma, order, type, coefficients: [{y_pow, beta, matrix}]}.

    Ошибки схемы дают ConfigError с путём к полю, структурные ошибки дают JetError.
    """
    if not isinstance(data, Mapping):
        raise ConfigError("metric", "object", type(data).__name__)
    n = _require(data, "n", "metric.", "positive integer")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ConfigError("metric.n", "positive integer", n)
    gamma = _require(data, "gamma", "metric.", "number in (0, 1) other than 1/2")
    if not isinstance(gamma, (int, float)) or isinstance(gamma, bool):
        raise ConfigError("metric.gamma", "number in (0, 1) other than 1/2", gamma)
    try:
        validate_gamma(gamma)
    except LatticeError:
        raise ConfigError("metric.gamma", "number in (0, 1) other than 1/2", gamma)
    order = data.get("order", 4)
    if not isinstance(order, int) or isinstance(order, bool) or order < 1:
        raise ConfigError("metric.order", "positive integer", order)
    kind = data.get("type", "jet")
    if kind not in JET_TYPES:
        raise ConfigError("metric.type", " | ".join(JET_TYPES), kind)

    if kind == "flat":
        return flat_jet(n, gamma, order)
    if kind == "pe_locally_flat" and "coefficients" not in data:
        return pe_locally_flat_jet(n, gamma, order, seed=data.get("seed"))

    raw = data.get("coefficients", [])
    if not isinstance(raw, list):
        raise ConfigError("metric.coefficients", "list", type(raw).__name__)
    perturbation: Dict[CoeffKey, np.ndarray] = {}
    for index, item in enumerate(raw):
        path = f"metric.coefficients[{index}]."
        if not isinstance(item, Mapping):
            raise ConfigError(f"metric.coefficients[{index}]", "object", item)
        y_pow = _require(item, "y_pow", path, "non-negative integer")
        if not isinstance(y_pow, int) or isinstance(y_pow, bool) or y_pow < 0:
            raise ConfigError(path + "y_pow", "non-negative integer", y_pow)
        beta = _require(item, "beta", path, f"list of {n} non-negative integers")
        if (not isinstance(beta, list) or len(beta) != n
                or any(not isinstance(b, int) or isinstance(b, bool) or b < 0 for b in beta)):
            raise ConfigError(path + "beta", f"list of {n} non-negative integers", beta)
        matrix = _require(item, "matrix", path, f"{n}x{n} symmetric matrix")
        try:
            block = np.array(matrix, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(path + "matrix", f"{n}x{n} symmetric matrix", matrix)
        if block.shape != (n, n) or np.max(np.abs(block - block.T)) > SYMMETRY_TOL:
            raise ConfigError(path + "matrix", f"{n}x{n} symmetric matrix", matrix)
        if y_pow == 0 and not any(beta):
            # h_(0,0) фиксирован: допускается только единичная матрица (вывод to_dict)
            if np.max(np.abs(block - np.eye(n))) > SYMMETRY_TOL:
                raise ConfigError(path + "matrix", "identity at the origin", matrix)
            continue
        perturbation[(y_pow, tuple(beta))] = block

    jet = jet_from_coefficients(n, gamma, order, perturbation, kind=kind)
    if kind == "pe_locally_flat":
        diagnostics = validate(jet)
        leading = jet.h_coeffs.get((n, (0,) * n))
        if diagnostics.pe_flat_order < n:
            raise JetError(f"pe_locally_flat jet must be δ + O(y^{n}), found order {diagnostics.pe_flat_order}")
        if leading is not None and abs(np.trace(leading)) > SYMMETRY_TOL:
            raise JetError("leading y^n layer of a pe_locally_flat jet must be trace-free")
    return jet


def apply_curved_D_numeric(jet: MetricJet, u: AtomSum, y, x) -> np.ndarray:
    """
    D_g u в точках: производные u точные, многочлен струи h берётся как точная метрика.

    D_g u = -y^{1-2γ}[g^{pq}∂_p∂_q u + (∂_p g^{pq})∂_q u + (∂_pL)g^{pq}∂_q u]
            - (1-2γ)y^{-2γ}∂_y u + e·y^{-2γ}u
    """
    u = numeric_copy(u)
    n = jet.n
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x = np.asarray(x, dtype=float).reshape(len(y), n)
    fields = jet.evaluate_fields(y, x)
    ginv, dginv, dlog = fields["ginv"], fields["dginv"], fields["dlog"]

    first = [differentiate(u, "y")] + [differentiate(u, i) for i in range(n)]
    d = [evaluate_many(f, y, x) for f in first]
    d_yy = evaluate_many(differentiate(first[0], "y"), y, x)

    bracket = d_yy + dlog[0] * d[0]
    for i in range(n):
        for j in range(n):
            bracket += ginv[:, i, j] * evaluate_many(differentiate(first[j + 1], i), y, x)
            # ∂_j g^{ji} и (∂_j L)g^{ji}
            bracket += (dginv[j + 1][:, j, i] + dlog[j + 1] * ginv[:, j, i]) * d[i + 1]

    two_gamma = 2.0 * jet.gamma
    e = (n - two_gamma) / 2.0 * dlog[0]
    values = evaluate_many(u, y, x)
    return -y ** (1.0 - two_gamma) * bracket - (1.0 - two_gamma) * y ** (-two_gamma) * d[0] + e * y ** (-two_gamma) * values


def e_finite_difference(jet: MetricJet, y: float, x: Sequence[float], step: float = 1e-4) -> float:
    """Оракул: ((n-2γ)/2)·∂_y log√det h_y(x) центральной разностью"""
    def log_sqrt_det(yy: float) -> float:
        sign, logdet = np.linalg.slogdet(jet.evaluate_h(yy, x))
        if sign <= 0:
            raise JetError("h_y is not positive definite at the sample point")
        return 0.5 * logdet

    derivative = (log_sqrt_det(y + step) - log_sqrt_det(y - step)) / (2.0 * step)
    return (jet.n - 2.0 * jet.gamma) / 2.0 * derivative


def run_validate(jet: MetricJet) -> Dict[str, Any]:
    """Точка входа: диагностика струи в виде словаря"""
    logger = setup_logger("MetricModel", "metric.log")
    diagnostics = validate(jet)
    logger.info(f"{jet!r}: {diagnostics.to_dict()}")
    return diagnostics.to_dict()
