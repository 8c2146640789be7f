"""Модуль 3: Hemisphere Spectral

Полиномиальные D-гармоники обоих секторов и взвешенная спектральная
структура на верхней полусфере S^n_+ со скалярным произведением
∫ y^{1-2γ}uv dσ.

Квадратура: подстановка v = y² превращает ∫ y^p F dσ в
½∫₀¹ v^{(p-1)/2}(1-v)^{(n-2)/2} F dv dω, то есть в правило Гаусса-Якоби
по v, умноженное на правило на экваториальной сфере S^{n-1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from errors import LatticeError, QuadratureError
from kernels.homogeneous_algebra import (
    AlgebraContext,
    AtomSum,
    LatticeExponent,
    differentiate,
    evaluate_many,
    lattice,
    multi_indices,
    numeric_copy,
    x_laplacian,
)
from kernels.flat_kernels import FracConfig
from utils import setup_logger


SECTORS = ("dirichlet", "neumann")
GRAM_RANK_TOL = 1e-10


def _sector_gamma_multiple(sector: str) -> int:
    if sector not in SECTORS:
        raise ValueError(f"sector must be one of {SECTORS}, got {sector!r}")
    return 1 if sector == "dirichlet" else 0


# =========================================
# Квадратура
# =========================================

@dataclass(frozen=True)
class HemisphereQuadrature:
    """
    Узлы на S^n_+ (столбец 0 содержит y) и веса, включающие y^{y_power}dσ.

    Правило точно для y^{y_power}·Q(y², x) с deg Q ≤ exactness.
    """

    n: int
    gamma: float
    y_power: float
    exactness: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 1:]

    def integrate(self, values: np.ndarray, weight_power: Optional[float] = None) -> float:
        """
        ∫_{S^n_+} y^{weight_power}·F dσ по значениям F в узлах.

        Args:
            values: Значения F в узлах
            weight_power: Степень веса (по умолчанию 1 - 2γ)

        Returns:
            Значение интеграла
        """
        if weight_power is None:
            weight_power = 1.0 - 2.0 * self.gamma
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise QuadratureError("integrand is not finite at quadrature nodes")
        correction = self.y ** (weight_power - self.y_power)
        return float(np.dot(self.weights, values * correction))

    def evaluate(self, u: AtomSum) -> np.ndarray:
        """Значения суммы атомов в узлах"""
        try:
            return evaluate_many(numeric_copy(u), self.y, self.x)
        except LatticeError as e:
            raise QuadratureError(f"integrand is singular at quadrature nodes: {e}")


def sphere_rule(dim: int, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Правило на единичной сфере S^{dim}, точное для многочленов степени ≤ degree.

    S^0 = {±1}; для S^1 трапеции по окружности, для S^d (d ≥ 2) Гаусс-Якоби по
    высоте t с весом (1-t²)^{(d-2)/2}, умноженный на правило для S^{d-1}.
    """
    if dim == 0:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if dim == 1:
        count = degree + 1
        angles = 2.0 * math.pi * np.arange(count) / count
        points = np.column_stack([np.cos(angles), np.sin(angles)])
        return points, np.full(count, 2.0 * math.pi / count)

    order = degree // 2 + 1
    alpha = (dim - 2) / 2.0
    heights, height_weights = special.roots_jacobi(order, alpha, alpha)
    sub_points, sub_weights = sphere_rule(dim - 1, degree)
    blocks, weights = [], []
    for t, w in zip(heights, height_weights):
        ring = math.sqrt(max(0.0, 1.0 - t * t))
        blocks.append(np.column_stack([np.full(len(sub_weights), t), ring * sub_points]))
        weights.append(w * sub_weights)
    return np.vstack(blocks), np.concatenate(weights)


@lru_cache(maxsize=128)
def hemisphere_quadrature(
    n: int,
    gamma: float,
    y_power: Optional[float] = None,
    exactness: int = 16
) -> HemisphereQuadrature:
    """
    Строит правило на S^n_+ с весом y^{y_power}.

    Args:
        n: Размерность границы
        gamma: γ
        y_power: Степень y в весе (по умолчанию 1 - 2γ), > -1
        exactness: Степень многочлена Q(y², x), интегрируемого точно

    Returns:
        HemisphereQuadrature
    """
    if y_power is None:
        y_power = 1.0 - 2.0 * gamma
    if y_power <= -1.0:
        raise QuadratureError(f"weight y^{y_power} is not integrable on the hemisphere")

    order = exactness // 2 + 1
    alpha = (n - 2) / 2.0
    beta = (y_power - 1.0) / 2.0
    t, w = special.roots_jacobi(order, alpha, beta)
    v = (1.0 + t) / 2.0
    # ½ от подстановки v = y² и 2^{-(α+β+1)} от перехода [-1,1] → [0,1]
    v_weights = 0.5 * w * 2.0 ** (-(alpha + beta + 1.0))

    omega, omega_weights = sphere_rule(n - 1, exactness)
    y = np.repeat(np.sqrt(v), len(omega_weights))
    ring = np.repeat(np.sqrt(1.0 - v), len(omega_weights))
    x = ring[:, None] * np.tile(omega, (len(v), 1))
    weights = np.outer(v_weights, omega_weights).ravel()

    points = np.column_stack([y, x])
    points.setflags(write=False)
    weights.setflags(write=False)
    return HemisphereQuadrature(n, float(gamma), float(y_power), int(exactness), points, weights)


def sector_quadrature(cfg: FracConfig, sector: str, exactness: int, gradient: bool = False) -> HemisphereQuadrature:
    """
    Правило, поглощающее особенность y^{...} произведений гармоник сектора.

    Произведения: y^{1-2γ+2σ}; градиенты: y^{2γ-1} (Дирихле) или y^{1-2γ} (Нейман).
    """
    g = _sector_gamma_multiple(sector)
    two_gamma = 2.0 * cfg.gamma
    if gradient:
        power = two_gamma - 1.0 if g else 1.0 - two_gamma
    else:
        power = 1.0 - two_gamma + 2.0 * two_gamma * g
    return hemisphere_quadrature(cfg.n, cfg.gamma, power, exactness)


def sphere_moment(beta: Sequence[int]) -> float:
    """∫_{S^{n-1}} ω^β dω (ноль, если какая-то степень нечётна)"""
    if any(b % 2 for b in beta):
        return 0.0
    total = sum(beta)
    log_value = sum(special.gammaln((b + 1) / 2.0) for b in beta) - special.gammaln((total + len(beta)) / 2.0)
    return 2.0 * math.exp(log_value)


def hemisphere_moment(n: int, a: float, beta: Sequence[int]) -> float:
    """
    Точный момент ∫_{S^n_+} y^a·x^β dσ = ½·B((a+1)/2, (n+|β|)/2)·∫_{S^{n-1}} ω^β.
    """
    if a <= -1.0:
        raise QuadratureError(f"y^{a} is not integrable on the hemisphere")
    angular = sphere_moment(beta)
    if angular == 0.0:
        return 0.0
    return 0.5 * special.beta((a + 1.0) / 2.0, (n + sum(beta)) / 2.0) * angular


def exact_weighted_integral(u: AtomSum, weight_power: Optional[float] = None) -> float:
    """
    ∫_{S^n_+} y^{weight_power}·u dσ по точным моментам (|z| = 1 на сфере).
    """
    ctx = u.ctx
    if weight_power is None:
        weight_power = 1.0 - 2.0 * ctx.gamma
    total = 0.0
    for a in u.atoms:
        total += ctx.numeric(a.coeff) * hemisphere_moment(ctx.n, a.y_exp.value(ctx.gamma) + weight_power, a.x_multi)
    return total


# =========================================
# D-гармоники
# =========================================

@dataclass(frozen=True)
class DHarmonic:
    """Однородное решение D(body) = 0 степени k с собственным значением k(k+n-2γ)"""

    degree: LatticeExponent
    body: AtomSum
    eigenvalue: float
    sector: str
    seed: Optional[Tuple[int, ...]] = None

    @property
    def seed_degree(self) -> int:
        return self.degree.integer_part

    def to_dict(self) -> Dict[str, Any]:
        return {
            "degree": self.degree.to_dict(),
            "sector": self.sector,
            "eigenvalue": self.eigenvalue,
            "seed": list(self.seed) if self.seed is not None else None,
            "body": self.body.to_json()
        }


def eigenvalue_of(n: int, gamma: float, k: float) -> float:
    """λ_k = k(k + n - 2γ)"""
    return k * (k + n - 2.0 * gamma)


def _complete_seed(ctx: AlgebraContext, seed: Tuple[int, ...], g: int) -> AtomSum:
    """Σ_l y^{σ+2l}P_l с P_{l+1} = -ΔP_l / ((σ+2l+2)(σ+2l+2-2γ))"""
    piece = AtomSum.monomial(ctx, 1, beta=seed)
    body = piece.shift(y=lattice(0, g))
    step = 0
    while True:
        laplacian = x_laplacian(piece)
        if laplacian.is_empty:
            return body
        denominator = ctx.exponent(lattice(2 * step + 2, g)) * ctx.exponent(lattice(2 * step + 2, g - 1))
        if ctx.numeric(denominator) == 0.0:
            raise LatticeError(f"harmonic recursion hit a zero denominator at step {step}")
        piece = laplacian.scale(-1 / denominator)
        body = body + piece.shift(y=lattice(2 * step + 2, g))
        step += 1


def build_harmonics(cfg: FracConfig, sector: str, top_degree: int, exact: bool = False) -> List[DHarmonic]:
    """
    D-гармоники степени m = top_degree по мономиальным затравкам P_m.

    Args:
        cfg: Конфигурация (γ ≠ 1/2)
        sector: "dirichlet" (y^{2γ}·…) или "neumann"
        top_degree: Степень затравки m ≥ 0
        exact: Точные коэффициенты (sympy)

    Returns:
        C(m+n-1, n-1) гармоник степени k = m (+2γ для Дирихле)
    """
    g = _sector_gamma_multiple(sector)
    if top_degree < 0:
        raise ValueError(f"top_degree must be non-negative, got {top_degree}")
    ctx = cfg.context(exact=exact)
    degree = lattice(top_degree, g)
    eigenvalue = eigenvalue_of(cfg.n, cfg.gamma, degree.value(cfg.gamma))
    return [
        DHarmonic(degree, _complete_seed(ctx, seed, g), eigenvalue, sector, seed)
        for seed in multi_indices(cfg.n, top_degree)
    ]


def weighted_inner_product(u: AtomSum, v: AtomSum, quad: HemisphereQuadrature) -> float:
    """
    ∫_{S^n_+} y^{1-2γ}·u·v dσ по квадратуре.

    Args:
        u: Первая сумма атомов (конечна в узлах)
        v: Вторая сумма атомов
        quad: Правило на полусфере

    Returns:
        Значение скалярного произведения
    """
    return quad.integrate(quad.evaluate(u) * quad.evaluate(v))


def gram_matrix(bodies: Sequence[AtomSum], quad: HemisphereQuadrature) -> np.ndarray:
    values = np.array([quad.evaluate(b) for b in bodies])
    correction = quad.y ** (1.0 - 2.0 * quad.gamma - quad.y_power)
    weighted = values * (quad.weights * correction)
    return weighted @ values.T


def orthogonalize_within_degree(
    harmonics: Sequence[DHarmonic],
    quad: Optional[HemisphereQuadrature] = None
) -> List[DHarmonic]:
    """
    Ортонормирует гармоники одной степени через множитель Холецкого матрицы Грама.

    Args:
        harmonics: Гармоники одной степени и сектора
        quad: Правило (по умолчанию правило произведений сектора)

    Returns:
        Ортонормированный список той же оболочки
    """
    if not harmonics:
        return []
    first = harmonics[0]
    if any(h.degree != first.degree or h.sector != first.sector for h in harmonics):
        raise LatticeError("orthogonalize_within_degree expects harmonics of one degree and sector")
    bodies = [numeric_copy(h.body) for h in harmonics]
    if quad is None:
        ctx = bodies[0].ctx
        quad = sector_quadrature(FracConfig(ctx.n, ctx.gamma), first.sector, 2 * first.seed_degree + 4)

    gram = gram_matrix(bodies, quad)
    spectrum = np.linalg.eigvalsh(gram)
    if spectrum[0] <= GRAM_RANK_TOL * max(spectrum[-1], 1e-300):
        raise QuadratureError(
            f"Gram matrix of degree {first.degree.label()} is rank deficient "
            f"(eigenvalues {spectrum[0]:.3e}..{spectrum[-1]:.3e})"
        )
    try:
        lower = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as e:
        raise QuadratureError(f"Cholesky factorization failed: {e}")
    transform = np.linalg.inv(lower)

    out = []
    for i, h in enumerate(harmonics):
        body = AtomSum.zero(bodies[0].ctx)
        for j in range(i + 1):
            if transform[i, j] != 0.0:
                body = body + bodies[j].scale(transform[i, j])
        out.append(DHarmonic(h.degree, body, h.eigenvalue, h.sector, h.seed))
    return out


def rayleigh_quotient(e: DHarmonic, quad: Optional[HemisphereQuadrature] = None) -> float:
    """
    ∫ y^{1-2γ}|∇_S e|² dσ / ∫ y^{1-2γ}e² dσ, где |∇_S e|² = |∇e|² - k²e² на сфере.
    """
    body = numeric_copy(e.body)
    ctx = body.ctx
    if quad is None:
        quad = sector_quadrature(FracConfig(ctx.n, ctx.gamma), e.sector, 2 * e.seed_degree + 4, gradient=True)
    k = e.degree.value(ctx.gamma)
    values = quad.evaluate(body)
    gradient = quad.evaluate(differentiate(body, "y")) ** 2
    for i in range(ctx.n):
        gradient = gradient + quad.evaluate(differentiate(body, i)) ** 2
    denominator = quad.integrate(values ** 2)
    if denominator <= 0.0:
        raise QuadratureError("harmonic has zero weighted norm")
    return quad.integrate(gradient - k * k * values ** 2) / denominator


class HarmonicBasis:
    """Ортонормированные D-гармоники сектора до заданной степени затравки"""

    def __init__(self, cfg: FracConfig, sector: str, max_degree: int, quad: Optional[HemisphereQuadrature] = None):
        self.cfg = cfg
        self.sector = sector
        self.max_degree = max_degree
        self.quad = quad or sector_quadrature(cfg, sector, 2 * max_degree + 4)
        self.logger = setup_logger("HarmonicBasis", "spectral.log")
        self.by_degree: Dict[int, List[DHarmonic]] = {}
        for m in range(max_degree + 1):
            self.by_degree[m] = orthogonalize_within_degree(build_harmonics(cfg, sector, m), self.quad)
        self.logger.debug(
            f"{sector}: {sum(len(v) for v in self.by_degree.values())} гармоник степени ≤ {max_degree}"
        )

    def harmonics(self, degrees: Optional[Sequence[int]] = None) -> List[DHarmonic]:
        keys = self.by_degree if degrees is None else [m for m in degrees if m in self.by_degree]
        return [h for m in keys for h in self.by_degree[m]]


def projection(f: AtomSum, harmonics: Sequence[DHarmonic], quad: HemisphereQuadrature) -> np.ndarray:
    """Коэффициенты ⟨f, e⟩ по ортонормированным гармоникам"""
    values = quad.evaluate(f)
    return np.array([quad.integrate(values * quad.evaluate(e.body)) for e in harmonics])


def expand_in_harmonics(f: AtomSum, cfg: FracConfig, sector: str, max_degree: int) -> Dict[str, Any]:
    """
    Разложение сужения f на сферу по гармоникам степени ≤ max_degree.

    Returns:
        {"coefficients": {m: массив}, "residual": относительная взвешенная L²-норма остатка}
    """
    basis = HarmonicBasis(cfg, sector, max_degree)
    quad = basis.quad
    values = quad.evaluate(f)
    remainder = values.copy()
    coefficients: Dict[int, np.ndarray] = {}
    for m, harmonics in basis.by_degree.items():
        c = projection(f, harmonics, quad)
        coefficients[m] = c
        for coeff, e in zip(c, harmonics):
            remainder = remainder - coeff * quad.evaluate(e.body)
    norm = math.sqrt(max(quad.integrate(values ** 2), 0.0))
    residual = math.sqrt(max(quad.integrate(remainder ** 2), 0.0))
    return {"coefficients": coefficients, "residual": residual / norm if norm > 0 else residual}


def run_harmonics(cfg: FracConfig, sector: str, max_degree: int) -> List[Dict[str, Any]]:
    """Точка входа для CLI: ортонормированные гармоники и их отношения Рэлея"""
    logger = setup_logger("HarmonicBasis", "spectral.log")
    logger.info(f"Построение гармоник: n={cfg.n}, γ={cfg.gamma}, {sector}, m ≤ {max_degree}")
    basis = HarmonicBasis(cfg, sector, max_degree)
    out = []
    for e in basis.harmonics():
        item = e.to_dict()
        item["rayleigh_quotient"] = rayleigh_quotient(e)
        out.append(item)
    logger.info(f"Готово: {len(out)} гармоник")
    return out
