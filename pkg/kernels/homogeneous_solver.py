"""Модуль 4: Homogeneous Solver

Решение D u = f для однородной f с поведением Дирихле (u ∈ y^{2γ}·…)
или взвешенного Неймана (y^{1-2γ}∂_y u → 0 при y → 0, x ≠ 0).

Основной путь: прямое решение в конечном пространстве канонических
атомов нужной однородности (минимальная норма коэффициентов через
numpy.linalg.lstsq). Спектральный диагональный путь на полусфере
оставлен как перекрёстная проверка для полиномиальных дефицитов.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import get_max_enlargements, get_thread_count, get_zero_tolerance
from errors import LatticeError, SolverError
from kernels.flat_kernels import FracConfig
from kernels.hemisphere_spectral import (
    SECTORS,
    HarmonicBasis,
    eigenvalue_of,
    projection,
)
from kernels.homogeneous_algebra import (
    AtomSum,
    GradedAtom,
    LatticeExponent,
    apply_flat_D,
    differentiate,
    evaluate_many,
    is_canonical_atom,
    lattice,
    multi_indices,
    numeric_copy,
    validate_gamma,
)
from utils import log_duration, setup_logger


# Остаток решения сверх дефицита: |D(u) - f| ≤ tol·|f|
COEFF_DROP_TOL = 1e-13
DENOMINATOR_TOL = 1e-12


# =========================================
# Разрешимость
# =========================================

def _check_gamma(gamma: float, allow_excluded: bool) -> float:
    if allow_excluded and abs(float(gamma) - 0.5) < 1e-12:
        return 0.5
    return validate_gamma(gamma)


def _check_indices(m: int, m_prime: int):
    if int(m) != m or int(m_prime) != m_prime or m < 0 or m_prime < 0:
        raise LatticeError(f"m and m' must be non-negative integers, got {m!r}, {m_prime!r}")


def check_solvable_dirichlet(n: int, gamma: float, m: int, m_prime: int, allow_excluded: bool = False) -> float:
    """
    Знаменатель (m'+2γ)(m'+n) - (m-n+1)(m+1-2γ) задачи Дирихле.

    Args:
        n: Размерность границы
        gamma: γ (1/2 допускается только с allow_excluded)
        m: Индекс дефицита
        m_prime: Индекс гармоники

    Returns:
        Значение знаменателя (ненулевое для допустимых γ)
    """
    gamma = _check_gamma(gamma, allow_excluded)
    _check_indices(m, m_prime)
    two_gamma = 2.0 * gamma
    return (m_prime + two_gamma) * (m_prime + n) - (m - n + 1) * (m + 1 - two_gamma)


def check_solvable_neumann(n: int, gamma: float, m: int, m_prime: int, allow_excluded: bool = False) -> float:
    """Знаменатель m'(m'+n-2γ) - (m-n+1+2γ)(m+1) задачи Неймана"""
    gamma = _check_gamma(gamma, allow_excluded)
    _check_indices(m, m_prime)
    two_gamma = 2.0 * gamma
    return m_prime * (m_prime + n - two_gamma) - (m - n + 1 + two_gamma) * (m + 1)


@dataclass(frozen=True)
class SolvabilityReport:
    """Знаменатели λ_k - (λ+1+2γ)(λ+n+1) диагональной системы"""

    admissible: bool
    offending_pairs: List[Tuple[str, float]] = field(default_factory=list)
    denominators: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "admissible": self.admissible,
            "offending_pairs": [list(p) for p in self.offending_pairs],
            "denominators": dict(self.denominators)
        }


def solvability_report(cfg: FracConfig, sector: str, f_degree: LatticeExponent, max_k: int = 8) -> SolvabilityReport:
    """
    Отчёт о разрешимости для дефицита степени λ = f_degree.

    Args:
        cfg: Конфигурация
        sector: Сектор решения
        f_degree: Степень однородности дефицита
        max_k: Максимальная степень затравки гармоник

    Returns:
        SolvabilityReport по всем гармоникам сектора, нужным для разложения
    """
    if sector not in SECTORS:
        raise ValueError(f"sector must be one of {SECTORS}, got {sector!r}")
    g = 1 if sector == "dirichlet" else 0
    lam = f_degree.value(cfg.gamma)
    target = (lam + 1.0 + 2.0 * cfg.gamma) * (lam + cfg.n + 1.0)
    # в разложении y^{2γ-1}f встречаются только k = μ-2, μ-4, …
    below = f_degree + lattice(-1, 1) - lattice(0, g)

    denominators: Dict[str, float] = {}
    offending = []
    for m in range(max_k + 1):
        k = lattice(m, g)
        value = eigenvalue_of(cfg.n, cfg.gamma, k.value(cfg.gamma)) - target
        denominators[k.label()] = value
        gap = below - lattice(m)
        relevant = gap.is_integer and gap.integer_part >= 0 and gap.integer_part % 2 == 0
        if relevant and abs(value) <= DENOMINATOR_TOL * max(1.0, abs(target)):
            offending.append((k.label(), lam))
    return SolvabilityReport(not offending, offending, denominators)


# =========================================
# Прямое решение в пространстве атомов
# =========================================

def _parity(beta: Sequence[int]) -> Tuple[int, ...]:
    return tuple(b % 2 for b in beta)


def split_by_parity(f: AtomSum) -> Dict[Tuple[int, ...], AtomSum]:
    """Разбиение по классам чётности x^β (D коммутирует с отражениями x_i → -x_i)"""
    classes: Dict[Tuple[int, ...], List[GradedAtom]] = {}
    for a in f.atoms:
        classes.setdefault(_parity(a.x_multi), []).append(a)
    return {p: AtomSum(f.ctx, atoms, _canonical=True) for p, atoms in sorted(classes.items())}


def _least_squares(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Решение минимальной нормы коэффициентов с одним шагом итеративного уточнения"""
    coeffs, *_ = np.linalg.lstsq(matrix, rhs, rcond=None)
    correction, *_ = np.linalg.lstsq(matrix, rhs - matrix @ coeffs, rcond=None)
    return coeffs + correction


class HomogeneousSolver:
    """Однородный решатель одного сектора"""

    def __init__(
        self,
        cfg: FracConfig,
        sector: str,
        tolerance: Optional[float] = None,
        max_enlargements: Optional[int] = None
    ):
        if sector not in SECTORS:
            raise ValueError(f"sector must be one of {SECTORS}, got {sector!r}")
        self.cfg = cfg
        self.sector = sector
        self.tolerance = get_zero_tolerance() if tolerance is None else tolerance
        self.max_enlargements = get_max_enlargements() if max_enlargements is None else max_enlargements
        self.logger = setup_logger("HomogeneousSolver", "solver.log")

    # ----- анзац -----

    def _y_exponents(self, j_max: int) -> List[LatticeExponent]:
        if self.sector == "dirichlet":
            return [lattice(j, 1) for j in range(j_max + 1)]
        # при γ > 1/2 поток y^{1-2γ}∂_y(y) не исчезает на границе
        skip_linear = self.cfg.gamma > 0.5
        return [lattice(j) for j in range(j_max + 1) if not (skip_linear and j == 1)]

    def candidates(self, target: LatticeExponent, parity: Tuple[int, ...], beta_max: int, j_max: int):
        """Канонические атомы y^a·x^β·|z|^t однородности target с классом чётности parity"""
        ctx_n = self.cfg.n
        out = []
        for a in self._y_exponents(j_max):
            for total in range(beta_max + 1):
                for beta in multi_indices(ctx_n, total):
                    if _parity(beta) != parity:
                        continue
                    t = target - a - total
                    out.append((a, beta, t))
        return out

    def _solve_piece(self, f: AtomSum, target: LatticeExponent) -> AtomSum:
        ctx = f.ctx
        parity = _parity(f.atoms[0].x_multi)
        # приведение x₁² переносит степень между y и x, поэтому обе границы от суммарного охвата
        reach = max(max(a.y_exp.integer_part, 0) + sum(a.x_multi) for a in f.atoms)
        beta_max = reach + 2
        j_max = max(3, reach + 3)
        f_norm = f.coefficient_norm()

        remainder = f
        for attempt in range(self.max_enlargements + 1):
            atoms = [c for c in self.candidates(target, parity, beta_max, j_max) if is_canonical_atom(ctx, *c)]
            images = [apply_flat_D(AtomSum(ctx, [GradedAtom(1.0, a, tuple(beta), t)], _canonical=True))
                      for a, beta, t in atoms]

            rows: Dict[tuple, int] = {}
            for image in images:
                for atom in image.atoms:
                    rows.setdefault(atom.key, len(rows))
            for atom in f.atoms:
                rows.setdefault(atom.key, len(rows))

            matrix = np.zeros((len(rows), len(atoms)))
            for col, image in enumerate(images):
                for atom in image.atoms:
                    matrix[rows[atom.key], col] = atom.coeff
            rhs = np.zeros(len(rows))
            for atom in f.atoms:
                rhs[rows[atom.key]] = atom.coeff

            if atoms:
                coeffs = _least_squares(matrix, rhs)
                scale = np.max(np.abs(coeffs)) if len(coeffs) else 0.0
                solution = AtomSum(ctx, [
                    GradedAtom(float(c), a, tuple(beta), t)
                    for c, (a, beta, t) in zip(coeffs, atoms)
                    if abs(c) > COEFF_DROP_TOL * scale
                ])
            else:
                solution = AtomSum.zero(ctx)

            remainder = apply_flat_D(solution) - f
            if remainder.is_zero(self.tolerance, scale=f_norm):
                self.logger.debug(
                    f"кусок чётности {parity}: {len(atoms)} атомов анзаца, {len(solution)} в решении "
                    f"(расширений: {attempt})"
                )
                return solution

            self.logger.debug(
                f"кусок чётности {parity}: остаток {remainder.max_abs_coeff():.2e}, расширяем анзац"
            )
            beta_max += 2
            j_max += 2

        raise SolverError(
            f"{self.sector} deficit of degree {target.label()} is not representable after "
            f"{self.max_enlargements} enlargements (remainder {remainder.max_abs_coeff():.3e})",
            remainder=remainder
        )

    def solve(self, f: AtomSum) -> AtomSum:
        """
        Решение D u = f минимальной нормы коэффициентов.

        Args:
            f: Однородный дефицит (float-режим или точный, приводится к float)

        Returns:
            u степени deg(f) + 1 + 2γ в секторе решателя
        """
        f = numeric_copy(f)
        ctx = f.ctx
        if (ctx.n, ctx.gamma) != (self.cfg.n, self.cfg.gamma):
            raise LatticeError("deficit lives in a different (n, γ) context than the solver")
        if f.is_empty:
            return AtomSum.zero(ctx)

        target = f.degree + lattice(1, 1)
        pieces = list(split_by_parity(f).values())
        with log_duration(self.logger, f"solve {self.sector} deg {target.label()}"):
            workers = min(get_thread_count(), len(pieces))
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    solutions = list(pool.map(lambda p: self._solve_piece(p, target), pieces))
            else:
                solutions = [self._solve_piece(p, target) for p in pieces]

        u = AtomSum.zero(ctx)
        for s in solutions:
            u = u + s
        if not u.is_empty and u.degree != target:
            raise SolverError(f"solution degree {u.degree.label()} differs from {target.label()}", remainder=u)
        return u


def solve_dirichlet(f: AtomSum, cfg: FracConfig) -> AtomSum:
    """D u = f с u ∈ y^{2γ}·(атомы), u|_{y=0} = 0 вне начала координат"""
    return HomogeneousSolver(cfg, "dirichlet").solve(f)


def solve_neumann(f: AtomSum, cfg: FracConfig) -> AtomSum:
    """D u = f с y^{1-2γ}∂_y u → 0 при y → 0, x ≠ 0"""
    return HomogeneousSolver(cfg, "neumann").solve(f)


def weighted_trace_decay(u: AtomSum, x_point: Sequence[float], ys: Sequence[float] = (1e-2, 1e-3, 1e-4, 1e-5)) -> float:
    """
    Показатель степени y^{1-2γ}∂_y u вдоль y → 0 (подгонка в log-log).

    Returns:
        Наклон; inf, если след тождественно нулевой
    """
    u = numeric_copy(u)
    ys = np.asarray(ys, dtype=float)
    x = np.tile(np.asarray(x_point, dtype=float), (len(ys), 1))
    values = np.abs(evaluate_many(differentiate(u, "y"), ys, x)) * ys ** (1.0 - 2.0 * u.ctx.gamma)
    if np.all(values < 1e-300):
        return math.inf
    slope, _ = np.polyfit(np.log(ys), np.log(values), 1)
    return float(slope)


# =========================================
# Спектральный путь
# =========================================

def _spectral_setup(f: AtomSum, cfg: FracConfig, sector: str):
    g = 1 if sector == "dirichlet" else 0
    f = numeric_copy(f)
    if f.is_empty:
        return f, None, None, None
    target = f.degree + lattice(1, 1)
    # y^{2γ-1}·f раскладывается по гармоникам степеней μ-2, μ-4, …
    reduced = f.shift(y=lattice(-1, 1))
    for a in reduced.atoms:
        offset = a.y_exp - lattice(0, g)
        if not a.r_exp.is_zero or not offset.is_integer or offset.integer_part < 0 or offset.integer_part % 2:
            raise SolverError(
                f"spectral solve needs a polynomial {sector}-sector deficit, got atom y^({a.y_exp.label()})",
                remainder=f
            )
    top = target - lattice(0, g)
    if not top.is_integer or top.integer_part < 0:
        raise SolverError(f"target degree {target.label()} is outside the {sector} sector", remainder=f)
    return f, reduced, target, top.integer_part


def spectral_solve(f: AtomSum, cfg: FracConfig, sector: str) -> AtomSum:
    """
    Диагональное решение: a_k = b_k / (λ_k - μ(μ+n-2γ)), b_k = ∫ f·e_k dσ.

    Args:
        f: Полиномиальный дефицит (y·P для Дирихле, y^{1-2γ}·P для Неймана, P чётен по y)
        cfg: Конфигурация
        sector: Сектор

    Returns:
        u = Σ a_k |z|^{μ-k} e_k
    """
    f, reduced, target, top = _spectral_setup(f, cfg, sector)
    if reduced is None:
        return f
    basis = HarmonicBasis(cfg, sector, top)
    mu = target.value(cfg.gamma)
    big_lambda = mu * (mu + cfg.n - 2.0 * cfg.gamma)

    u = AtomSum.zero(f.ctx)
    for m in range(top - 2, -1, -2):
        harmonics = basis.by_degree[m]
        b = projection(reduced, harmonics, basis.quad)
        for coeff, e in zip(b, harmonics):
            denominator = e.eigenvalue - big_lambda
            if abs(denominator) <= DENOMINATOR_TOL * max(1.0, abs(big_lambda)):
                raise SolverError(f"vanishing denominator at k = {e.degree.label()}", remainder=f)
            u = u + e.body.shift(r=target - e.degree).scale(coeff / denominator)
    return u


def spectral_cross_check(f: AtomSum, cfg: FracConfig, sector: str) -> Dict[str, float]:
    """
    Сравнивает прямое и спектральное решения.

    Разность лежит в ядре D (гармоники степени μ), поэтому сравниваются
    D(разность) и проекции на гармоники степени < μ.
    """
    f, reduced, target, top = _spectral_setup(f, cfg, sector)
    if reduced is None:
        return {"d_difference": 0.0, "projection_gap": 0.0}
    direct = HomogeneousSolver(cfg, sector).solve(f)
    spectral = spectral_solve(f, cfg, sector)
    scale = max(f.max_abs_coeff(), 1e-300)
    d_difference = apply_flat_D(direct - spectral).max_abs_coeff() / scale

    basis = HarmonicBasis(cfg, sector, top)
    gap = 0.0
    for m in range(top - 2, -1, -2):
        harmonics = basis.by_degree[m]
        a = projection(direct, harmonics, basis.quad)
        b = projection(spectral, harmonics, basis.quad)
        gap = max(gap, float(np.max(np.abs(a - b))) if len(a) else 0.0)
    return {"d_difference": d_difference, "projection_gap": gap}


def run_solve(f: AtomSum, cfg: FracConfig, sector: str) -> Dict[str, Any]:
    """Точка входа для CLI: решение и отчёт о разрешимости"""
    solver = HomogeneousSolver(cfg, sector)
    solver.logger.info(f"Однородное решение ({sector}): {len(f)} атомов дефицита")
    u = solver.solve(f)
    report = solvability_report(cfg, sector, f.degree) if not f.is_empty else SolvabilityReport(True)
    solver.logger.info(f"Готово: {len(u)} атомов решения")
    return {"solution": u.to_json(), "solvability": report.to_dict()}
