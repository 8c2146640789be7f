"""Модуль 5: Expansion Engine

Последовательное убивание дефицитов: из плоского ядра K, Γ или G и
струи метрики строится разложение по однородным поправкам. Каждый шаг
решает младший градуированный кусок остатка D_g(частичная сумма)
однородным решателем своего сектора.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from errors import LatticeError, PipelineError, QuadratureError, SolverError
from kernels.flat_kernels import (
    FracConfig,
    green_kernel_flat,
    p_n_gamma,
    poisson_kernel_flat,
)
from kernels.hemisphere_spectral import hemisphere_quadrature
from kernels.homogeneous_algebra import (
    AlgebraContext,
    AtomSum,
    LatticeExponent,
    evaluate_many,
    homogeneity_grading,
    lattice,
    numeric_copy,
    restrict_to_boundary,
    sector_of,
)
from kernels.homogeneous_solver import HomogeneousSolver
from kernels.metric_model import (
    MetricJet,
    apply_curved_D_numeric,
    deficit_apply,
    deficit_threshold,
    pe_leading_order,
    validate,
)
from utils import log_duration, make_rng, setup_logger


KINDS = ("poisson", "green_neumann", "boundary_green")
CLI_KINDS = {"poisson": "poisson", "green": "green_neumann", "boundary": "boundary_green"}
SECTOR_OF_KIND = {"poisson": "dirichlet", "green_neumann": "neumann"}

DECAY_SLACK = 0.1
DECAY_LEVELS = tuple(range(1, 7))
ROUNDOFF_FLOOR = 1e-12
CONVOLUTION_TOL = 0.01


def remainder_tag(kind: str, m: int) -> str:
    """Класс остатка разложения порядка m"""
    if kind == "poisson":
        return f"y^{{2γ}}C^{{{2 * m},α}}"
    if kind == "green_neumann":
        return f"C^{{{2 * m},α}}"
    return f"C^{{{2 * m},α}}(M)"


@dataclass
class KernelExpansion:
    """
    Базовое сингулярное слагаемое и упорядоченные однородные поправки.

    steps хранит по шагу конвейера убитую градуировку дефицита и размер
    поправки; next_grade: младшая градуировка неубитого остатка (None,
    если остаток пуст в пределах точности струи jet_threshold).
    """

    kind: str
    base: AtomSum
    corrections: List[Tuple[LatticeExponent, AtomSum]] = field(default_factory=list)
    order: int = 0
    cutoff_radius: float = 1.0
    remainder_tag: str = ""
    steps: List[Dict[str, Any]] = field(default_factory=list)
    next_grade: Optional[LatticeExponent] = None
    jet_threshold: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.remainder_tag:
            self.remainder_tag = remainder_tag(self.kind, self.order)
        self.check_invariants()

    @property
    def ctx(self) -> AlgebraContext:
        return self.base.ctx

    @property
    def base_degree(self) -> LatticeExponent:
        return self.base.degree

    def homogeneities(self) -> List[LatticeExponent]:
        return [h for h, _ in self.corrections]

    def check_invariants(self):
        """Поправки строго возрастают по однородности и лежат выше базы"""
        gamma = self.ctx.gamma
        previous = self.base_degree.value(gamma)
        for h, term in self.corrections:
            if h.value(gamma) <= previous + 1e-12:
                raise PipelineError(f"correction of homogeneity {h.label()} does not increase the grade", piece=term)
            previous = h.value(gamma)
            sector = SECTOR_OF_KIND.get(self.kind)
            if sector is None:
                continue
            for a in term.atoms:
                if sector_of(self.ctx, a.y_exp) != sector:
                    raise PipelineError(
                        f"{self.kind} correction contains y^({a.y_exp.label()}) outside the {sector} sector",
                        piece=term
                    )

    def truncated(self, m: Optional[int] = None) -> AtomSum:
        """База плюс первые m поправок (по умолчанию все)"""
        total = self.base
        for _, term in self.corrections[:m]:
            total = total + term
        return total

    def to_json(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "n": self.ctx.n,
            "gamma": self.ctx.gamma,
            "order": self.order,
            "cutoff_radius": self.cutoff_radius,
            "remainder_tag": self.remainder_tag,
            "base": numeric_copy(self.base).to_json(),
            "corrections": [
                {"homogeneity": h.to_dict(), "term": numeric_copy(term).to_json()}
                for h, term in self.corrections
            ],
            "steps": list(self.steps),
            "next_grade": self.next_grade.to_dict() if self.next_grade is not None else None,
            "jet_threshold": self.jet_threshold
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "KernelExpansion":
        ctx = AlgebraContext(int(data["n"]), float(data["gamma"]))
        next_grade = data.get("next_grade")
        return cls(
            kind=data["kind"],
            base=AtomSum.from_json(ctx, data["base"]),
            corrections=[
                (LatticeExponent.from_dict(item["homogeneity"]), AtomSum.from_json(ctx, item["term"]))
                for item in data.get("corrections", [])
            ],
            order=int(data.get("order", 0)),
            cutoff_radius=float(data.get("cutoff_radius", 1.0)),
            remainder_tag=data.get("remainder_tag", ""),
            steps=list(data.get("steps", [])),
            next_grade=LatticeExponent.from_dict(next_grade) if next_grade is not None else None,
            jet_threshold=data.get("jet_threshold")
        )


# =========================================
# Конвейер
# =========================================

class ExpansionPipeline:
    """
    Поправки к плоскому ядру одного вида.

    Остаток R = D_g(частичная сумма) ведётся точно: R₀ = -(D - D_g)(база),
    на шаге v решает D v = -R_l для младшего куска R_l, и
    R ← (R - R_l) - (D - D_g)v, всё до порога точности струи.
    """

    def __init__(self, jet: MetricJet, kind: str, cfg: Optional[FracConfig] = None):
        if kind not in SECTOR_OF_KIND:
            raise ValueError(f"pipeline kind must be one of {tuple(SECTOR_OF_KIND)}, got {kind!r}")
        self.jet = jet
        self.kind = kind
        self.cfg = cfg or FracConfig(jet.n, jet.gamma)
        self.sector = SECTOR_OF_KIND[kind]
        self.logger = setup_logger("ExpansionPipeline", "expansion.log")

    def base(self) -> AtomSum:
        if self.kind == "poisson":
            return poisson_kernel_flat(self.cfg)
        return green_kernel_flat(self.cfg)

    def run(self, order: int, max_grade: Optional[float] = None, cutoff_radius: float = 1.0) -> KernelExpansion:
        """
        Args:
            order: Число шагов (ненулевых поправок)
            max_grade: Наибольшая допустимая однородность поправки
            cutoff_radius: Радиус срезки ε

        Returns:
            KernelExpansion
        """
        if order < 0:
            raise ValueError(f"order must be non-negative, got {order}")
        validate(self.jet)
        gamma = self.cfg.gamma
        base = self.base()
        threshold = deficit_threshold(self.jet, base)
        solver = HomogeneousSolver(self.cfg, self.sector)

        residual = -deficit_apply(self.jet, base)
        corrections: List[Tuple[LatticeExponent, AtomSum]] = []
        steps: List[Dict[str, Any]] = []
        self.logger.info(
            f"Разложение {self.kind}: порядок {order}, порог струи {threshold:.4g}, "
            f"дефицит {len(residual)} атомов"
        )

        while len(corrections) < order and not residual.is_empty:
            grade, piece = next(iter(homogeneity_grading(residual).items()))
            homogeneity = grade + lattice(1, 1)
            if max_grade is not None and homogeneity.value(gamma) > max_grade + 1e-12:
                break

            with log_duration(self.logger, f"шаг {len(corrections) + 1}"):
                try:
                    v = solver.solve(-piece)
                except SolverError as e:
                    raise PipelineError(
                        f"{self.kind} step {len(corrections) + 1} failed at grade {grade.label()}: {e}",
                        piece=piece
                    ) from e
                updated = (residual - piece) - deficit_apply(self.jet, v, truncation_degree=threshold)

            if not updated.is_empty:
                lowest = updated.homogeneities()[0]
                if lowest.value(gamma) <= grade.value(gamma) + 1e-12:
                    raise PipelineError(
                        f"deficit grade did not increase after killing {grade.label()} (now {lowest.label()})",
                        piece=updated
                    )
            corrections.append((homogeneity, v))
            steps.append({
                "step": len(corrections),
                "killed_grade": grade.to_dict(),
                "correction_homogeneity": homogeneity.to_dict(),
                "deficit_atoms": len(piece),
                "correction_atoms": len(v)
            })
            self.logger.info(
                f"Шаг {len(corrections)}: убита градуировка {grade.label()}, "
                f"поправка {len(v)} атомов однородности {homogeneity.label()}"
            )
            residual = updated

        next_grade = residual.homogeneities()[0] if not residual.is_empty else None
        expansion = KernelExpansion(
            kind=self.kind,
            base=base,
            corrections=corrections,
            order=order,
            cutoff_radius=cutoff_radius,
            steps=steps,
            next_grade=next_grade,
            jet_threshold=threshold
        )
        self.logger.info(
            f"Готово: {len(corrections)} поправок, следующая градуировка "
            f"{next_grade.label() if next_grade is not None else f'> {threshold:.4g}'}"
        )
        return expansion


def expand_poisson(jet: MetricJet, m: int, max_grade: Optional[float] = None, cutoff_radius: float = 1.0) -> KernelExpansion:
    """Разложение ядра Пуассона K_g (поправки в секторе Дирихле)"""
    return ExpansionPipeline(jet, "poisson").run(m, max_grade, cutoff_radius)


def expand_green_neumann(jet: MetricJet, m: int, max_grade: Optional[float] = None, cutoff_radius: float = 1.0) -> KernelExpansion:
    """Разложение функции Грина Γ_g взвешенной задачи Неймана (сектор Неймана)"""
    return ExpansionPipeline(jet, "green_neumann").run(m, max_grade, cutoff_radius)


def boundary_restriction(expansion: KernelExpansion) -> KernelExpansion:
    """След разложения Γ_g на y = 0; поправки с пустым следом выпадают"""
    if expansion.kind != "green_neumann":
        raise ValueError(f"boundary restriction needs a green_neumann expansion, got {expansion.kind!r}")
    corrections = []
    for h, term in expansion.corrections:
        trace = restrict_to_boundary(term)
        if not trace.is_empty:
            corrections.append((h, trace))
    return KernelExpansion(
        kind="boundary_green",
        base=restrict_to_boundary(expansion.base),
        corrections=corrections,
        order=expansion.order,
        cutoff_radius=expansion.cutoff_radius,
        steps=list(expansion.steps),
        next_grade=expansion.next_grade,
        jet_threshold=expansion.jet_threshold
    )


def expand_boundary_green(jet: MetricJet, m: int, max_grade: Optional[float] = None, cutoff_radius: float = 1.0) -> KernelExpansion:
    """Разложение G_h: след на y = 0 разложения Γ_g"""
    return boundary_restriction(expand_green_neumann(jet, m, max_grade, cutoff_radius))


def expand(jet: MetricJet, kind: str, m: int, max_grade: Optional[float] = None, cutoff_radius: float = 1.0) -> KernelExpansion:
    """Диспетчер по виду ядра ('poisson' | 'green' | 'boundary' или полное имя)"""
    kind = CLI_KINDS.get(kind, kind)
    if kind == "poisson":
        return expand_poisson(jet, m, max_grade, cutoff_radius)
    if kind == "green_neumann":
        return expand_green_neumann(jet, m, max_grade, cutoff_radius)
    if kind == "boundary_green":
        return expand_boundary_green(jet, m, max_grade, cutoff_radius)
    raise ValueError(f"unknown kernel kind {kind!r}")


def locally_flat_grade_sets(kind: str, n: int, gamma: float) -> List[LatticeExponent]:
    """
    Однородности поправок для локально плоской конформной бесконечности.

    Пуассон: {0, 1, 2}; Γ_g и G_h: {2γ, 1+2γ}.
    """
    kind = CLI_KINDS.get(kind, kind)
    if kind == "poisson":
        return [lattice(0), lattice(1), lattice(2)]
    if kind in ("green_neumann", "boundary_green"):
        return [lattice(0, 1), lattice(1, 1)]
    raise ValueError(f"unknown kernel kind {kind!r}")


def locally_flat_max_grade(kind: str, n: int, gamma: float) -> float:
    return max(h.value(gamma) for h in locally_flat_grade_sets(kind, n, gamma))


def pe_expected_grade_set(kind: str, n: int, gamma: float) -> List[LatticeExponent]:
    """
    Однородности, которые конвейер обязан найти на pe_locally_flat_jet(n, γ).

    Младший слой струи y^k даёт первую поправку на k - n выше начала набора,
    поэтому для нечётного n первая однородность набора недостижима.
    """
    skip = pe_leading_order(n) - n
    return locally_flat_grade_sets(kind, n, gamma)[skip:]


# =========================================
# Проверки
# =========================================

def _expected_slope(expansion: KernelExpansion, m: int) -> float:
    gamma = expansion.ctx.gamma
    if m < len(expansion.corrections):
        return (expansion.corrections[m][0] - lattice(1, 1)).value(gamma)
    if expansion.next_grade is not None:
        return expansion.next_grade.value(gamma)
    return expansion.jet_threshold


def residual_decay_check(
    jet: MetricJet,
    expansion: KernelExpansion,
    m: Optional[int] = None,
    levels: Sequence[int] = DECAY_LEVELS
) -> Dict[str, Any]:
    """
    Наклон sup|D_g u| на полусферах |z| = ρ = 2^{-k}ε в log-log.

    Args:
        jet: Струя (многочлен считается точной метрикой)
        expansion: Разложение вида poisson или green_neumann
        m: Число учитываемых поправок (по умолчанию все)
        levels: Показатели k

    Returns:
        {"m", "slope", "expected", "radii", "sup"}; slope = inf при нулевом остатке

    Raises:
        PipelineError: наклон ниже ожидаемого более чем на 0.1
    """
    if expansion.kind not in SECTOR_OF_KIND:
        raise PipelineError(f"residual decay is defined for bulk kernels, got {expansion.kind!r}")
    m = len(expansion.corrections) if m is None else m
    u = numeric_copy(expansion.truncated(m))
    expected = _expected_slope(expansion, m)
    quad = hemisphere_quadrature(jet.n, jet.gamma, exactness=12)
    degree = expansion.base_degree.value(jet.gamma)

    radii, sups, live = [], [], []
    for k in levels:
        rho = expansion.cutoff_radius * 2.0 ** (-k)
        points = rho * quad.points
        values = apply_curved_D_numeric(jet, u, points[:, 0], points[:, 1:])
        sup = float(np.max(np.abs(values)))
        # масштаб отдельных слагаемых D_g u: ρ^{deg - 1 - 2γ}·sup|u| на единичной сфере
        scale = rho ** (degree - 1.0 - 2.0 * jet.gamma) * float(np.max(np.abs(evaluate_many(u, quad.points[:, 0], quad.points[:, 1:]))))
        radii.append(rho)
        sups.append(sup)
        live.append(sup > ROUNDOFF_FLOOR * scale)

    report = {"m": m, "expected": expected, "radii": radii, "sup": sups}
    if sum(live) < 2:
        report["slope"] = math.inf
        return report
    r = np.log(np.asarray(radii)[live])
    s = np.log(np.asarray(sups)[live])
    slope = float(np.polyfit(r, s, 1)[0])
    report["slope"] = slope
    if slope < expected - DECAY_SLACK:
        raise PipelineError(f"residual decays like ρ^{slope:.3f}, expected at least ρ^{expected:.3f}")
    return report


def decay_profile(jet: MetricJet, expansion: KernelExpansion) -> List[Dict[str, Any]]:
    """Наклоны остатка для m = 0, 1, …, число поправок"""
    return [residual_decay_check(jet, expansion, m) for m in range(len(expansion.corrections) + 1)]


def _convolution_value(cfg: FracConfig, p: float, y: float, x: np.ndarray) -> float:
    n, gamma = cfg.n, cfg.gamma
    power = -(n + 2.0 * gamma) / 2.0

    def kernel(d2: float) -> float:
        return p * y ** (2.0 * gamma) * (y * y + d2) ** power

    if n == 1:
        x0 = float(x[0])
        integrand = lambda xi: kernel((x0 - xi) ** 2) * abs(xi) ** (2.0 * gamma - 1.0)
        cuts = sorted({0.0, x0})
        pieces = [(-np.inf, cuts[0])] + list(zip(cuts[:-1], cuts[1:])) + [(cuts[-1], np.inf)]
        total = 0.0
        for a, b in pieces:
            value, _ = integrate.quad(integrand, a, b, limit=400, epsabs=0.0, epsrel=1e-9)
            total += value
        return total

    if n == 2:
        x0 = np.asarray(x, dtype=float)
        radius = float(np.linalg.norm(x0))

        def angular(rho: float) -> float:
            def inner(theta: float) -> float:
                d2 = (x0[0] - rho * math.cos(theta)) ** 2 + (x0[1] - rho * math.sin(theta)) ** 2
                return kernel(d2)
            value, _ = integrate.quad(inner, 0.0, 2.0 * math.pi, limit=200, epsabs=0.0, epsrel=1e-10)
            return rho ** (2.0 * gamma - 1.0) * value

        cuts = [0.0] + ([radius] if radius > 0 else []) + [max(radius, y) * 4.0]
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            value, _ = integrate.quad(angular, a, b, limit=400, epsabs=0.0, epsrel=1e-9)
            total += value
        value, _ = integrate.quad(angular, cuts[-1], np.inf, limit=400, epsabs=0.0, epsrel=1e-9)
        return total + value

    raise QuadratureError(f"convolution check is implemented for n ∈ {{1, 2}}, got n = {n}")


def convolution_check(cfg: FracConfig, samples: Optional[Sequence[Tuple[float, Sequence[float]]]] = None,
                      count: int = 10, seed: Optional[int] = None) -> Dict[str, Any]:
    """
    Плоская модель: Γ(y, x) = ∫ K(y, x - ξ)·G(ξ) dξ при g_{n,γ} = 1.

    Args:
        cfg: Конфигурация (2γ < n)
        samples: Точки (y, x); по умолчанию count случайных точек
        count: Число случайных точек
        seed: Seed генератора

    Returns:
        {"max_relative_error", "points": [...]}
    """
    if not cfg.green_admissible:
        raise LatticeError(f"convolution identity needs 2γ < n (n = {cfg.n}, γ = {cfg.gamma})")
    if samples is None:
        rng = make_rng(seed)
        samples = [(float(rng.uniform(0.2, 2.0)), rng.uniform(-1.5, 1.5, size=cfg.n)) for _ in range(count)]

    logger = setup_logger("ExpansionPipeline", "expansion.log")
    p = p_n_gamma(cfg)
    points, worst = [], 0.0
    for y, x in samples:
        x = np.asarray(x, dtype=float).reshape(cfg.n)
        if y <= 0:
            raise QuadratureError("convolution samples need y > 0")
        reference = (y * y + float(np.dot(x, x))) ** ((2.0 * cfg.gamma - cfg.n) / 2.0)
        value = _convolution_value(cfg, p, y, x)
        if not math.isfinite(value):
            raise QuadratureError(f"convolution quadrature did not converge at y = {y}, x = {x.tolist()}")
        error = abs(value - reference) / reference
        worst = max(worst, error)
        points.append({"y": y, "x": x.tolist(), "convolution": value, "green": reference, "relative_error": error})
    logger.info(f"Свёртка K*G: {len(points)} точек, макс. относительная ошибка {worst:.2e}")
    return {"max_relative_error": worst, "tolerance": CONVOLUTION_TOL, "points": points}


def conformal_covariance_check(jet: MetricJet, c: float, m: int, kind: str = "boundary") -> Dict[str, Any]:
    """
    Разложение для c²g против исходного: поправка однородности d получает множитель c^{deg(база) - d}.

    Returns:
        {"exponents_match", "max_relative_error", "factors"}
    """
    from kernels.metric_model import conformal_rescale

    original = expand(jet, kind, m)
    rescaled = expand(conformal_rescale(jet, c), kind, m)
    gamma = jet.gamma
    base_degree = original.base_degree

    exponents_match = (
        original.homogeneities() == rescaled.homogeneities()
        and [set(t.coefficients()) for _, t in original.corrections]
        == [set(t.coefficients()) for _, t in rescaled.corrections]
    )
    worst = 0.0
    factors = []
    if exponents_match:
        pairs = [(base_degree, original.base, rescaled.base)] + [
            (h, a, b) for (h, a), (_, b) in zip(original.corrections, rescaled.corrections)
        ]
        for h, a, b in pairs:
            factor = c ** (base_degree - h).value(gamma)
            factors.append({"homogeneity": h.label(), "factor": factor})
            worst = max(worst, _max_relative(a.scale(factor), b))
    return {"exponents_match": exponents_match, "max_relative_error": worst, "factors": factors}


def _max_relative(expected: AtomSum, actual: AtomSum) -> float:
    mine, theirs = expected.coefficients(), actual.coefficients()
    scale = max(expected.max_abs_coeff(), 1e-300)
    return max(abs(mine.get(k, 0.0) - theirs.get(k, 0.0)) for k in set(mine) | set(theirs)) / scale


def annulus_cross_validation(
    jet: MetricJet,
    expansions: Sequence[KernelExpansion],
    J: int = 48,
    x_nodes: int = 48
) -> Dict[str, Any]:
    """
    Сравнение с конечными объёмами на боксе вдали от начала координат.

    Бокс y ∈ [0, ε/4], x ∈ [ε/4, ε/2]ⁿ лежит в кольце ε/4 ≤ |z| ≤ ε·√(n+1)/2;
    данные на границе берутся из усечённого разложения, D_g U = 0 внутри.

    Returns:
        {"errors": [...], "monotone": bool}
    """
    from kernels.degenerate_fd import boundary_data_from, make_half_grid, DegenerateFDSolver

    logger = setup_logger("ExpansionPipeline", "expansion.log")
    errors = []
    for expansion in expansions:
        if expansion.kind not in SECTOR_OF_KIND:
            raise PipelineError(f"annulus check needs a bulk expansion, got {expansion.kind!r}")
        eps = expansion.cutoff_radius
        grid = make_half_grid(
            jet.gamma, jet.n, J, eps / 4.0, x_nodes, periodic=False, box=[(eps / 4.0, eps / 2.0)] * jet.n
        )
        u = numeric_copy(expansion.truncated())
        bottom = SECTOR_OF_KIND[expansion.kind]
        bottom_data, outer = boundary_data_from(u, bottom)
        field_ = DegenerateFDSolver(grid, jet).solve(bottom, bottom_data, None, outer)

        y = np.repeat(grid.y, grid.x_count)
        x = np.tile(grid.x_points, (grid.J + 1, 1))
        reference = evaluate_many(u, y, x).reshape(grid.J + 1, grid.x_count)
        values = field_.values.reshape(grid.J + 1, grid.x_count)
        interior = np.ones(grid.x_shape, dtype=bool)
        for i in range(grid.n):
            index = [slice(None)] * grid.n
            index[i] = 0
            interior[tuple(index)] = False
            index[i] = -1
            interior[tuple(index)] = False
        interior = interior.ravel()
        rows = slice(1 if bottom == "dirichlet" else 0, grid.J)
        error = float(np.max(np.abs(values[rows][:, interior] - reference[rows][:, interior])))
        error /= max(float(np.max(np.abs(reference))), 1e-300)
        errors.append(error)
        logger.info(f"Кольцо: {len(expansion.corrections)} поправок, ошибка {error:.3e}")

    monotone = all(b <= a for a, b in zip(errors[:-1], errors[1:]))
    return {"errors": errors, "monotone": monotone}


def run_expand(
    jet: MetricJet,
    kind: str,
    order: int,
    max_grade: Optional[float] = None,
    cutoff_radius: float = 1.0
) -> Dict[str, Any]:
    """Точка входа для CLI: разложение и отчёт о затухании остатка по шагам"""
    kind = CLI_KINDS.get(kind, kind)
    bulk_kind = "green_neumann" if kind == "boundary_green" else kind
    bulk = ExpansionPipeline(jet, bulk_kind).run(order, max_grade, cutoff_radius)
    expansion = boundary_restriction(bulk) if kind == "boundary_green" else bulk
    return {"expansion": expansion.to_json(), "residual_decay": decay_profile(jet, bulk)}
