"""Модуль 6: Degenerate FD

Независимый численный оракул: конечные объёмы на градуированной сетке
полубокса для D_g с условиями Дирихле и взвешенного Неймана, извлечение
дробного следа и мультипликатор Фурье на торе.

Вертикальный поток двухточечный по точному локальному решению
A + B·y^{2γ}: T_{j+1/2} = 2γ/(y_{j+1}^{2γ} - y_j^{2γ}). Масса ячейки
m_j = ∫ y^{1-2γ}dy считается точно.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft, sparse, special
from scipy.sparse.linalg import spsolve

from config import get_fd_max_nodes, get_trace_layers
from errors import ConfigError, FitError, SolverError
from kernels.flat_kernels import FracConfig, calibrate_constants
from kernels.homogeneous_algebra import (
    AtomSum,
    Y_WEIGHT,
    apply_flat_D,
    differentiate,
    evaluate_many,
    numeric_copy,
    restrict_to_boundary,
    validate_gamma,
)
from kernels.metric_model import MetricJet, apply_curved_D_numeric, validate
from utils import setup_logger


CELL_QUADRATURE_POINTS = 4
FIT_CONDITION_LIMIT = 1e12

BoundaryData = Union[None, float, np.ndarray, Callable]


# =========================================
# Сетка
# =========================================

def default_grading(gamma: float) -> float:
    """q = 1/(2γ), ограниченное отрезком [2, 3]"""
    return min(3.0, max(2.0, 1.0 / (2.0 * gamma)))


@dataclass(frozen=True)
class HalfGrid:
    """Градуированные узлы y_j = Y(j/J)^q и равномерная x-решётка (тор или бокс)"""

    gamma: float
    y: np.ndarray
    x_axes: Tuple[np.ndarray, ...]
    periodic: bool
    box: Tuple[Tuple[float, float], ...]
    grading: float

    @property
    def n(self) -> int:
        return len(self.x_axes)

    @property
    def J(self) -> int:
        return len(self.y) - 1

    @property
    def x_shape(self) -> Tuple[int, ...]:
        return tuple(len(a) for a in self.x_axes)

    @property
    def x_count(self) -> int:
        return int(np.prod(self.x_shape))

    @property
    def node_count(self) -> int:
        return (self.J + 1) * self.x_count

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(float(a[1] - a[0]) for a in self.x_axes)

    @property
    def lengths(self) -> Tuple[float, ...]:
        return tuple(b - a for a, b in self.box)

    @property
    def x_points(self) -> np.ndarray:
        """Узлы x формы (x_count, n) в C-порядке"""
        mesh = np.meshgrid(*self.x_axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    @property
    def transmissibility(self) -> np.ndarray:
        """T_{j+1/2} = 2γ/(y_{j+1}^{2γ} - y_j^{2γ})"""
        powered = self.y ** (2.0 * self.gamma)
        return 2.0 * self.gamma / np.diff(powered)

    @property
    def cell_bounds(self) -> np.ndarray:
        """Границы контрольных объёмов по y, форма (J+1, 2)"""
        mid = 0.5 * (self.y[1:] + self.y[:-1])
        lower = np.concatenate([[0.0], mid])
        upper = np.concatenate([mid, [self.y[-1]]])
        return np.column_stack([lower, upper])

    @property
    def masses(self) -> np.ndarray:
        """m_j = ∫_{ячейка} y^{1-2γ} dy"""
        p = 2.0 - 2.0 * self.gamma
        bounds = self.cell_bounds
        return (bounds[:, 1] ** p - bounds[:, 0] ** p) / p


def make_half_grid(
    gamma: float,
    n: int,
    J: int,
    Y: float,
    x_nodes: Union[int, Sequence[int]],
    periodic: bool = True,
    box: Optional[Sequence[Tuple[float, float]]] = None,
    grading: Optional[float] = None
) -> HalfGrid:
    """
    Строит сетку полубокса [0, Y] × (тор или бокс).

    Args:
        gamma: γ
        n: Размерность границы
        J: Число интервалов по y
        Y: Высота бокса
        x_nodes: Узлов на период (тор) или интервалов (бокс) по каждой оси
        periodic: Тор или бокс
        box: Отрезки по осям (по умолчанию [0, 2π) для тора, [-1, 1] для бокса)
        grading: Показатель q (по умолчанию min(3, max(2, 1/(2γ))))

    Returns:
        HalfGrid
    """
    gamma = validate_gamma(gamma)
    if J < 2 or Y <= 0:
        raise ConfigError("grid.J/grid.Y", "J ≥ 2 and Y > 0", (J, Y))
    counts = [x_nodes] * n if isinstance(x_nodes, (int, np.integer)) else list(x_nodes)
    if len(counts) != n or any(c < 2 for c in counts):
        raise ConfigError("grid.x_nodes", f"{n} counts ≥ 2", x_nodes)
    if box is None:
        box = [(0.0, 2.0 * math.pi)] * n if periodic else [(-1.0, 1.0)] * n
    box = tuple((float(a), float(b)) for a, b in box)
    q = default_grading(gamma) if grading is None else float(grading)

    y = Y * (np.arange(J + 1) / J) ** q
    if periodic:
        axes = tuple(a + (b - a) * np.arange(c) / c for (a, b), c in zip(box, counts))
    else:
        axes = tuple(np.linspace(a, b, c + 1) for (a, b), c in zip(box, counts))
    grid = HalfGrid(gamma, y, axes, periodic, box, q)
    if grid.node_count > get_fd_max_nodes():
        raise ConfigError("grid", f"at most {get_fd_max_nodes()} nodes", grid.node_count)
    return grid


@dataclass
class HalfGridField:
    """Решение на узлах сетки с метаданными границы y = 0"""

    grid: HalfGrid
    values: np.ndarray
    kind: str
    trace: np.ndarray
    flux: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def rows(self) -> List[List[float]]:
        """Строки (y, x1..xn, value) для CSV"""
        x = self.grid.x_points
        out = []
        for j, yj in enumerate(self.grid.y):
            for k in range(self.grid.x_count):
                out.append([float(yj)] + [float(v) for v in x[k]] + [float(self.values[j].ravel()[k])])
        return out

    def summary(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "n": self.grid.n,
            "J": self.grid.J,
            "x_shape": list(self.grid.x_shape),
            "periodic": self.grid.periodic,
            "grading": self.grid.grading,
            "trace_range": [float(np.min(self.trace)), float(np.max(self.trace))],
            "flux_range": [float(np.min(self.flux)), float(np.max(self.flux))],
            **self.metadata
        }


# =========================================
# Сборка и решение
# =========================================

def _neighbor(k_index: np.ndarray, axis: int, step: int, periodic: bool) -> np.ndarray:
    if periodic:
        return np.roll(k_index, -step, axis=axis)
    size = k_index.shape[axis]
    idx = np.arange(size) + step
    # отражение через край бокса: нулевой поток
    idx[idx < 0] = 1
    idx[idx > size - 1] = size - 2
    return np.take(k_index, idx, axis=axis)


def _evaluate_data(data: BoundaryData, x: np.ndarray, y: Optional[np.ndarray] = None) -> np.ndarray:
    if data is None:
        return np.zeros(len(x))
    if isinstance(data, AtomSum):
        yy = np.zeros(len(x)) if y is None else y
        return evaluate_many(numeric_copy(data), yy, x)
    if callable(data):
        values = data(x) if y is None else data(y, x)
        return np.broadcast_to(np.asarray(values, dtype=float), (len(x),)).copy()
    values = np.asarray(data, dtype=float)
    return np.broadcast_to(values.ravel() if values.ndim else values, (len(x),)).copy()


def _cell_integral(grid: HalfGrid, func: Callable, x: np.ndarray, singular: bool) -> np.ndarray:
    """
    ∫_{ячейка j} F(y, x_k) dy для всех (j, k); при singular интегрируется y^{-2γ}·F.

    Первая ячейка [0, y_{1/2}] считается правилом Гаусса-Якоби с весом y^{-2γ}, остальные по Гауссу-Лежандру.
    """
    two_gamma = 2.0 * grid.gamma
    bounds = grid.cell_bounds
    out = np.zeros((grid.J + 1, len(x)))

    t_gl, w_gl = special.roots_legendre(CELL_QUADRATURE_POINTS)
    a, b = bounds[1:, 0], bounds[1:, 1]
    ys = 0.5 * (b - a)[:, None] * (t_gl[None, :] + 1.0) + a[:, None]
    flat_y = np.repeat(ys.ravel(), len(x))
    flat_x = np.tile(x, (ys.size, 1))
    values = func(flat_y, flat_x).reshape(len(a), CELL_QUADRATURE_POINTS, len(x))
    if singular:
        values = values * flat_y.reshape(values.shape) ** (-two_gamma)
    out[1:] = np.einsum("cqk,q->ck", values, w_gl) * (0.5 * (b - a))[:, None]

    t_gj, w_gj = special.roots_jacobi(CELL_QUADRATURE_POINTS, 0.0, -two_gamma)
    top = bounds[0, 1]
    y0 = 0.5 * top * (t_gj + 1.0)
    flat_y = np.repeat(y0, len(x))
    flat_x = np.tile(x, (len(y0), 1))
    values = func(flat_y, flat_x).reshape(len(y0), len(x))
    if not singular:
        values = values * flat_y.reshape(values.shape) ** two_gamma
    out[0] = (0.5 * top) ** (1.0 - two_gamma) * np.einsum("qk,q->k", values, w_gj)
    return out


class DegenerateFDSolver:
    """Конечные объёмы для √g·D_g на полубоксе"""

    def __init__(self, grid: HalfGrid, jet: Optional[MetricJet] = None):
        if jet is not None:
            validate(jet)
            if jet.n != grid.n or abs(jet.gamma - grid.gamma) > 1e-15:
                raise ConfigError("metric", f"jet with n = {grid.n}, γ = {grid.gamma}", (jet.n, jet.gamma))
        self.grid = grid
        self.jet = jet
        self.logger = setup_logger("DegenerateFDSolver", "fd.log")

    def _fields(self, y: np.ndarray, x: np.ndarray) -> Dict[str, np.ndarray]:
        if self.jet is None:
            count = len(y)
            eye = np.broadcast_to(np.eye(self.grid.n), (count, self.grid.n, self.grid.n))
            return {"sqrt_g": np.ones(count), "ginv": eye, "dlog": np.zeros((self.grid.n + 1, count))}
        return self.jet.evaluate_fields(y, x)

    def _weighted(self, func: Optional[Callable]) -> Optional[Callable]:
        """√g·F как функция точек"""
        if func is None:
            return None
        if self.jet is None:
            return func
        return lambda y, x: self._fields(y, x)["sqrt_g"] * func(y, x)

    def assemble(self) -> Tuple[sparse.csr_matrix, Dict[str, np.ndarray]]:
        """Матрица оператора без граничных строк и поля коэффициентов"""
        grid = self.grid
        n, J, Nx = grid.n, grid.J, grid.x_count
        x = grid.x_points
        k_index = np.arange(Nx).reshape(grid.x_shape)
        total = grid.node_count

        rows: List[np.ndarray] = []
        cols: List[np.ndarray] = []
        vals: List[np.ndarray] = []
        diag = np.zeros((J + 1, Nx))

        # вертикальные грани
        y_faces = 0.5 * (grid.y[1:] + grid.y[:-1])
        face_fields = self._fields(np.repeat(y_faces, Nx), np.tile(x, (J, 1)))
        face_weight = face_fields["sqrt_g"].reshape(J, Nx)
        a = grid.transmissibility[:, None] * face_weight
        base = np.arange(J)[:, None] * Nx + np.arange(Nx)[None, :]
        diag[:-1] += a
        diag[1:] += a
        rows += [base.ravel(), (base + Nx).ravel()]
        cols += [(base + Nx).ravel(), base.ravel()]
        vals += [-a.ravel(), -a.ravel()]

        # горизонтальные потоки в узлах
        node_fields = self._fields(np.repeat(grid.y, Nx), np.tile(x, (J + 1, 1)))
        sqrt_g = node_fields["sqrt_g"].reshape(J + 1, Nx)
        ginv = node_fields["ginv"].reshape(J + 1, Nx, n, n)
        masses = grid.masses[:, None]
        node_rows = np.arange(J + 1)[:, None] * Nx
        h = grid.spacing
        for i in range(n):
            c = masses * sqrt_g * ginv[:, :, i, i] / h[i] ** 2
            for step in (1, -1):
                nb = _neighbor(k_index, i, step, grid.periodic).ravel()
                b = 0.5 * (c + c[:, nb])
                diag += b
                rows.append((node_rows + np.arange(Nx)[None, :]).ravel())
                cols.append((node_rows + nb[None, :]).ravel())
                vals.append(-b.ravel())
            for l in range(n):
                if l == i or self.jet is None:
                    continue
                cross = masses * sqrt_g * ginv[:, :, i, l] / (4.0 * h[i] * h[l])
                for si in (1, -1):
                    ki = _neighbor(k_index, i, si, grid.periodic)
                    weight = cross[:, ki.ravel()]
                    for sl in (1, -1):
                        target = _neighbor(ki, l, sl, grid.periodic).ravel()
                        rows.append((node_rows + np.arange(Nx)[None, :]).ravel())
                        cols.append((node_rows + target[None, :]).ravel())
                        vals.append((-si * sl * weight).ravel())

        # нулевой порядок: e·y^{-2γ}·√g
        if self.jet is not None:
            factor = (n - 2.0 * grid.gamma) / 2.0

            def zero_order(yy, xx):
                f = self._fields(yy, xx)
                return factor * f["dlog"][0] * f["sqrt_g"]

            diag += _cell_integral(grid, zero_order, x, singular=True)

        rows.append(np.arange(total))
        cols.append(np.arange(total))
        vals.append(diag.ravel())
        matrix = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(total, total)
        ).tocsr()
        return matrix, {"sqrt_g": sqrt_g}

    def solve(
        self,
        bottom: str,
        bottom_data: BoundaryData,
        rhs: Union[None, AtomSum, Callable] = None,
        outer: BoundaryData = None
    ) -> HalfGridField:
        """
        Решает √g·D_g U = √g·rhs.

        Args:
            bottom: "dirichlet" (U = f на y = 0) или "neumann" (lim y^{1-2γ}∂_yU = φ)
            bottom_data: f или φ на узлах x
            rhs: Правая часть (AtomSum или функция (y, x))
            outer: Данные Дирихле на верхней грани и боковых гранях бокса (None: нулевой поток)

        Returns:
            HalfGridField
        """
        grid = self.grid
        J, Nx = grid.J, grid.x_count
        x = grid.x_points
        matrix, coefficients = self.assemble()

        if isinstance(rhs, AtomSum):
            source = numeric_copy(rhs)
            rhs_func = lambda yy, xx: evaluate_many(source, yy, xx)
        else:
            rhs_func = rhs
        load = np.zeros((J + 1, Nx))
        if rhs_func is not None:
            load = _cell_integral(grid, self._weighted(rhs_func), x, singular=False)

        boundary = _evaluate_data(bottom_data, x)
        dirichlet = np.zeros((J + 1, Nx), dtype=bool)
        values = np.zeros((J + 1, Nx))
        rhs_vector = load.copy()
        if bottom == "dirichlet":
            dirichlet[0] = True
            values[0] = boundary
        elif bottom == "neumann":
            rhs_vector[0] -= coefficients["sqrt_g"][0] * boundary
        else:
            raise ValueError(f"bottom must be 'dirichlet' or 'neumann', got {bottom!r}")

        if outer is not None:
            dirichlet[J] = True
            values[J] = _evaluate_data(outer, x, np.full(Nx, grid.y[J]))
            if not grid.periodic:
                side = np.zeros(grid.x_shape, dtype=bool)
                for i in range(grid.n):
                    index = [slice(None)] * grid.n
                    index[i] = 0
                    side[tuple(index)] = True
                    index[i] = -1
                    side[tuple(index)] = True
                side = side.ravel()
                for j in range(1 if bottom == "dirichlet" else 0, J):
                    dirichlet[j, side] = True
                    values[j, side] = _evaluate_data(outer, x[side], np.full(int(side.sum()), grid.y[j]))

        mask = dirichlet.ravel()
        free = sparse.diags((~mask).astype(float))
        fixed = sparse.diags(mask.astype(float))
        system = (free @ matrix + fixed).tocsr()
        b = np.where(mask, values.ravel(), rhs_vector.ravel())

        self.logger.debug(f"FD: {grid.node_count} узлов, {int(mask.sum())} граничных, ненулевых {system.nnz}")
        solution = spsolve(system.tocsc(), b)
        if not np.all(np.isfinite(solution)):
            raise SolverError(
                "finite-volume system is singular (check grading, boundary conditions or γ near 1/2)"
            )

        # поток через y = 0 из баланса нижней ячейки
        residual = (matrix @ solution).reshape(J + 1, Nx)
        if bottom == "dirichlet":
            flux = (load[0] - residual[0]) / coefficients["sqrt_g"][0]
        else:
            flux = boundary
        field_values = solution.reshape((J + 1,) + grid.x_shape)
        return HalfGridField(
            grid=grid,
            values=field_values,
            kind=bottom,
            trace=field_values[0].copy(),
            flux=flux.reshape(grid.x_shape),
            metadata={"curved": self.jet is not None}
        )


def solve_dirichlet_fd(
    grid: HalfGrid,
    jet: Optional[MetricJet],
    boundary_data: BoundaryData,
    rhs: Union[None, AtomSum, Callable] = None,
    outer: BoundaryData = None
) -> HalfGridField:
    """D_g U = rhs, U = f на y = 0"""
    return DegenerateFDSolver(grid, jet).solve("dirichlet", boundary_data, rhs, outer)


def solve_neumann_fd(
    grid: HalfGrid,
    jet: Optional[MetricJet],
    flux_data: BoundaryData,
    rhs: Union[None, AtomSum, Callable] = None,
    outer: BoundaryData = None
) -> HalfGridField:
    """D_g U = rhs, lim y^{1-2γ}∂_yU = φ на y = 0"""
    return DegenerateFDSolver(grid, jet).solve("neumann", flux_data, rhs, outer)


# =========================================
# След и оракулы
# =========================================

@dataclass(frozen=True)
class TraceResult:
    """Подгонка U ≈ A₀ + B₀·y^{2γ} по слоям 2..L и след -d_γ·B₀"""

    values: np.ndarray
    A0: np.ndarray
    B0: np.ndarray
    residual: float
    layers: int


def _fit_layers(field_values: np.ndarray, grid: HalfGrid, columns: Sequence[np.ndarray], layers: int):
    if layers < 2 + len(columns) - 1 or layers > grid.J:
        raise FitError(f"{layers} layers cannot support a {len(columns)}-parameter fit on this grid")
    raw = np.column_stack([c[2:layers + 1] for c in columns])
    # столбцы 1, y^{2γ}, y² различаются по масштабу на порядки у дна сетки
    norms = np.linalg.norm(raw, axis=0)
    design = raw / norms
    if np.linalg.cond(design) > FIT_CONDITION_LIMIT:
        raise FitError("boundary fit is ill-conditioned (grid too coarse near y = 0)")
    data = field_values[2:layers + 1].reshape(layers - 1, -1)
    scaled, *_ = np.linalg.lstsq(design, data, rcond=None)
    residuals = data - design @ scaled
    return design, norms, scaled / norms[:, None], residuals


def fit_boundary_expansion(U: HalfGridField, layers: Optional[int] = None) -> TraceResult:
    """
    Подгонка A₀ + B₀y^{2γ} в каждом узле x (без следа).

    Член A₂y² гладкого продолжения входит в модель как мешающий параметр.
    """
    grid = U.grid
    layers = get_trace_layers() if layers is None else layers
    y = grid.y
    columns = [np.ones_like(y), y ** (2.0 * grid.gamma), y ** 2]
    _, _, coeffs, residuals = _fit_layers(U.values, grid, columns, layers)
    scale = max(float(np.max(np.abs(U.values[2:layers + 1]))), 1e-300)
    shape = grid.x_shape
    return TraceResult(
        values=np.zeros(shape),
        A0=coeffs[0].reshape(shape),
        B0=coeffs[1].reshape(shape),
        residual=float(np.max(np.abs(residuals))) / scale,
        layers=layers
    )


def fractional_trace(
    U: HalfGridField,
    cfg: Optional[FracConfig] = None,
    d_gamma: Optional[float] = None,
    layers: Optional[int] = None
) -> TraceResult:
    """
    -d*_γ·lim y^{1-2γ}∂_yU = -d_γ·B₀ по подгонке первых слоёв сетки.

    Args:
        U: Поле
        cfg: Конфигурация (для калиброванного d_γ)
        d_gamma: Явное значение d_γ
        layers: Верхний слой подгонки L (по умолчанию из конфига)

    Returns:
        TraceResult со значениями следа
    """
    fit = fit_boundary_expansion(U, layers)
    if d_gamma is None:
        cfg = cfg or FracConfig(U.grid.n, U.grid.gamma)
        d_gamma = calibrate_constants(cfg).d_gamma
    return TraceResult(-d_gamma * fit.B0, fit.A0, fit.B0, fit.residual, fit.layers)


def fourier_fractional_oracle(
    f_values: np.ndarray,
    gamma: float,
    lengths: Optional[Sequence[float]] = None
) -> np.ndarray:
    """
    (-Δ)^γ f на дискретном торе через мультипликатор |ξ|^{2γ}.

    Args:
        f_values: Значения на равномерной периодической решётке
        gamma: γ
        lengths: Периоды по осям (по умолчанию 2π)

    Returns:
        Массив той же формы
    """
    f_values = np.asarray(f_values, dtype=float)
    lengths = [2.0 * math.pi] * f_values.ndim if lengths is None else list(lengths)
    axes = [2.0 * math.pi * fft.fftfreq(m, d=L / m) for m, L in zip(f_values.shape, lengths)]
    mesh = np.meshgrid(*axes, indexing="ij")
    modulus = np.sqrt(sum(k ** 2 for k in mesh))
    spectrum = fft.fftn(f_values) * modulus ** (2.0 * gamma)
    return np.real(fft.ifftn(spectrum))


def bessel_trace_constant(gamma: float) -> float:
    """d_γ = 2^{2γ}Γ(1+γ)/Γ(1-γ) для профиля y^γK_γ(y) (эталон калибровки)"""
    return 2.0 ** (2.0 * gamma) * special.gamma(1.0 + gamma) / special.gamma(1.0 - gamma)


def bessel_extension_profile(gamma: float, y) -> np.ndarray:
    """φ(y) = 2^{1-γ}/Γ(γ)·y^γK_γ(y), φ(0) = 1: продолжение e^{ix} с частотой 1"""
    y = np.asarray(y, dtype=float)
    out = np.ones_like(y)
    positive = y > 0
    out[positive] = 2.0 ** (1.0 - gamma) / special.gamma(gamma) * y[positive] ** gamma * special.kv(gamma, y[positive])
    return out


def calibrate_trace_constant(
    cfg: FracConfig,
    oracle: Callable = fourier_fractional_oracle,
    J: int = 400,
    Y: float = 12.0,
    x_nodes: Optional[Sequence[int]] = None,
    layers: Optional[int] = None
) -> Dict[str, float]:
    """
    Фиксирует d_γ по f = cos(x₁) на торе и проверяет частоту 2 с тем же d_γ.

    Returns:
        {"d_gamma", "misfit", "reference", "reference_relative"}
    """
    x_nodes = list(x_nodes) if x_nodes is not None else [32] + [4] * (cfg.n - 1)
    grid = make_half_grid(cfg.gamma, cfg.n, J, Y, x_nodes, periodic=True)
    x1 = grid.x_points[:, 0].reshape(grid.x_shape)

    d_gamma = None
    misfits = []
    for frequency in (1, 2):
        f = np.cos(frequency * x1)
        field_ = solve_dirichlet_fd(grid, None, f.ravel())
        fit = fit_boundary_expansion(field_, layers)
        target = oracle(f, cfg.gamma, grid.lengths)
        if d_gamma is None:
            d_gamma = -float(np.sum(target * fit.B0)) / float(np.sum(fit.B0 ** 2))
        misfits.append(float(np.linalg.norm(-d_gamma * fit.B0 - target) / np.linalg.norm(target)))

    reference = bessel_trace_constant(cfg.gamma)
    return {
        "d_gamma": d_gamma,
        "misfit": max(misfits),
        "reference": reference,
        "reference_relative": abs(d_gamma - reference) / reference
    }


def boundary_structure_check(
    jet: Optional[MetricJet],
    boundary: BoundaryData,
    rhs: Union[None, AtomSum, Callable] = None,
    grid: Optional[HalfGrid] = None,
    outer: BoundaryData = None,
    layers: int = 12
) -> Dict[str, Any]:
    """
    Решение D_g U = rhs с U = v на y = 0 и подгонка U ≈ A₀ + A₁y + B₀y^{2γ} + A₂y².

    При H_g = 0 член A₁ должен быть в пределах 3σ шума подгонки; σ берётся
    из остатка подгонки по слоям 2..L. Член A₂y² гладкой части мешающий.

    Returns:
        Отчёт с A₀, A₁, B₀, σ(A₁) и флагом consistent
    """
    if grid is None:
        n = jet.n if jet is not None else 1
        gamma = jet.gamma if jet is not None else 0.25
        grid = make_half_grid(gamma, n, 64, 0.5, 32, periodic=False, box=[(-0.5, 0.5)] * n)
    if outer is None:
        outer = (lambda yy, xx: _evaluate_data(boundary, xx)) if callable(boundary) else boundary
    U = solve_dirichlet_fd(grid, jet, boundary, rhs, outer)

    y = grid.y
    design, norms, coeffs, residuals = _fit_layers(
        U.values, grid, [np.ones_like(y), y, y ** (2.0 * grid.gamma), y ** 2], layers
    )
    dof = max(design.shape[0] - design.shape[1], 1)
    pseudo = np.linalg.pinv(design)
    a1_variance = float((pseudo @ pseudo.T)[1, 1]) / norms[1] ** 2
    sigma = np.sqrt(np.sum(residuals ** 2, axis=0) / dof * a1_variance)

    interior = np.ones(grid.x_shape, dtype=bool)
    if not grid.periodic:
        for i in range(grid.n):
            index = [slice(None)] * grid.n
            index[i] = 0
            interior[tuple(index)] = False
            index[i] = -1
            interior[tuple(index)] = False
    interior = interior.ravel()

    A0, A1, B0 = coeffs[0][interior], coeffs[1][interior], coeffs[2][interior]
    scale = max(float(np.max(np.abs(A0))), float(np.max(np.abs(B0))), 1.0)
    consistent = bool(np.all(np.abs(A1) <= 3.0 * sigma[interior] + 1e-10 * scale))
    return {
        "A0": A0.tolist(),
        "A1": A1.tolist(),
        "B0": B0.tolist(),
        "a1_max": float(np.max(np.abs(A1))),
        "a1_sigma": float(np.max(sigma[interior])),
        "consistent": consistent
    }


# =========================================
# Сходимость
# =========================================

def boundary_data_from(exact: AtomSum, bottom: str) -> Tuple[AtomSum, Callable]:
    """
    Данные задачи по известной функции: след (или взвешенный поток) на y = 0 и внешние значения.

    Returns:
        (данные на y = 0, функция (y, x) для внешних граней)
    """
    exact = numeric_copy(exact)
    if bottom == "dirichlet":
        bottom_data = restrict_to_boundary(exact)
    else:
        bottom_data = restrict_to_boundary(differentiate(exact, "y").shift(y=Y_WEIGHT))
    return bottom_data, lambda yy, xx: evaluate_many(exact, yy, xx)


def _manufactured_problem(exact: AtomSum, jet: Optional[MetricJet], bottom: str):
    exact = numeric_copy(exact)
    if jet is None:
        source = apply_flat_D(exact)
        rhs = lambda yy, xx: evaluate_many(source, yy, xx)
    else:
        rhs = lambda yy, xx: apply_curved_D_numeric(jet, exact, yy, xx)
    bottom_data, outer = boundary_data_from(exact, bottom)
    return bottom_data, rhs, outer


def richardson_order(coarse: HalfGridField, medium: HalfGridField, fine: HalfGridField) -> float:
    """Порядок по трём вложенным сеткам: log₂(|U_h - U_{h/2}| / |U_{h/2} - U_{h/4}|) в общих узлах"""
    def restrict(field_: HalfGridField, stride: int) -> np.ndarray:
        index = (slice(None, None, stride),) * (field_.values.ndim)
        return field_.values[index]

    first = np.max(np.abs(coarse.values - restrict(medium, 2)))
    second = np.max(np.abs(restrict(medium, 2) - restrict(fine, 4)))
    if second == 0.0:
        return math.inf
    return math.log2(first / second)


def convergence_study(
    cfg: FracConfig,
    exact: AtomSum,
    bottom: str = "dirichlet",
    levels: Sequence[int] = (16, 32, 64),
    jet: Optional[MetricJet] = None,
    Y: float = 1.0,
    box: Optional[Sequence[Tuple[float, float]]] = None
) -> Dict[str, Any]:
    """
    Сходимость на вложенных градуированных сетках для готового решения.

    Args:
        cfg: Конфигурация
        exact: Точное решение (сумма атомов)
        bottom: Условие на y = 0
        levels: Число интервалов J = M на уровнях (удваивается)
        jet: Струя метрики (None: плоская)
        Y: Высота бокса
        box: x-бокс (по умолчанию [-1, 1]ⁿ)

    Returns:
        {"levels", "errors", "orders", "richardson_order"}
    """
    bottom_data, rhs, outer = _manufactured_problem(exact, jet, bottom)
    box = box or [(-1.0, 1.0)] * cfg.n
    fields, errors = [], []
    exact = numeric_copy(exact)
    for level in levels:
        grid = make_half_grid(cfg.gamma, cfg.n, level, Y, level, periodic=False, box=box)
        solver = DegenerateFDSolver(grid, jet)
        field_ = solver.solve(bottom, bottom_data, rhs, outer)
        reference = evaluate_many(
            exact, np.repeat(grid.y, grid.x_count), np.tile(grid.x_points, (grid.J + 1, 1))
        ).reshape(field_.values.shape)
        errors.append(float(np.max(np.abs(field_.values - reference))))
        fields.append(field_)

    orders = [
        math.log2(errors[i] / errors[i + 1]) if errors[i + 1] > 0 else math.inf
        for i in range(len(errors) - 1)
    ]
    richardson = richardson_order(*fields[-3:]) if len(fields) >= 3 else float("nan")
    return {"levels": list(levels), "errors": errors, "orders": orders, "richardson_order": richardson}


def run_fd_solve(cfg: FracConfig, jet: Optional[MetricJet], problem: Dict[str, Any]) -> HalfGridField:
    """Точка входа для CLI: задача из словаря {bottom, boundary, rhs, outer, grid}"""
    logger = setup_logger("DegenerateFDSolver", "fd.log")
    grid_spec = dict(problem.get("grid", {}))
    grid = make_half_grid(
        cfg.gamma,
        cfg.n,
        int(grid_spec.get("J", 64)),
        float(grid_spec.get("Y", 1.0)),
        grid_spec.get("x_nodes", 32),
        periodic=bool(grid_spec.get("periodic", False)),
        box=grid_spec.get("box"),
        grading=grid_spec.get("grading")
    )
    logger.info(f"FD: сетка {grid.J + 1} × {grid.x_shape}, q = {grid.grading:.2f}")
    solver = DegenerateFDSolver(grid, jet)
    field_ = solver.solve(
        problem.get("bottom", "dirichlet"),
        problem.get("boundary", 0.0),
        problem.get("rhs"),
        problem.get("outer")
    )
    logger.info(f"FD: готово, след в [{field_.trace.min():.4g}, {field_.trace.max():.4g}]")
    return field_


def run_trace(
    cfg: FracConfig,
    frequency: Optional[Sequence[int]] = None,
    J: int = 400,
    Y: float = 12.0,
    x_nodes: Optional[Sequence[int]] = None,
    layers: Optional[int] = None,
    d_gamma: Optional[float] = None
) -> Dict[str, Any]:
    """
    Точка входа для CLI: дробный след FD-продолжения cos(k·x) на торе против мультипликатора Фурье.

    Returns:
        {"frequency", "d_gamma", "misfit", "fit_residual", "trace", "oracle"}
    """
    logger = setup_logger("DegenerateFDSolver", "fd.log")
    frequency = list(frequency) if frequency is not None else [1] + [0] * (cfg.n - 1)
    if len(frequency) != cfg.n:
        raise ConfigError("frequency", f"{cfg.n} integers", frequency)
    x_nodes = list(x_nodes) if x_nodes is not None else [32] + [4] * (cfg.n - 1)
    grid = make_half_grid(cfg.gamma, cfg.n, J, Y, x_nodes, periodic=True)
    phase = grid.x_points @ np.asarray(frequency, dtype=float)
    f = np.cos(phase).reshape(grid.x_shape)

    if d_gamma is None:
        d_gamma = calibrate_constants(cfg).d_gamma
    field_ = solve_dirichlet_fd(grid, None, f.ravel())
    trace = fractional_trace(field_, cfg, d_gamma=d_gamma, layers=layers)
    oracle = fourier_fractional_oracle(f, cfg.gamma, grid.lengths)
    norm = float(np.linalg.norm(oracle))
    misfit = float(np.linalg.norm(trace.values - oracle)) / norm if norm > 0 else float(np.linalg.norm(trace.values))
    logger.info(f"След: частота {frequency}, несоответствие мультипликатору {misfit:.2e}")
    return {
        "frequency": frequency,
        "d_gamma": d_gamma,
        "misfit": misfit,
        "fit_residual": trace.residual,
        "trace": trace.values.tolist(),
        "oracle": oracle.tolist()
    }
