"""Модуль 1: Homogeneous Algebra

Точная алгебра однородных членов c·y^a·x^β·|z|^t на проколотом
полупространстве. Показатели лежат на решётке ℤ + 2γℤ и сравниваются
как пары целых чисел, коэффициенты float (или рациональные функции
формального параметра τ = 2γ в точном режиме).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp

from errors import LatticeError


# Формальный параметр точного режима: τ = 2γ
TWO_GAMMA_SYMBOL = sp.Symbol("tau", positive=True)

# Относительный порог взаимного уничтожения слагаемых при слиянии
MERGE_TOL = 1e-12

Direction = Union[str, int]


def validate_gamma(gamma: float) -> float:
    """
    Проверяет допустимость γ ∈ (0, 1) \\ {1/2}.

    Args:
        gamma: Значение γ

    Returns:
        γ как float
    """
    try:
        gamma = float(gamma)
    except (TypeError, ValueError):
        raise LatticeError(f"gamma must be a real number, got {gamma!r}")
    if not 0.0 < gamma < 1.0:
        raise LatticeError(f"gamma must lie in (0, 1), got {gamma}")
    if abs(gamma - 0.5) < 1e-12:
        raise LatticeError("gamma = 1/2 is excluded (logarithmic terms are not supported)")
    return gamma


@dataclass(frozen=True)
class LatticeExponent:
    """Показатель integer_part + 2γ·gamma_multiple"""

    integer_part: int = 0
    gamma_multiple: int = 0

    def __add__(self, other: Union["LatticeExponent", int]) -> "LatticeExponent":
        if isinstance(other, int):
            return LatticeExponent(self.integer_part + other, self.gamma_multiple)
        return LatticeExponent(
            self.integer_part + other.integer_part,
            self.gamma_multiple + other.gamma_multiple
        )

    __radd__ = __add__

    def __sub__(self, other: Union["LatticeExponent", int]) -> "LatticeExponent":
        if isinstance(other, int):
            return LatticeExponent(self.integer_part - other, self.gamma_multiple)
        return LatticeExponent(
            self.integer_part - other.integer_part,
            self.gamma_multiple - other.gamma_multiple
        )

    def __neg__(self) -> "LatticeExponent":
        return LatticeExponent(-self.integer_part, -self.gamma_multiple)

    def shift(self, k: int) -> "LatticeExponent":
        return LatticeExponent(self.integer_part + k, self.gamma_multiple)

    def value(self, gamma: float) -> float:
        return self.integer_part + 2.0 * gamma * self.gamma_multiple

    def sort_key(self, gamma: float) -> Tuple[float, int, int]:
        return (self.value(gamma), self.integer_part, self.gamma_multiple)

    @property
    def is_zero(self) -> bool:
        return self.integer_part == 0 and self.gamma_multiple == 0

    @property
    def is_integer(self) -> bool:
        return self.gamma_multiple == 0

    @property
    def is_even_power(self) -> bool:
        """|z|^t с t ∈ 2ℕ₀ есть многочлен от (y, x)"""
        return self.gamma_multiple == 0 and self.integer_part >= 0 and self.integer_part % 2 == 0

    def to_dict(self) -> Dict[str, int]:
        return {"int": self.integer_part, "g": self.gamma_multiple}

    @classmethod
    def from_dict(cls, data: Dict[str, int]) -> "LatticeExponent":
        return cls(int(data["int"]), int(data["g"]))

    def label(self) -> str:
        if self.gamma_multiple == 0:
            return str(self.integer_part)
        g = {1: "2γ", -1: "-2γ"}.get(self.gamma_multiple, f"{self.gamma_multiple}·2γ")
        if self.integer_part == 0:
            return g
        sign = "+" if self.gamma_multiple > 0 else ""
        return f"{self.integer_part}{sign}{g}"

    def __repr__(self) -> str:
        return f"Lat({self.label()})"


ZERO = LatticeExponent()
Y_WEIGHT = LatticeExponent(1, -1)   # y^{1-2γ}


def lattice(integer_part: int = 0, gamma_multiple: int = 0) -> LatticeExponent:
    """Короткий конструктор показателя"""
    return LatticeExponent(integer_part, gamma_multiple)


@dataclass(frozen=True)
class AlgebraContext:
    """Параметры алгебры: размерность границы n, γ и режим коэффициентов"""

    n: int
    gamma: float
    exact: bool = False

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise LatticeError(f"boundary dimension n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "gamma", validate_gamma(self.gamma))

    @property
    def two_gamma(self):
        return TWO_GAMMA_SYMBOL if self.exact else 2.0 * self.gamma

    def exponent(self, e: LatticeExponent):
        """Значение показателя в области коэффициентов"""
        if self.exact:
            return sp.Integer(e.integer_part) + e.gamma_multiple * TWO_GAMMA_SYMBOL
        return e.value(self.gamma)

    def coerce(self, c):
        if self.exact:
            if isinstance(c, float):
                return sp.Rational(c)
            return sp.sympify(c)
        return float(c)

    def numeric(self, c) -> float:
        if self.exact:
            return float(sp.sympify(c).subs(TWO_GAMMA_SYMBOL, 2.0 * self.gamma))
        return float(c)

    def as_float(self) -> "AlgebraContext":
        return AlgebraContext(self.n, self.gamma, exact=False)


@dataclass(frozen=True)
class GradedAtom:
    """Член coeff·y^{y_exp}·x^{x_multi}·|z|^{r_exp}"""

    coeff: Any
    y_exp: LatticeExponent
    x_multi: Tuple[int, ...]
    r_exp: LatticeExponent

    @property
    def key(self) -> Tuple[LatticeExponent, Tuple[int, ...], LatticeExponent]:
        return (self.y_exp, self.x_multi, self.r_exp)

    @property
    def homogeneity(self) -> LatticeExponent:
        return self.y_exp + self.r_exp + sum(self.x_multi)

    @property
    def is_polynomial(self) -> bool:
        return self.r_exp.is_zero and self.y_exp.is_integer and self.y_exp.integer_part >= 0


def _bump(beta: Tuple[int, ...], axis: int, step: int) -> Tuple[int, ...]:
    out = list(beta)
    out[axis] += step
    return tuple(out)


def _reduce_once(ctx: AlgebraContext, atom: GradedAtom) -> Optional[List[GradedAtom]]:
    """
    Один шаг приведения по соотношению |z|² = y² + |x|².

    |z|^{2k} (k ≥ 1) раскрывается в многочлен; при любой другой
    ненулевой степени |z| степень x₁ понижается до ≤ 1.
    """
    c, y, beta, r = atom.coeff, atom.y_exp, atom.x_multi, atom.r_exp
    if r.is_zero:
        return None
    if r.is_even_power:
        lower = r.shift(-2)
        out = [GradedAtom(c, y.shift(2), beta, lower)]
        out.extend(GradedAtom(c, y, _bump(beta, i, 2), lower) for i in range(ctx.n))
        return out
    if beta[0] < 2:
        return None
    base = _bump(beta, 0, -2)
    out = [GradedAtom(c, y, base, r.shift(2)), GradedAtom(-c, y.shift(2), base, r)]
    out.extend(GradedAtom(-c, y, _bump(base, i, 2), r) for i in range(1, ctx.n))
    return out


def _merge(ctx: AlgebraContext, contributions: List[Any]):
    if ctx.exact:
        total = sp.cancel(sp.Add(*contributions))
        return None if total == 0 else total
    total = math.fsum(contributions)
    scale = max(abs(c) for c in contributions)
    if total == 0.0 or abs(total) <= MERGE_TOL * scale:
        return None
    return total


def _is_zero_coeff(ctx: AlgebraContext, c) -> bool:
    if ctx.exact:
        return sp.sympify(c) == 0
    return c == 0.0


def _atom_order(gamma: float, atom: GradedAtom):
    return (atom.y_exp.sort_key(gamma), atom.x_multi, atom.r_exp.sort_key(gamma))


def _canonicalize(ctx: AlgebraContext, atoms: Iterable[GradedAtom]) -> Tuple[GradedAtom, ...]:
    buckets: Dict[tuple, List[Any]] = {}
    stack = list(atoms)
    while stack:
        atom = stack.pop()
        if len(atom.x_multi) != ctx.n:
            raise LatticeError(f"multi-index {atom.x_multi} does not match n = {ctx.n}")
        coeff = ctx.coerce(atom.coeff)
        if _is_zero_coeff(ctx, coeff):
            continue
        atom = GradedAtom(coeff, atom.y_exp, atom.x_multi, atom.r_exp)
        reduced = _reduce_once(ctx, atom)
        if reduced is None:
            buckets.setdefault(atom.key, []).append(coeff)
        else:
            stack.extend(reduced)

    merged = []
    for key, contributions in buckets.items():
        total = _merge(ctx, contributions)
        if total is not None:
            merged.append(GradedAtom(total, *key))
    merged.sort(key=lambda a: _atom_order(ctx.gamma, a))
    return tuple(merged)


class AtomSum:
    """Каноническая сумма атомов (неизменяемая)"""

    __slots__ = ("ctx", "atoms")

    def __init__(self, ctx: AlgebraContext, atoms: Iterable[GradedAtom] = (), _canonical: bool = False):
        object.__setattr__(self, "ctx", ctx)
        object.__setattr__(self, "atoms", tuple(atoms) if _canonical else _canonicalize(ctx, atoms))

    def __setattr__(self, name, value):
        raise AttributeError("AtomSum is immutable")

    # ----- конструкторы -----

    @classmethod
    def zero(cls, ctx: AlgebraContext) -> "AtomSum":
        return cls(ctx, (), _canonical=True)

    @classmethod
    def monomial(
        cls,
        ctx: AlgebraContext,
        coeff=1.0,
        y: LatticeExponent = ZERO,
        beta: Optional[Sequence[int]] = None,
        r: LatticeExponent = ZERO
    ) -> "AtomSum":
        beta = tuple(beta) if beta is not None else (0,) * ctx.n
        return cls(ctx, [GradedAtom(coeff, y, beta, r)])

    @classmethod
    def polynomial(cls, ctx: AlgebraContext, terms: Dict[Tuple[int, Tuple[int, ...]], Any]) -> "AtomSum":
        """Многочлен Σ c·y^j·x^β из словаря {(j, β): c}"""
        return cls(ctx, [GradedAtom(c, lattice(j), tuple(beta), ZERO) for (j, beta), c in terms.items()])

    # ----- арифметика -----

    def _check(self, other: "AtomSum"):
        if (other.ctx.n, other.ctx.gamma, other.ctx.exact) != (self.ctx.n, self.ctx.gamma, self.ctx.exact):
            raise LatticeError("atom sums live in different algebra contexts")

    def __add__(self, other: "AtomSum") -> "AtomSum":
        self._check(other)
        return AtomSum(self.ctx, self.atoms + other.atoms)

    def __sub__(self, other: "AtomSum") -> "AtomSum":
        return self + (-other)

    def __neg__(self) -> "AtomSum":
        return AtomSum(self.ctx, [GradedAtom(-a.coeff, a.y_exp, a.x_multi, a.r_exp) for a in self.atoms], _canonical=True)

    def __mul__(self, other) -> "AtomSum":
        if isinstance(other, AtomSum):
            return multiply(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def scale(self, factor) -> "AtomSum":
        factor = self.ctx.coerce(factor)
        if _is_zero_coeff(self.ctx, factor):
            return AtomSum.zero(self.ctx)
        return AtomSum(
            self.ctx,
            [GradedAtom(a.coeff * factor, a.y_exp, a.x_multi, a.r_exp) for a in self.atoms],
            _canonical=not self.ctx.exact
        )

    def shift(self, y: LatticeExponent = ZERO, r: LatticeExponent = ZERO, coeff=1.0) -> "AtomSum":
        """Умножение на coeff·y^y·|z|^r"""
        return AtomSum(
            self.ctx,
            [GradedAtom(a.coeff * coeff, a.y_exp + y, a.x_multi, a.r_exp + r) for a in self.atoms]
        )

    # ----- свойства -----

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    @property
    def is_empty(self) -> bool:
        return not self.atoms

    def coefficient_norm(self) -> float:
        """Евклидова норма вектора коэффициентов"""
        return math.sqrt(sum(self.ctx.numeric(a.coeff) ** 2 for a in self.atoms))

    def max_abs_coeff(self) -> float:
        return max((abs(self.ctx.numeric(a.coeff)) for a in self.atoms), default=0.0)

    def is_zero(self, tol: float = 0.0, scale: Optional[float] = None) -> bool:
        """Нулевая сумма (в пределах tol·scale для float-режима)"""
        if not self.atoms:
            return True
        if self.ctx.exact or tol == 0.0:
            return False
        reference = scale if scale is not None else 1.0
        return self.max_abs_coeff() <= tol * reference

    def homogeneities(self) -> List[LatticeExponent]:
        degrees = {a.homogeneity for a in self.atoms}
        return sorted(degrees, key=lambda d: d.sort_key(self.ctx.gamma))

    @property
    def is_homogeneous(self) -> bool:
        return len(self.homogeneities()) <= 1

    @property
    def degree(self) -> LatticeExponent:
        degrees = self.homogeneities()
        if len(degrees) != 1:
            raise LatticeError(f"atom sum is not homogeneous (degrees {[d.label() for d in degrees]})")
        return degrees[0]

    def coefficients(self) -> Dict[tuple, float]:
        return {a.key: self.ctx.numeric(a.coeff) for a in self.atoms}

    def allclose(self, other: "AtomSum", rtol: float = 1e-10, atol: float = 0.0) -> bool:
        """Сравнение коэффициентов по объединению ключей"""
        self._check(other)
        mine, theirs = self.coefficients(), other.coefficients()
        scale = max(self.max_abs_coeff(), other.max_abs_coeff(), 1e-300)
        for key in set(mine) | set(theirs):
            if abs(mine.get(key, 0.0) - theirs.get(key, 0.0)) > atol + rtol * scale:
                return False
        return True

    def __eq__(self, other) -> bool:
        if not isinstance(other, AtomSum):
            return NotImplemented
        return self.ctx == other.ctx and self.atoms == other.atoms

    __hash__ = None

    def __repr__(self) -> str:
        if not self.atoms:
            return "AtomSum(0)"
        parts = []
        for a in self.atoms[:6]:
            beta = "".join(f"x{i + 1}^{b}" for i, b in enumerate(a.x_multi) if b)
            parts.append(f"{self.ctx.numeric(a.coeff):+.4g}·y^({a.y_exp.label()}){beta}|z|^({a.r_exp.label()})")
        tail = f" …(+{len(self.atoms) - 6})" if len(self.atoms) > 6 else ""
        return "AtomSum(" + " ".join(parts) + tail + ")"

    # ----- сериализация -----

    def to_json(self) -> List[Dict[str, Any]]:
        out = []
        for a in self.atoms:
            coeff = str(a.coeff) if self.ctx.exact else float(a.coeff)
            out.append({
                "coeff": coeff,
                "y": a.y_exp.to_dict(),
                "beta": list(a.x_multi),
                "r": a.r_exp.to_dict()
            })
        return out

    @classmethod
    def from_json(cls, ctx: AlgebraContext, data: List[Dict[str, Any]]) -> "AtomSum":
        atoms = []
        for index, item in enumerate(data):
            try:
                coeff = item["coeff"]
                if ctx.exact:
                    coeff = sp.sympify(coeff, locals={"tau": TWO_GAMMA_SYMBOL})
                atoms.append(GradedAtom(
                    coeff,
                    LatticeExponent.from_dict(item["y"]),
                    tuple(int(b) for b in item["beta"]),
                    LatticeExponent.from_dict(item["r"])
                ))
            except (KeyError, TypeError, ValueError) as e:
                raise LatticeError(f"atom[{index}] is malformed: {e}")
        return cls(ctx, atoms)


# =========================================
# Операции
# =========================================

def _axis(ctx: AlgebraContext, direction: Direction) -> int:
    """-1 для y, иначе индекс x_i (0-based; строки 'x1'..'xn' 1-based)"""
    if direction == "y":
        return -1
    if isinstance(direction, str) and direction.startswith("x"):
        direction = int(direction[1:]) - 1
    axis = int(direction)
    if not 0 <= axis < ctx.n:
        raise LatticeError(f"direction {direction!r} out of range for n = {ctx.n}")
    return axis


def differentiate(u: AtomSum, direction: Direction) -> AtomSum:
    """
    Точная производная ∂_y или ∂_{x_i}.

    Правило цепочки: ∂|z|^t = t·|z|^{t-2}·z_component.

    Args:
        u: Сумма атомов
        direction: "y", индекс x (0-based) или "x1".."xn"

    Returns:
        Производная (каждый атом понижает однородность на 1)
    """
    ctx = u.ctx
    axis = _axis(ctx, direction)
    out: List[GradedAtom] = []
    for a in u.atoms:
        t_value = ctx.exponent(a.r_exp)
        if axis < 0:
            if not a.y_exp.is_zero:
                out.append(GradedAtom(a.coeff * ctx.exponent(a.y_exp), a.y_exp.shift(-1), a.x_multi, a.r_exp))
            if not a.r_exp.is_zero:
                out.append(GradedAtom(a.coeff * t_value, a.y_exp.shift(1), a.x_multi, a.r_exp.shift(-2)))
        else:
            power = a.x_multi[axis]
            if power:
                out.append(GradedAtom(a.coeff * power, a.y_exp, _bump(a.x_multi, axis, -1), a.r_exp))
            if not a.r_exp.is_zero:
                out.append(GradedAtom(a.coeff * t_value, a.y_exp, _bump(a.x_multi, axis, 1), a.r_exp.shift(-2)))
    return AtomSum(ctx, out)


def multiply(u: AtomSum, v: AtomSum) -> AtomSum:
    """Произведение двух сумм атомов"""
    u._check(v)
    out = []
    for a in u.atoms:
        for b in v.atoms:
            out.append(GradedAtom(
                a.coeff * b.coeff,
                a.y_exp + b.y_exp,
                tuple(p + q for p, q in zip(a.x_multi, b.x_multi)),
                a.r_exp + b.r_exp
            ))
    return AtomSum(u.ctx, out)


def x_laplacian(u: AtomSum) -> AtomSum:
    """Δ_x u"""
    total = AtomSum.zero(u.ctx)
    for i in range(u.ctx.n):
        total = total + differentiate(differentiate(u, i), i)
    return total


def apply_flat_D(u: AtomSum) -> AtomSum:
    """
    Плоский вырожденный оператор D = -∂_y(y^{1-2γ}∂_y·) - y^{1-2γ}Δ_x·.

    Каждый атом результата имеет однородность deg - 1 - 2γ.
    """
    flux = differentiate(u, "y").shift(y=Y_WEIGHT)
    return -differentiate(flux, "y") - x_laplacian(u).shift(y=Y_WEIGHT)


def homogeneity_grading(u: AtomSum) -> Dict[LatticeExponent, AtomSum]:
    """
    Разбивает сумму на однородные куски f_l.

    Returns:
        Упорядоченный по возрастанию степени словарь {степень: кусок}
    """
    pieces: Dict[LatticeExponent, List[GradedAtom]] = {}
    for a in u.atoms:
        pieces.setdefault(a.homogeneity, []).append(a)
    ordered = sorted(pieces, key=lambda d: d.sort_key(u.ctx.gamma))
    return {d: AtomSum(u.ctx, pieces[d], _canonical=True) for d in ordered}


def truncate_grades(u: AtomSum, max_value: float) -> AtomSum:
    """Оставляет атомы с однородностью ≤ max_value"""
    keep = [a for a in u.atoms if a.homogeneity.value(u.ctx.gamma) <= max_value + 1e-12]
    return AtomSum(u.ctx, keep, _canonical=True)


def restrict_to_boundary(u: AtomSum) -> AtomSum:
    """
    След на y = 0 (вне начала координат): атомы с y^a, a > 0, исчезают.
    """
    keep = []
    for a in u.atoms:
        if a.y_exp.is_zero:
            keep.append(a)
        elif a.y_exp.value(u.ctx.gamma) < 0:
            raise LatticeError(f"boundary trace of y^({a.y_exp.label()}) is infinite")
    return AtomSum(u.ctx, keep, _canonical=True)


def _power(base: np.ndarray, e: LatticeExponent, gamma: float, what: str) -> np.ndarray:
    if e.is_zero:
        return np.ones_like(base)
    value = e.value(gamma)
    if value < 0 and np.any(base == 0.0):
        raise LatticeError(f"{what}^({e.label()}) is singular at the requested point")
    return np.power(base, value)


def evaluate_many(u: AtomSum, y, x) -> np.ndarray:
    """
    Векторное вычисление суммы в точках (y_k, x_k).

    Args:
        u: Сумма атомов
        y: Массив формы (m,), y ≥ 0
        x: Массив формы (m, n)

    Returns:
        Значения формы (m,)
    """
    ctx = u.ctx
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x = np.asarray(x, dtype=float).reshape(len(y), ctx.n)
    if np.any(y < 0):
        raise LatticeError("evaluation requires y >= 0")
    r = np.sqrt(y ** 2 + np.sum(x ** 2, axis=1))
    total = np.zeros_like(y)
    for a in u.atoms:
        term = ctx.numeric(a.coeff) * _power(y, a.y_exp, ctx.gamma, "y")
        for i, b in enumerate(a.x_multi):
            if b:
                term = term * x[:, i] ** b
        total += term * _power(r, a.r_exp, ctx.gamma, "|z|")
    return total


def evaluate(u: AtomSum, point: Tuple[float, Sequence[float]]) -> float:
    """
    Значение суммы в точке (y, x).

    Args:
        u: Сумма атомов
        point: (y, x) с x длины n

    Returns:
        Вещественное значение
    """
    y, x = point
    return float(evaluate_many(u, [y], np.asarray(x, dtype=float).reshape(1, -1))[0])


def multi_indices(n: int, degree: int) -> List[Tuple[int, ...]]:
    """Все мультииндексы β ∈ ℕ₀ⁿ с |β| = degree (лексикографически по убыванию)"""
    if degree < 0:
        return []
    if n == 1:
        return [(degree,)]
    out = []
    for head in range(degree, -1, -1):
        out.extend((head,) + rest for rest in multi_indices(n - 1, degree - head))
    return out


def numeric_copy(u: AtomSum) -> AtomSum:
    """Та же сумма в float-режиме (τ подставлено как 2γ)"""
    if not u.ctx.exact:
        return u
    ctx = u.ctx.as_float()
    return AtomSum(ctx, [GradedAtom(u.ctx.numeric(a.coeff), a.y_exp, a.x_multi, a.r_exp) for a in u.atoms])


def is_canonical_atom(ctx: AlgebraContext, y: LatticeExponent, beta: Sequence[int], r: LatticeExponent) -> bool:
    """Атом y^a·x^β·|z|^t не переписывается приведением"""
    return _reduce_once(ctx, GradedAtom(1.0, y, tuple(beta), r)) is None


def sector_of(ctx: AlgebraContext, e: LatticeExponent) -> str:
    """Сектор показателя по y: 'neumann' (ℤ) или 'dirichlet' (2γ + ℤ)"""
    if e.gamma_multiple == 0:
        return "neumann"
    if e.gamma_multiple == 1:
        return "dirichlet"
    return "mixed"
