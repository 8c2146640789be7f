"""Модуль 2: Flat Kernels

Модельные ядра плоского полупространства и нормировочные константы:
c_{n,3}, p_{n,γ} = 1/c_{n,3}, d_γ, d*_γ = d_γ/2γ и g_{n,γ}.
d_γ и g_{n,γ} калибруются численно (конечные объёмы + мультипликатор
Фурье, поток через полусферу), а не берутся из литературы.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np
from scipy import integrate, special

from errors import CalibrationError, LatticeError
from kernels.homogeneous_algebra import (
    AlgebraContext,
    AtomSum,
    differentiate,
    evaluate_many,
    lattice,
    validate_gamma,
)
from utils import setup_logger


# Допуски калибровки
C_N3_ORACLE_TOL = 1e-10
FLUX_RHO_TOL = 1e-4
TRACE_CALIBRATION_TOL = 0.02
DEFAULT_FLUX_RADII = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class FracConfig:
    """Размерность границы n, порядок γ и s = n/2 + γ"""

    n: int
    gamma: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise LatticeError(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "gamma", validate_gamma(self.gamma))

    @property
    def s(self) -> float:
        return self.n / 2.0 + self.gamma

    @property
    def spectral_gap(self) -> float:
        """s(n - s); положительность нужна для функции Грина"""
        return self.s * (self.n - self.s)

    @property
    def green_admissible(self) -> bool:
        return 2.0 * self.gamma < self.n

    def context(self, exact: bool = False) -> AlgebraContext:
        return AlgebraContext(self.n, self.gamma, exact=exact)


@dataclass(frozen=True)
class ConstantSet:
    """Нормировочные константы с остатками калибровки"""

    c_n3: float
    p_n_gamma: float
    d_gamma: float
    d_star_gamma: float
    g_n_gamma: float
    residuals: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c_n3": self.c_n3,
            "p_n_gamma": self.p_n_gamma,
            "d_gamma": self.d_gamma,
            "d_star_gamma": self.d_star_gamma,
            "g_n_gamma": self.g_n_gamma,
            "residuals": dict(self.residuals)
        }


def sphere_area(dim: int) -> float:
    """Площадь единичной сферы S^{dim} ⊂ ℝ^{dim+1}"""
    return 2.0 * math.pi ** ((dim + 1) / 2.0) / special.gamma((dim + 1) / 2.0)


def c_n3_radial_quadrature(cfg: FracConfig) -> float:
    """
    Оракул: ω_{n-1}∫₀^∞ r^{n-1}(1+r²)^{-(n+2γ)/2} dr адаптивной квадратурой.
    """
    exponent = -(cfg.n + 2.0 * cfg.gamma) / 2.0

    def integrand(r):
        return r ** (cfg.n - 1) * (1.0 + r * r) ** exponent

    head, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    # хвост через подстановку r = 1/u: u^{2γ-1}(1+u²)^{-(n+2γ)/2}
    tail, _ = integrate.quad(
        lambda u: u ** (2.0 * cfg.gamma - 1.0) * (1.0 + u * u) ** exponent,
        0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200
    )
    return sphere_area(cfg.n - 1) * (head + tail)


def compute_c_n3(cfg: FracConfig, method: str = "beta") -> float:
    """
    c_{n,3} = ∫_{ℝⁿ}(1+|x|²)^{-(n+2γ)/2} dx.

    Args:
        cfg: Конфигурация
        method: "beta" (π^{n/2}Γ(γ)/Γ(n/2+γ)) или "quadrature" (радиальный оракул)

    Returns:
        Значение c_{n,3}
    """
    if method == "quadrature":
        return c_n3_radial_quadrature(cfg)
    if method != "beta":
        raise ValueError(f"unknown method {method!r}")
    return math.pi ** (cfg.n / 2.0) * special.gamma(cfg.gamma) / special.gamma(cfg.n / 2.0 + cfg.gamma)


def p_n_gamma(cfg: FracConfig) -> float:
    """p_{n,γ} = 1/c_{n,3}"""
    return 1.0 / compute_c_n3(cfg)


def hemisphere_weight_integral(n: int, gamma: float) -> float:
    """∫_{S^n_+} y^{1-2γ} dσ = ½·B(1-γ, n/2)·|S^{n-1}|"""
    return 0.5 * special.beta(1.0 - gamma, n / 2.0) * sphere_area(n - 1)


def poisson_mass(cfg: FracConfig, y: float, ball_factor: float = 50.0) -> Dict[str, float]:
    """
    ∫_{ℝⁿ} K(y, x) dx: радиальная квадратура по шару |x| ≤ 50y плюс хвост.

    Хвост считается подстановкой r = 1/u и отдельно ограничивается сверху
    оценкой ω_{n-1}·p·y^{2γ}·R^{-2γ}/(2γ).

    Returns:
        {"mass", "ball", "tail", "tail_bound"}
    """
    if y <= 0:
        raise LatticeError("Poisson mass needs y > 0")
    p = p_n_gamma(cfg)
    exponent = -(cfg.n + 2.0 * cfg.gamma) / 2.0
    omega = sphere_area(cfg.n - 1)
    radius = ball_factor * y

    ball, _ = integrate.quad(
        lambda r: r ** (cfg.n - 1) * (y * y + r * r) ** exponent, 0.0, radius, epsabs=0.0, epsrel=1e-12, limit=200
    )
    # r = 1/u: r^{n-1}(y²+r²)^{e}dr = u^{2γ-1}(y²u²+1)^{e}du
    tail, _ = integrate.quad(
        lambda u: u ** (2.0 * cfg.gamma - 1.0) * (y * y * u * u + 1.0) ** exponent,
        0.0, 1.0 / radius, epsabs=0.0, epsrel=1e-12, limit=200
    )
    scale = omega * p * y ** (2.0 * cfg.gamma)
    return {
        "mass": scale * (ball + tail),
        "ball": scale * ball,
        "tail": scale * tail,
        "tail_bound": scale * radius ** (-2.0 * cfg.gamma) / (2.0 * cfg.gamma)
    }


def poisson_kernel_flat(cfg: FracConfig, ctx: Optional[AlgebraContext] = None) -> AtomSum:
    """
    K(z) = p_{n,γ}·y^{2γ}|z|^{-n-2γ}, однородность -n.
    """
    ctx = ctx or cfg.context()
    return AtomSum.monomial(ctx, p_n_gamma(cfg), y=lattice(0, 1), r=lattice(-cfg.n, -1))


def green_kernel_flat(
    cfg: FracConfig,
    constants: Optional[ConstantSet] = None,
    ctx: Optional[AlgebraContext] = None
) -> AtomSum:
    """
    Γ(z) = g_{n,γ}|z|^{2γ-n}, однородность 2γ - n.

    Args:
        cfg: Конфигурация (нужно 2γ < n)
        constants: Откалиброванные константы (по умолчанию calibrate_constants)
        ctx: Контекст алгебры

    Returns:
        Сумма атомов Γ
    """
    if not cfg.green_admissible:
        raise LatticeError(f"Green's function needs 2γ < n (n = {cfg.n}, γ = {cfg.gamma})")
    ctx = ctx or cfg.context()
    constants = constants or calibrate_constants(cfg)
    return AtomSum.monomial(ctx, constants.g_n_gamma, r=lattice(-cfg.n, 1))


def weighted_hemisphere_flux(u: AtomSum, rho: float, quad=None) -> float:
    """
    ∮_{|z|=ρ, y>0} y^{1-2γ}∂_ν u dσ для однородной u, квадратурой на полусфере.
    """
    from kernels.hemisphere_spectral import hemisphere_quadrature

    ctx = u.ctx
    quad = quad or hemisphere_quadrature(ctx.n, ctx.gamma, y_power=1.0 - 2.0 * ctx.gamma)
    points = rho * quad.points
    y, x = points[:, 0], points[:, 1:]
    radial = differentiate(u, "y")
    values = evaluate_many(radial, y, x) * y
    for i in range(ctx.n):
        values += evaluate_many(differentiate(u, i), y, x) * x[:, i]
    values /= rho
    # y^{1-2γ} в весе правила; множитель ρ^{n} от площади и ρ^{1-2γ} от веса
    return rho ** (ctx.n + 1.0 - 2.0 * ctx.gamma) * float(np.dot(quad.weights, values))


class ConstantCalibrator:
    """Калибровка d_γ (след против мультипликатора Фурье) и g_{n,γ} (поток)"""

    def __init__(self, cfg: FracConfig):
        self.cfg = cfg
        self.logger = setup_logger("ConstantCalibrator", "constants.log")

    def check_c_n3(self) -> Dict[str, float]:
        closed = compute_c_n3(self.cfg, "beta")
        oracle = compute_c_n3(self.cfg, "quadrature")
        residual = abs(closed - oracle) / oracle
        self.logger.info(f"c_n3: beta={closed:.12g}, quadrature={oracle:.12g}, rel={residual:.2e}")
        if residual > C_N3_ORACLE_TOL:
            raise CalibrationError(
                "Beta identity for c_n3 disagrees with radial quadrature",
                {"beta": closed, "quadrature": oracle, "relative": residual}
            )
        return {"c_n3_beta": closed, "c_n3_quadrature": oracle, "c_n3_relative": residual}

    def calibrate_d_gamma(self, oracle: Callable, fd_options: Optional[Dict[str, Any]] = None) -> Dict[str, float]:
        """
        d_γ из условия -d_γ·B₀ = (-Δ)^γ f для f = cos(x₁) на торе.
        """
        from kernels.degenerate_fd import calibrate_trace_constant

        options = dict(fd_options or {})
        result = calibrate_trace_constant(self.cfg, oracle, **options)
        self.logger.info(f"d_gamma = {result['d_gamma']:.8g} (misfit {result['misfit']:.2e})")
        if result["misfit"] > TRACE_CALIBRATION_TOL:
            raise CalibrationError("fractional trace does not match the Fourier multiplier", result)
        return result

    def calibrate_g(self, d_star: float, radii: Sequence[float] = DEFAULT_FLUX_RADII) -> Dict[str, Any]:
        """
        g_{n,γ} из -d*_γ ∮ y^{1-2γ}∂_νΓ = 1 на полусферах радиуса ρ.
        """
        if not self.cfg.green_admissible:
            return {"g_n_gamma": float("nan"), "flux_spread": float("nan"), "fluxes": []}
        unit = AtomSum.monomial(self.cfg.context(), 1.0, r=lattice(-self.cfg.n, 1))
        fluxes = [weighted_hemisphere_flux(unit, rho) for rho in radii]
        spread = (max(fluxes) - min(fluxes)) / abs(np.mean(fluxes))
        if spread > FLUX_RHO_TOL:
            raise CalibrationError("hemisphere flux depends on the radius", {"fluxes": fluxes, "spread": spread})
        g_value = -1.0 / (d_star * float(np.mean(fluxes)))
        closed = (self.cfg.n - 2.0 * self.cfg.gamma) * hemisphere_weight_integral(self.cfg.n, self.cfg.gamma)
        self.logger.info(f"g_n_gamma = {g_value:.8g} (flux spread {spread:.2e})")
        return {
            "g_n_gamma": g_value,
            "fluxes": fluxes,
            "flux_spread": spread,
            "flux_closed_form_relative": abs(-float(np.mean(fluxes)) - closed) / closed
        }

    def run(self, oracle: Callable, fd_options: Optional[Dict[str, Any]] = None) -> ConstantSet:
        self.logger.info(f"=== Калибровка констант (n={self.cfg.n}, γ={self.cfg.gamma}) ===")
        residuals: Dict[str, Any] = {}
        residuals.update(self.check_c_n3())
        c_n3 = residuals["c_n3_beta"]

        trace = self.calibrate_d_gamma(oracle, fd_options)
        d_gamma = trace["d_gamma"]
        d_star = d_gamma / (2.0 * self.cfg.gamma)
        residuals["trace_misfit"] = trace["misfit"]

        flux = self.calibrate_g(d_star)
        residuals["flux_spread"] = flux["flux_spread"]
        residuals["fluxes"] = flux["fluxes"]

        return ConstantSet(
            c_n3=c_n3,
            p_n_gamma=1.0 / c_n3,
            d_gamma=d_gamma,
            d_star_gamma=d_star,
            g_n_gamma=flux["g_n_gamma"],
            residuals=residuals
        )


@lru_cache(maxsize=32)
def _calibrate_cached(n: int, gamma: float) -> ConstantSet:
    from kernels.degenerate_fd import fourier_fractional_oracle
    return ConstantCalibrator(FracConfig(n, gamma)).run(fourier_fractional_oracle)


def calibrate_constants(
    cfg: FracConfig,
    oracle: Optional[Callable] = None,
    fd_options: Optional[Dict[str, Any]] = None
) -> ConstantSet:
    """
    Точка входа калибровки. Без явного оракула результат кешируется по (n, γ).
    """
    if oracle is None and not fd_options:
        return _calibrate_cached(cfg.n, cfg.gamma)
    if oracle is None:
        from kernels.degenerate_fd import fourier_fractional_oracle
        oracle = fourier_fractional_oracle
    return ConstantCalibrator(cfg).run(oracle, fd_options)
