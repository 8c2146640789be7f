"""Тесты для плоских ядер и нормировочных констант"""

import math

import numpy as np
import pytest
from unittest.mock import patch

from errors import CalibrationError, LatticeError
from kernels.flat_kernels import (
    ConstantCalibrator,
    ConstantSet,
    FracConfig,
    compute_c_n3,
    green_kernel_flat,
    hemisphere_weight_integral,
    p_n_gamma,
    poisson_kernel_flat,
    poisson_mass,
    sphere_area,
    weighted_hemisphere_flux,
)
from kernels.homogeneous_algebra import AtomSum, apply_flat_D, lattice


@pytest.fixture
def fake_constants():
    """Константы без численной калибровки следа"""
    return ConstantSet(
        c_n3=1.0, p_n_gamma=1.0, d_gamma=1.0, d_star_gamma=2.0, g_n_gamma=0.3, residuals={}
    )


class TestFracConfig:
    """Тесты для конфигурации (n, γ)"""

    def test_s_and_gap(self):
        cfg = FracConfig(2, 0.25)
        assert cfg.s == pytest.approx(1.25)
        assert cfg.spectral_gap == pytest.approx(1.25 * 0.75)

    def test_green_admissible(self):
        assert FracConfig(1, 0.25).green_admissible
        assert not FracConfig(1, 0.75).green_admissible

    @pytest.mark.parametrize("n,gamma", [(0, 0.25), (2, 0.5), (2, 1.0), (2, -0.1)])
    def test_invalid(self, n, gamma):
        with pytest.raises(LatticeError):
            FracConfig(n, gamma)


class TestConstants:
    """Тесты для c_{n,3} и p_{n,γ}"""

    def test_sphere_area(self):
        assert sphere_area(1) == pytest.approx(2.0 * math.pi)
        assert sphere_area(2) == pytest.approx(4.0 * math.pi)

    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.parametrize("gamma", [0.25, 0.6, 0.75, 0.9])
    def test_c_n3_beta_matches_quadrature(self, n, gamma):
        cfg = FracConfig(n, gamma)
        closed = compute_c_n3(cfg, "beta")
        oracle = compute_c_n3(cfg, "quadrature")
        assert abs(closed - oracle) / oracle <= 1e-10

    def test_c_n3_n1_closed_form(self):
        """n = 1, γ = 1/4: √π·Γ(1/4)/Γ(3/4)"""
        expected = math.sqrt(math.pi) * math.gamma(0.25) / math.gamma(0.75)
        assert compute_c_n3(FracConfig(1, 0.25)) == pytest.approx(expected, rel=1e-14)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            compute_c_n3(FracConfig(1, 0.25), "monte-carlo")

    def test_p_times_c(self):
        cfg = FracConfig(3, 0.75)
        assert p_n_gamma(cfg) * compute_c_n3(cfg) == pytest.approx(1.0, rel=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.parametrize("y", [0.1, 1.0])
    def test_poisson_mass(self, n, y):
        """∫ K(y, x) dx = 1 независимо от y"""
        result = poisson_mass(FracConfig(n, 0.25), y)
        assert abs(result["mass"] - 1.0) <= 1e-4
        assert result["tail"] <= result["tail_bound"] * (1.0 + 1e-9)

    def test_poisson_mass_needs_positive_y(self):
        with pytest.raises(LatticeError):
            poisson_mass(FracConfig(1, 0.25), 0.0)


class TestKernels:
    """Тесты для K и Γ"""

    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.parametrize("gamma", [0.25, 0.75])
    def test_poisson_kernel_is_d_harmonic(self, n, gamma):
        cfg = FracConfig(n, gamma)
        kernel = poisson_kernel_flat(cfg)
        assert apply_flat_D(kernel).is_zero(1e-10, scale=kernel.max_abs_coeff())
        assert kernel.degree == lattice(-n)

    def test_poisson_kernel_coefficient(self):
        cfg = FracConfig(2, 0.25)
        kernel = poisson_kernel_flat(cfg)
        (coeff,) = kernel.coefficients().values()
        assert coeff == pytest.approx(p_n_gamma(cfg))

    def test_green_kernel(self, fake_constants):
        cfg = FracConfig(3, 0.75)
        kernel = green_kernel_flat(cfg, fake_constants)
        assert apply_flat_D(kernel).is_zero(1e-10, scale=kernel.max_abs_coeff())
        assert kernel.degree == lattice(-3, 1)

    def test_green_needs_admissible_gamma(self, fake_constants):
        with pytest.raises(LatticeError):
            green_kernel_flat(FracConfig(1, 0.75), fake_constants)


class TestFluxCalibration:
    """Тесты для калибровки g_{n,γ} по потоку"""

    @pytest.mark.parametrize("n,gamma", [(1, 0.25), (2, 0.75), (3, 0.25)])
    def test_flux_is_radius_independent(self, n, gamma):
        cfg = FracConfig(n, gamma)
        unit = AtomSum.monomial(cfg.context(), 1.0, r=lattice(-n, 1))
        fluxes = [weighted_hemisphere_flux(unit, rho) for rho in (0.5, 1.0, 2.0)]
        closed = (n - 2.0 * gamma) * hemisphere_weight_integral(n, gamma)
        np.testing.assert_allclose(fluxes, -closed, rtol=1e-4)

    def test_calibrate_g(self):
        cfg = FracConfig(2, 0.25)
        result = ConstantCalibrator(cfg).calibrate_g(d_star=1.0)
        closed = (2 - 0.5) * hemisphere_weight_integral(2, 0.25)
        assert result["g_n_gamma"] == pytest.approx(1.0 / closed, rel=1e-4)
        assert result["flux_spread"] <= 1e-4

    def test_calibrate_g_not_admissible(self):
        result = ConstantCalibrator(FracConfig(1, 0.75)).calibrate_g(d_star=1.0)
        assert math.isnan(result["g_n_gamma"])
        assert result["fluxes"] == []


class TestConstantCalibrator:
    """Тесты для полного прогона калибровки (след замокан)"""

    def test_run_collects_residuals(self):
        cfg = FracConfig(2, 0.25)
        trace = {"d_gamma": 1.2, "misfit": 0.001}
        with patch("kernels.degenerate_fd.calibrate_trace_constant", return_value=trace):
            constants = ConstantCalibrator(cfg).run(oracle=lambda *a, **k: None)

        assert constants.d_gamma == 1.2
        assert constants.d_star_gamma == pytest.approx(1.2 / 0.5)
        assert constants.p_n_gamma * constants.c_n3 == pytest.approx(1.0)
        assert set(constants.residuals) == {
            "c_n3_beta", "c_n3_quadrature", "c_n3_relative", "trace_misfit", "flux_spread", "fluxes"
        }
        assert constants.to_dict()["residuals"]["trace_misfit"] == 0.001

    def test_large_trace_misfit_raises(self):
        cfg = FracConfig(1, 0.25)
        trace = {"d_gamma": 1.0, "misfit": 0.5}
        with patch("kernels.degenerate_fd.calibrate_trace_constant", return_value=trace):
            with pytest.raises(CalibrationError) as exc_info:
                ConstantCalibrator(cfg).run(oracle=lambda *a, **k: None)
        assert exc_info.value.report["misfit"] == 0.5

    def test_c_n3_disagreement_raises(self):
        cfg = FracConfig(1, 0.25)
        with patch("kernels.flat_kernels.c_n3_radial_quadrature", return_value=1.0):
            with pytest.raises(CalibrationError):
                ConstantCalibrator(cfg).check_c_n3()


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
