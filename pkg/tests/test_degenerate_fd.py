"""Тесты для конечных объёмов, дробного следа и оракулов"""

import math

import numpy as np
import pytest
from unittest.mock import patch

from errors import ConfigError, FitError
from kernels.degenerate_fd import (
    DegenerateFDSolver,
    HalfGridField,
    bessel_extension_profile,
    bessel_trace_constant,
    boundary_data_from,
    boundary_structure_check,
    calibrate_trace_constant,
    convergence_study,
    default_grading,
    fit_boundary_expansion,
    fourier_fractional_oracle,
    fractional_trace,
    make_half_grid,
    richardson_order,
    run_fd_solve,
    run_trace,
    solve_dirichlet_fd,
    solve_neumann_fd,
)
from kernels.flat_kernels import FracConfig
from kernels.homogeneous_algebra import AtomSum, evaluate_many, lattice
from kernels.metric_model import flat_jet, jet_from_coefficients


GAMMA = 0.25


def _power_profile(grid):
    """Точное решение y^{2γ} с нулём на y = 0"""
    return lambda yy, xx: yy ** (2.0 * grid.gamma)


def _manufactured(gamma):
    """x₁² - y²/(2-2γ) + y^{2γ}x₁ при n = 1"""
    ctx = FracConfig(1, gamma).context()
    return (
        AtomSum.monomial(ctx, 1.0, beta=(2,))
        + AtomSum.monomial(ctx, -1.0 / (2.0 - 2.0 * gamma), y=lattice(2))
        + AtomSum.monomial(ctx, 1.0, y=lattice(0, 1), beta=(1,))
    )


class TestHalfGrid:
    """Тесты для градуированной сетки"""

    def test_default_grading(self):
        assert default_grading(0.25) == 2.0
        assert default_grading(0.1) == 3.0
        assert default_grading(0.75) == 2.0

    def test_nodes_and_masses(self):
        grid = make_half_grid(GAMMA, 2, 10, 2.0, [4, 6])
        assert grid.y[0] == 0.0
        assert grid.y[-1] == pytest.approx(2.0)
        assert grid.x_shape == (4, 6)
        assert grid.node_count == 11 * 24
        assert np.sum(grid.masses) == pytest.approx(2.0 ** 1.5 / 1.5, rel=1e-12)
        assert np.all(grid.transmissibility > 0)

    def test_box_nodes(self):
        grid = make_half_grid(GAMMA, 1, 4, 1.0, 8, periodic=False, box=[(0.0, 2.0)])
        np.testing.assert_allclose(grid.x_axes[0], np.linspace(0.0, 2.0, 9))

    @pytest.mark.parametrize("J,Y,x_nodes", [(1, 1.0, 4), (4, 0.0, 4), (4, 1.0, [4]), (4, 1.0, 1)])
    def test_invalid_grid(self, J, Y, x_nodes):
        with pytest.raises(ConfigError):
            make_half_grid(GAMMA, 2, J, Y, x_nodes)

    def test_node_limit(self):
        with patch("kernels.degenerate_fd.get_fd_max_nodes", return_value=10):
            with pytest.raises(ConfigError) as exc_info:
                make_half_grid(GAMMA, 1, 8, 1.0, 8)
        assert exc_info.value.field == "grid"


class TestFDSolver:
    """Тесты для сборки и решения"""

    def test_constant_is_reproduced(self):
        grid = make_half_grid(GAMMA, 1, 16, 1.0, 8)
        U = solve_dirichlet_fd(grid, None, 1.0)
        np.testing.assert_allclose(U.values, 1.0, atol=1e-12)
        np.testing.assert_allclose(U.flux, 0.0, atol=1e-10)

    def test_power_profile_is_exact(self):
        """A + B·y^{2γ} даёт точное локальное решение двухточечного потока"""
        grid = make_half_grid(GAMMA, 1, 16, 1.0, 4)
        U = solve_dirichlet_fd(grid, None, 0.0, outer=_power_profile(grid))
        expected = grid.y ** (2.0 * GAMMA)
        np.testing.assert_allclose(U.values, np.repeat(expected[:, None], 4, axis=1), atol=1e-12)
        np.testing.assert_allclose(U.flux, 2.0 * GAMMA, rtol=1e-10)

    def test_neumann_power_profile(self):
        grid = make_half_grid(0.75, 1, 16, 1.0, 4)
        U = solve_neumann_fd(grid, None, 1.5, outer=_power_profile(grid))
        expected = grid.y ** 1.5
        np.testing.assert_allclose(U.values[:, 0], expected, atol=1e-12)
        assert U.kind == "neumann"

    def test_unknown_bottom(self):
        grid = make_half_grid(GAMMA, 1, 4, 1.0, 4)
        with pytest.raises(ValueError):
            DegenerateFDSolver(grid).solve("robin", 0.0)

    def test_jet_mismatch(self):
        grid = make_half_grid(GAMMA, 1, 4, 1.0, 4)
        jet = flat_jet(2, GAMMA)
        with pytest.raises(ConfigError) as exc_info:
            DegenerateFDSolver(grid, jet)
        assert exc_info.value.field == "metric"

    def test_curved_solver_runs(self):
        grid = make_half_grid(GAMMA, 1, 16, 0.5, 8, periodic=False, box=[(-0.5, 0.5)])
        jet = jet_from_coefficients(1, GAMMA, 4, {(2, (0,)): [[0.1]]})
        U = solve_dirichlet_fd(grid, jet, 1.0, outer=1.0)
        assert U.metadata["curved"]
        assert np.all(np.isfinite(U.values))

    def test_field_rows_and_summary(self):
        grid = make_half_grid(GAMMA, 2, 4, 1.0, [3, 2])
        U = solve_dirichlet_fd(grid, None, 2.0)
        rows = U.rows()
        assert len(rows) == grid.node_count
        assert all(len(row) == 4 for row in rows)
        summary = U.summary()
        assert summary["x_shape"] == [3, 2]
        assert summary["trace_range"] == [pytest.approx(2.0), pytest.approx(2.0)]

    def test_run_fd_solve(self):
        cfg = FracConfig(1, GAMMA)
        problem = {"bottom": "dirichlet", "boundary": 1.0, "outer": 1.0, "grid": {"J": 8, "x_nodes": 4}}
        U = run_fd_solve(cfg, None, problem)
        np.testing.assert_allclose(U.trace, 1.0)


class TestTrace:
    """Тесты для подгонки у y = 0 и дробного следа"""

    def test_fit_power_profile(self):
        grid = make_half_grid(GAMMA, 1, 32, 1.0, 4)
        U = solve_dirichlet_fd(grid, None, 0.0, outer=_power_profile(grid))
        fit = fit_boundary_expansion(U, layers=6)
        np.testing.assert_allclose(fit.A0, 0.0, atol=1e-10)
        np.testing.assert_allclose(fit.B0, 1.0, rtol=1e-9)
        trace = fractional_trace(U, d_gamma=2.0, layers=6)
        np.testing.assert_allclose(trace.values, -2.0, rtol=1e-9)

    def test_fit_needs_layers(self):
        grid = make_half_grid(GAMMA, 1, 4, 1.0, 4)
        U = solve_dirichlet_fd(grid, None, 1.0)
        with pytest.raises(FitError):
            fit_boundary_expansion(U, layers=10)
        with pytest.raises(FitError):
            fit_boundary_expansion(U, layers=2)

    def test_fourier_oracle(self):
        x = 2.0 * math.pi * np.arange(32) / 32
        result = fourier_fractional_oracle(np.cos(2.0 * x), GAMMA)
        np.testing.assert_allclose(result, 2.0 ** (2.0 * GAMMA) * np.cos(2.0 * x), atol=1e-12)

    def test_bessel_profile_slope(self):
        """φ(y) = 1 - y^{2γ}/d_γ + o(y^{2γ})"""
        y = np.array([1e-6])
        slope = (bessel_extension_profile(GAMMA, y)[0] - 1.0) / y[0] ** (2.0 * GAMMA)
        assert slope == pytest.approx(-1.0 / bessel_trace_constant(GAMMA), rel=1e-3)
        assert bessel_extension_profile(GAMMA, np.array([0.0]))[0] == 1.0

    def test_calibrate_trace_constant(self):
        result = calibrate_trace_constant(FracConfig(1, GAMMA))
        assert result["misfit"] <= 0.02
        assert result["reference_relative"] <= 0.05
        assert result["d_gamma"] > 0

    def test_run_trace_with_known_constant(self):
        cfg = FracConfig(1, 0.75)
        report = run_trace(cfg, frequency=[2], J=200, d_gamma=bessel_trace_constant(0.75))
        assert report["misfit"] <= 0.05
        assert len(report["trace"]) == 32

    def test_run_trace_frequency_length(self):
        with pytest.raises(ConfigError):
            run_trace(FracConfig(2, GAMMA), frequency=[1], d_gamma=1.0)


class TestConvergence:
    """Тесты для сходимости и структуры A₀ + A₁y + B₀y^{2γ}"""

    def test_boundary_data(self):
        exact = _manufactured(GAMMA)
        x = np.array([[0.3], [-0.7]])
        dirichlet, outer = boundary_data_from(exact, "dirichlet")
        np.testing.assert_allclose(evaluate_many(dirichlet, np.zeros(2), x), x[:, 0] ** 2)
        neumann, _ = boundary_data_from(exact, "neumann")
        np.testing.assert_allclose(evaluate_many(neumann, np.zeros(2), x), 2.0 * GAMMA * x[:, 0])
        assert outer(np.array([0.5]), np.array([[0.3]]))[0] == pytest.approx(
            0.09 - 0.25 / 1.5 + 0.5 ** 0.5 * 0.3
        )

    def test_richardson_order(self):
        coarse = HalfGridField(None, np.full((3, 3), 4.0), "dirichlet", np.zeros(3), np.zeros(3))
        medium = HalfGridField(None, np.full((5, 5), 1.0), "dirichlet", np.zeros(5), np.zeros(5))
        fine = HalfGridField(None, np.full((9, 9), 0.25), "dirichlet", np.zeros(9), np.zeros(9))
        assert richardson_order(coarse, medium, fine) == pytest.approx(2.0)
        settled = HalfGridField(None, np.full((9, 9), 1.0), "dirichlet", np.zeros(9), np.zeros(9))
        assert richardson_order(coarse, medium, settled) == math.inf

    def test_second_order_convergence(self):
        study = convergence_study(FracConfig(1, GAMMA), _manufactured(GAMMA), "dirichlet", (8, 16, 32))
        assert study["richardson_order"] >= 1.5
        assert study["errors"][-1] < study["errors"][0]

    def test_structure_flat(self):
        report = boundary_structure_check(None, lambda x: np.cos(np.pi * x[:, 0]))
        assert report["consistent"]
        assert len(report["A0"]) == len(report["B0"])

    @pytest.mark.parametrize("linear", [0.0, 0.5])
    def test_structure_separates_smooth_quadratic(self, linear):
        """Гладкий член A₂y² не переходит в A₁y"""
        grid = make_half_grid(GAMMA, 1, 64, 0.5, 32, periodic=False, box=[(-0.5, 0.5)])
        y = grid.y[:, None]
        profile = np.cos(np.pi * grid.x_axes[0])[None, :]
        values = profile + linear * y + 0.8 * y ** (2.0 * GAMMA) + 3.3 * y ** 2 * profile
        field = HalfGridField(grid, values, "dirichlet", values[0], np.zeros(32))

        with patch("kernels.degenerate_fd.solve_dirichlet_fd", return_value=field):
            report = boundary_structure_check(None, lambda x: np.cos(np.pi * x[:, 0]), grid=grid)

        np.testing.assert_allclose(report["A1"], linear, atol=1e-6)
        np.testing.assert_allclose(report["B0"], 0.8, atol=1e-6)
        if linear:
            assert not report["consistent"]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
