"""Тесты для D-гармоник и квадратуры на полусфере"""

import math

import numpy as np
import pytest

from errors import QuadratureError
from kernels.flat_kernels import FracConfig
from kernels.hemisphere_spectral import (
    HarmonicBasis,
    build_harmonics,
    eigenvalue_of,
    exact_weighted_integral,
    expand_in_harmonics,
    gram_matrix,
    hemisphere_moment,
    hemisphere_quadrature,
    rayleigh_quotient,
    run_harmonics,
    sphere_moment,
)
from kernels.homogeneous_algebra import TWO_GAMMA_SYMBOL, AtomSum, apply_flat_D, lattice


class TestQuadrature:
    """Тесты для правил на S^n_+"""

    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.parametrize("gamma", [0.25, 0.75])
    def test_weighted_area(self, n, gamma):
        """∫ y^{1-2γ}dσ совпадает с точным моментом"""
        quad = hemisphere_quadrature(n, gamma, exactness=8)
        exact = hemisphere_moment(n, 1.0 - 2.0 * gamma, (0,) * n)
        assert quad.integrate(np.ones(quad.size)) == pytest.approx(exact, rel=1e-12)

    def test_polynomial_moment(self):
        """∫ y^{1-2γ}·y²x₁²x₂² dσ на S²_+"""
        gamma = 0.25
        quad = hemisphere_quadrature(2, gamma, exactness=10)
        values = quad.y ** 2 * quad.x[:, 0] ** 2 * quad.x[:, 1] ** 2
        exact = hemisphere_moment(2, 3.0 - 2.0 * gamma, (2, 2))
        assert quad.integrate(values) == pytest.approx(exact, rel=1e-12)

    def test_sphere_moments(self):
        assert sphere_moment((0,)) == pytest.approx(2.0)
        assert sphere_moment((0, 0)) == pytest.approx(2.0 * math.pi)
        assert sphere_moment((2, 0)) == pytest.approx(math.pi)
        assert sphere_moment((1, 0)) == 0.0

    def test_half_circle_length(self):
        """n = 1, вес y⁰: длина полуокружности"""
        assert hemisphere_moment(1, 0.0, (0,)) == pytest.approx(math.pi)

    def test_non_integrable_weight(self):
        with pytest.raises(QuadratureError):
            hemisphere_quadrature(2, 0.25, y_power=-1.0)
        with pytest.raises(QuadratureError):
            hemisphere_moment(2, -1.5, (0, 0))

    def test_nodes_on_upper_hemisphere(self):
        quad = hemisphere_quadrature(3, 0.75, exactness=6)
        np.testing.assert_allclose(np.sum(quad.points ** 2, axis=1), 1.0, rtol=1e-13)
        assert np.all(quad.y > 0.0)

    def test_non_finite_integrand(self):
        quad = hemisphere_quadrature(1, 0.25, exactness=4)
        values = np.ones(quad.size)
        values[0] = np.nan
        with pytest.raises(QuadratureError):
            quad.integrate(values)

    def test_exact_weighted_integral(self):
        """Сумма точных моментов по атомам с весом y^{1-2γ}"""
        gamma = 0.25
        ctx = FracConfig(2, gamma).context()
        u = AtomSum.monomial(ctx, 3.0, y=lattice(2), beta=(2, 0)) + AtomSum.monomial(ctx, 1.0, y=lattice(0, 1))
        expected = 3.0 * hemisphere_moment(2, 3.0 - 2.0 * gamma, (2, 0)) + hemisphere_moment(2, 1.0, (0, 0))
        assert exact_weighted_integral(u) == pytest.approx(expected, rel=1e-12)


class TestHarmonicConstruction:
    """Тесты для построения D-гармоник"""

    def test_dirichlet_seed_x_squared(self):
        """n=1, Дирихле, m=2: y^{2γ}x² - y^{2γ+2}/(2γ+2)"""
        cfg = FracConfig(1, 0.25)
        (e,) = build_harmonics(cfg, "dirichlet", 2)
        ctx = cfg.context()
        expected = (
            AtomSum.monomial(ctx, 1.0, y=lattice(0, 1), beta=(2,))
            + AtomSum.monomial(ctx, -1.0 / 2.5, y=lattice(2, 1))
        )
        assert e.body.allclose(expected, rtol=1e-14)
        assert e.degree == lattice(2, 1)

    def test_dirichlet_seed_x_squared_exact(self):
        """То же тождество с символьным τ = 2γ"""
        cfg = FracConfig(1, 0.75)
        (e,) = build_harmonics(cfg, "dirichlet", 2, exact=True)
        ctx = cfg.context(exact=True)
        expected = (
            AtomSum.monomial(ctx, 1, y=lattice(0, 1), beta=(2,))
            + AtomSum.monomial(ctx, -1 / (TWO_GAMMA_SYMBOL + 2), y=lattice(2, 1))
        )
        assert (e.body - expected).is_empty
        assert apply_flat_D(e.body).is_empty

    def test_neumann_seed_x_squared(self):
        """n=1, Нейман, m=2: x² - y²/(2-2γ)"""
        cfg = FracConfig(1, 0.25)
        (e,) = build_harmonics(cfg, "neumann", 2)
        ctx = cfg.context()
        expected = AtomSum.monomial(ctx, 1.0, beta=(2,)) + AtomSum.monomial(ctx, -1.0 / 1.5, y=lattice(2))
        assert e.body.allclose(expected, rtol=1e-14)

    @pytest.mark.parametrize("sector", ["dirichlet", "neumann"])
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_dimension_and_annihilation(self, sector, n):
        """C(m+n-1, n-1) гармоник степени m, каждая в ядре D"""
        cfg = FracConfig(n, 0.3)
        for m in range(6):
            harmonics = build_harmonics(cfg, sector, m)
            assert len(harmonics) == math.comb(m + n - 1, n - 1)
            for e in harmonics:
                assert apply_flat_D(e.body).is_zero(1e-10, scale=e.body.max_abs_coeff())

    @pytest.mark.parametrize("n", [1, 2])
    def test_exact_annihilation(self, n):
        cfg = FracConfig(n, 0.75)
        for sector in ("dirichlet", "neumann"):
            for e in build_harmonics(cfg, sector, 5, exact=True):
                assert apply_flat_D(e.body).is_empty

    def test_invalid_arguments(self):
        cfg = FracConfig(1, 0.25)
        with pytest.raises(ValueError):
            build_harmonics(cfg, "robin", 1)
        with pytest.raises(ValueError):
            build_harmonics(cfg, "neumann", -1)


class TestSpectrum:
    """Тесты для собственных значений и ортонормировки"""

    def test_eigenvalue_formula(self):
        assert eigenvalue_of(2, 0.25, 3) == pytest.approx(13.5)
        assert eigenvalue_of(1, 0.75, 0) == 0.0

    @pytest.mark.parametrize("n", [1, 2])
    @pytest.mark.parametrize("gamma", [0.25, 0.75])
    @pytest.mark.parametrize("sector", ["dirichlet", "neumann"])
    def test_rayleigh_quotients(self, n, gamma, sector):
        """Отношение Рэлея совпадает с k(k+n-2γ) до 1e-6"""
        cfg = FracConfig(n, gamma)
        for m in range(5):
            for e in build_harmonics(cfg, sector, m):
                assert rayleigh_quotient(e) == pytest.approx(e.eigenvalue, rel=1e-6, abs=1e-10)

    def test_dirichlet_eigenvalue_uses_shifted_degree(self):
        cfg = FracConfig(2, 0.25)
        (e, *_) = build_harmonics(cfg, "dirichlet", 1)
        assert e.eigenvalue == pytest.approx(1.5 * (1.5 + 2 - 0.5))

    @pytest.mark.parametrize("sector", ["dirichlet", "neumann"])
    def test_orthonormal_within_degree(self, sector):
        basis = HarmonicBasis(FracConfig(2, 0.75), sector, 3)
        for m, harmonics in basis.by_degree.items():
            gram = gram_matrix([h.body for h in harmonics], basis.quad)
            np.testing.assert_allclose(gram, np.eye(len(harmonics)), atol=1e-10)

    def test_different_degrees_orthogonal(self):
        """Гармоники разных степеней ортогональны во взвешенном L²"""
        basis = HarmonicBasis(FracConfig(2, 0.25), "neumann", 3)
        bodies = [h.body for h in basis.harmonics()]
        gram = gram_matrix(bodies, basis.quad)
        np.testing.assert_allclose(gram, np.eye(len(bodies)), atol=1e-9)

    def test_expand_harmonic_in_basis(self):
        cfg = FracConfig(1, 0.25)
        (e,) = build_harmonics(cfg, "neumann", 2)
        result = expand_in_harmonics(e.body, cfg, "neumann", 3)
        assert result["residual"] < 1e-10
        assert abs(result["coefficients"][0][0]) < 1e-10

    def test_run_harmonics_report(self):
        out = run_harmonics(FracConfig(2, 0.25), "dirichlet", 2)
        assert len(out) == 1 + 2 + 3
        for item in out:
            assert item["sector"] == "dirichlet"
            assert item["rayleigh_quotient"] == pytest.approx(item["eigenvalue"], rel=1e-6)
            assert AtomSum.from_json(FracConfig(2, 0.25).context(), item["body"])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
