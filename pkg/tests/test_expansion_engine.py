"""Тесты для конвейера поправок к ядрам"""

import pytest
from unittest.mock import patch

import numpy as np

from errors import LatticeError, PipelineError, SolverError
from kernels.expansion_engine import (
    ExpansionPipeline,
    KernelExpansion,
    annulus_cross_validation,
    boundary_restriction,
    conformal_covariance_check,
    convolution_check,
    expand,
    locally_flat_grade_sets,
    locally_flat_max_grade,
    pe_expected_grade_set,
    remainder_tag,
    residual_decay_check,
    run_expand,
)
from kernels.flat_kernels import ConstantSet, FracConfig, poisson_kernel_flat
from kernels.homogeneous_algebra import AtomSum, lattice, sector_of
from kernels.homogeneous_solver import HomogeneousSolver
from kernels.metric_model import flat_jet, jet_from_coefficients, pe_locally_flat_jet


S2 = np.array([[0.1, 0.03], [0.03, -0.02]])


@pytest.fixture
def y2s():
    return jet_from_coefficients(2, 0.25, 4, {(2, (0, 0)): S2})


@pytest.fixture
def fake_constants():
    """g_{n,γ} без конечно-объёмной калибровки d_γ"""
    constants = ConstantSet(
        c_n3=1.0, p_n_gamma=1.0, d_gamma=1.0, d_star_gamma=2.0, g_n_gamma=0.2, residuals={}
    )
    with patch("kernels.flat_kernels.calibrate_constants", return_value=constants):
        yield constants


class TestKernelExpansion:
    """Тесты для контейнера разложения"""

    def test_remainder_tag(self):
        assert remainder_tag("poisson", 2) == "y^{2γ}C^{4,α}"
        assert remainder_tag("green_neumann", 1) == "C^{2,α}"
        assert remainder_tag("boundary_green", 3) == "C^{6,α}(M)"

    def test_unknown_kind(self):
        cfg = FracConfig(1, 0.25)
        with pytest.raises(ValueError):
            KernelExpansion(kind="heat", base=poisson_kernel_flat(cfg))

    def test_grades_must_increase(self):
        cfg = FracConfig(2, 0.25)
        ctx = cfg.context()
        term = AtomSum.monomial(ctx, 1.0, y=lattice(0, 1), r=lattice(-5, -1))
        with pytest.raises(PipelineError):
            KernelExpansion(kind="poisson", base=poisson_kernel_flat(cfg), corrections=[(lattice(-3), term)])

    def test_sector_purity(self):
        cfg = FracConfig(2, 0.25)
        term = AtomSum.monomial(cfg.context(), 1.0, y=lattice(2))
        with pytest.raises(PipelineError) as exc_info:
            KernelExpansion(kind="poisson", base=poisson_kernel_flat(cfg), corrections=[(lattice(2), term)])
        assert exc_info.value.piece is term

    def test_json_round_trip(self, y2s):
        expansion = expand(y2s, "poisson", 2)
        restored = KernelExpansion.from_json(expansion.to_json())
        assert restored.kind == "poisson"
        assert restored.homogeneities() == expansion.homogeneities()
        assert restored.truncated().allclose(expansion.truncated(), rtol=1e-12)
        assert restored.remainder_tag == expansion.remainder_tag


class TestPipeline:
    """Тесты для последовательного убивания дефицитов"""

    def test_flat_jet_has_no_corrections(self, fake_constants):
        jet = flat_jet(2, 0.25)
        for kind in ("poisson", "green"):
            expansion = expand(jet, kind, 3)
            assert expansion.corrections == []
            assert expansion.next_grade is None

    def test_y2s_first_poisson_step(self, y2s):
        """Дефицит градуировки -1-2γ даёт поправку однородности 0"""
        expansion = expand(y2s, "poisson", 1)
        (h, term), = expansion.corrections
        assert h == lattice(0)
        assert term.is_homogeneous and term.degree == h
        assert all(sector_of(term.ctx, a.y_exp) == "dirichlet" for a in term.atoms)
        assert expansion.steps[0]["killed_grade"] == lattice(-1, -1).to_dict()

    def test_corrections_strictly_increase(self, y2s):
        expansion = expand(y2s, "poisson", 3)
        values = [h.value(0.25) for h in expansion.homogeneities()]
        assert values == sorted(values)
        assert len(set(values)) == len(values)

    def test_max_grade_stops_early(self, y2s):
        expansion = expand(y2s, "poisson", 5, max_grade=0.5)
        assert all(h.value(0.25) <= 0.5 for h in expansion.homogeneities())

    def test_green_corrections_are_neumann(self, y2s, fake_constants):
        expansion = expand(y2s, "green", 2)
        assert expansion.corrections
        for _, term in expansion.corrections:
            assert all(sector_of(term.ctx, a.y_exp) == "neumann" for a in term.atoms)

    def test_solver_failure_becomes_pipeline_error(self, y2s):
        with patch.object(HomogeneousSolver, "solve", side_effect=SolverError("no ansatz")):
            with pytest.raises(PipelineError) as exc_info:
                expand(y2s, "poisson", 1)
        assert exc_info.value.piece is not None
        assert isinstance(exc_info.value.__cause__, SolverError)

    def test_negative_order(self, y2s):
        with pytest.raises(ValueError):
            ExpansionPipeline(y2s, "poisson").run(-1)

    def test_unknown_kind(self, y2s):
        with pytest.raises(ValueError):
            expand(y2s, "heat", 1)

    def test_boundary_restriction_needs_green(self, y2s):
        with pytest.raises(ValueError):
            boundary_restriction(expand(y2s, "poisson", 1))

    def test_boundary_green_lives_on_boundary(self, y2s, fake_constants):
        expansion = expand(y2s, "boundary", 2)
        assert expansion.kind == "boundary_green"
        assert all(a.y_exp.is_zero for a in expansion.base.atoms)
        for _, term in expansion.corrections:
            assert all(a.y_exp.is_zero for a in term.atoms)


class TestLocallyFlatGradeSets:
    """Тесты для однородностей при локально плоской конформной бесконечности"""

    def test_sets(self):
        assert locally_flat_grade_sets("poisson", 2, 0.25) == [lattice(0), lattice(1), lattice(2)]
        assert locally_flat_grade_sets("green", 2, 0.25) == [lattice(0, 1), lattice(1, 1)]
        assert locally_flat_max_grade("boundary", 2, 0.25) == pytest.approx(1.5)

    @pytest.mark.parametrize("n", [2, 3])
    @pytest.mark.parametrize("kind", ["poisson", "green", "boundary"])
    def test_pe_locally_flat_homogeneities(self, n, kind, fake_constants):
        jet = pe_locally_flat_jet(n, 0.25, seed=11)
        expansion = expand(jet, kind, 8, max_grade=locally_flat_max_grade(kind, n, 0.25))
        assert expansion.homogeneities() == pe_expected_grade_set(kind, n, 0.25)

    def test_expected_set_skips_unreached_start(self):
        assert pe_expected_grade_set("poisson", 2, 0.25) == locally_flat_grade_sets("poisson", 2, 0.25)
        assert pe_expected_grade_set("poisson", 3, 0.25) == [lattice(1), lattice(2)]
        assert pe_expected_grade_set("green", 3, 0.25) == [lattice(1, 1)]

    def test_odd_layer_is_outside_atom_span(self):
        """Слой y³ даёт дефицит, чётный по y: конечного решения в атомах нет"""
        layer = 0.1 * np.diag([1.0, -0.5, -0.5])
        jet = jet_from_coefficients(3, 0.25, 5, {(3, (0, 0, 0)): layer})
        with patch("kernels.homogeneous_solver.get_max_enlargements", return_value=1):
            with pytest.raises(PipelineError) as exc_info:
                expand(jet, "poisson", 1)
        assert isinstance(exc_info.value.__cause__, SolverError)
        assert all(a.y_exp.integer_part % 2 == 0 for a in exc_info.value.piece.atoms)


class TestChecks:
    """Тесты для затухания остатка, свёртки и конформной ковариантности"""

    def test_residual_decay_improves(self, y2s):
        expansion = expand(y2s, "poisson", 1)
        before = residual_decay_check(y2s, expansion, m=0)
        after = residual_decay_check(y2s, expansion, m=1)
        assert after["slope"] - before["slope"] >= 0.9

    def test_residual_decay_bulk_only(self, y2s, fake_constants):
        with pytest.raises(PipelineError):
            residual_decay_check(y2s, expand(y2s, "boundary", 1))

    def test_convolution_n1(self):
        report = convolution_check(FracConfig(1, 0.25), samples=[(0.5, [0.3]), (1.2, [-0.8])])
        assert report["max_relative_error"] <= report["tolerance"]
        assert len(report["points"]) == 2

    def test_convolution_needs_admissible_gamma(self):
        with pytest.raises(LatticeError):
            convolution_check(FracConfig(1, 0.75), count=1)

    def test_conformal_covariance(self, y2s, fake_constants):
        report = conformal_covariance_check(y2s, 2.0, 2, kind="boundary")
        assert report["exponents_match"]
        assert report["max_relative_error"] <= 1e-10
        assert report["factors"][0]["factor"] == pytest.approx(1.0)

    def test_annulus_cross_validation(self):
        """Конечные объёмы с данными из усечённого разложения"""
        jet = jet_from_coefficients(1, 0.25, 4, {(2, (0,)): [[0.1]]})
        expansions = [expand(jet, "poisson", m) for m in (0, 1)]
        report = annulus_cross_validation(jet, expansions, J=24, x_nodes=24)
        assert len(report["errors"]) == 2
        assert all(np.isfinite(e) and e < 0.5 for e in report["errors"])
        assert report["monotone"] == (report["errors"][1] <= report["errors"][0])

    def test_annulus_bulk_only(self, y2s, fake_constants):
        with pytest.raises(PipelineError):
            annulus_cross_validation(y2s, [expand(y2s, "boundary", 1)])

    def test_run_expand_report(self, y2s):
        report = run_expand(y2s, "poisson", 1)
        assert report["expansion"]["kind"] == "poisson"
        assert [item["m"] for item in report["residual_decay"]] == [0, 1]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
