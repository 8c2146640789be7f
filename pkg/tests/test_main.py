"""Тесты для Verifier и CLI"""

import json

import numpy as np
import pytest
from unittest.mock import Mock, patch

from errors import SolverError
from kernels.homogeneous_algebra import AtomSum, apply_flat_D, lattice
from kernels.metric_model import validate
from main import Verifier, main, random_gammas, run_command, solver_corpus, y2s_jet
from storage.run_config import parse_config


CHECKS = (
    "check_flat_kernels",
    "check_harmonics",
    "check_eigenvalues",
    "check_solvability",
    "check_solver",
    "check_deficit_killing",
    "check_convolution",
    "check_fd_oracle",
    "check_constants",
    "check_covariance",
    "check_determinism",
)


class TestVerifier:
    """Тесты для оркестратора проверок"""

    @pytest.fixture
    def verifier(self, tmp_path):
        """Создаёт Verifier с моками логгера и окружения"""
        cfg = parse_config(flags={"command": "verify", "quick": True, "seed": 7, "output_dir": str(tmp_path)})
        with patch('main.setup_logger'):
            with patch('main.load_env'):
                return Verifier(cfg)

    def test_run_check_passed(self, verifier):
        result = verifier._run_check("Ok", lambda: {"passed": True, "value": np.float64(1.5)})

        assert result["passed"]
        check = verifier.stats["checks"]["Ok"]
        assert check["status"] == "passed"
        assert check["exit_code"] == 0
        assert check["report"]["value"] == 1.5
        assert "duration_sec" in check

    def test_run_check_failed(self, verifier):
        verifier._run_check("Broken", lambda: {"passed": False})

        assert verifier.stats["checks"]["Broken"]["status"] == "failed"
        assert verifier.stats["checks"]["Broken"]["exit_code"] == 2
        assert len(verifier.stats["errors"]) == 1

    def test_run_check_error(self, verifier):
        """Исключение не прерывает набор и даёт код ошибки класса"""
        def boom():
            raise SolverError("no ansatz")

        result = verifier._run_check("Solver", boom)

        assert result is None
        assert verifier.stats["checks"]["Solver"]["status"] == "error"
        assert verifier.stats["checks"]["Solver"]["exit_code"] == 4
        assert "SolverError" in verifier.stats["errors"][0]["error"]

    def test_exit_code_is_worst(self, verifier):
        assert verifier.exit_code == 0
        verifier._run_check("Ok", lambda: {"passed": True})
        verifier._run_check("Broken", lambda: {"passed": False})
        assert verifier.exit_code == 2

    @pytest.mark.parametrize("found,ok", [
        ([lattice(0)], False),
        ([lattice(0), lattice(1), lattice(2)], True),
    ])
    def test_grade_sets_must_match(self, verifier, found, ok):
        """Набор однородностей меньше ожидаемого не засчитывается"""
        expansion = Mock(corrections=[])
        expansion.homogeneities.return_value = found
        with patch('main.expand', return_value=expansion), \
             patch('main.decay_profile', return_value=[{"slope": 1.0}, {"slope": 2.0}]), \
             patch('main.pe_expected_grade_set', return_value=[lattice(0), lattice(1), lattice(2)]):
            report = verifier.check_deficit_killing()

        assert report["flat_empty"]
        assert all(s["ok"] == ok for s in report["grade_sets"])
        assert report["passed"] == ok

    def test_run_verify(self, verifier, tmp_path):
        patches = [patch.object(Verifier, name, return_value={"passed": True}) for name in CHECKS]
        for p in patches:
            p.start()
        try:
            stats = verifier.run_verify()
        finally:
            for p in patches:
                p.stop()

        assert len(stats["checks"]) == len(CHECKS)
        assert stats["exit_code"] == 0
        report = json.loads((tmp_path / "verify_report.json").read_text(encoding="utf-8"))
        assert report["exit_code"] == 0

    def test_print_summary(self, verifier):
        verifier._run_check("Ok", lambda: {"passed": True})
        verifier.stats["started_at"] = "2024-06-11T10:00:00"
        verifier.stats["finished_at"] = "2024-06-11T10:00:05"
        verifier._print_summary()
        assert verifier.logger.info.called

    def test_harmonics_check_passes(self, verifier):
        assert verifier.check_harmonics()["passed"]

    def test_harmonics_check_catches_broken_recursion(self, verifier):
        """Затравка без поправок по y не лежит в ядре D"""
        def leading_only(ctx, seed, g):
            return AtomSum.monomial(ctx, 1, beta=seed).shift(y=lattice(0, g))

        with patch("kernels.hemisphere_spectral._complete_seed", side_effect=leading_only):
            report = verifier.check_harmonics()

        assert not report["passed"]
        assert report["failures"]

    def test_solvability_check(self, verifier):
        assert verifier.check_solvability()["passed"]


class TestModels:
    """Тесты для моделей проверок"""

    def test_random_gammas(self):
        gammas = random_gammas(20, seed=1)
        assert len(gammas) == 20
        assert all(0.05 < g < 0.95 and abs(g - 0.5) > 0.05 for g in gammas)
        assert gammas == random_gammas(20, seed=1)

    def test_y2s_jet(self):
        diagnostics = validate(y2s_jet(2, 0.25))
        assert diagnostics.umbilic
        assert diagnostics.pe_flat_order == 2

    @pytest.mark.parametrize("sector", ["dirichlet", "neumann"])
    def test_solver_corpus(self, sector):
        corpus = solver_corpus(2, 0.25, sector, 10)
        assert len(corpus) == 10
        assert all(not apply_flat_D(u0).is_empty for u0 in corpus)


class TestCLI:
    """Тесты для точки входа"""

    def test_bad_gamma_exit_code(self, capsys):
        code = main(["constants", "--n", "1", "--gamma", "0.5"])
        assert code == 3
        assert "ConfigError" in capsys.readouterr().err

    def test_missing_order_exit_code(self):
        assert main(["expand", "--n", "1", "--gamma", "0.25", "--kind", "poisson"]) == 3

    @patch('main.run_command')
    def test_dispatch(self, mock_run):
        mock_run.return_value = 0

        code = main(["harmonics", "--n", "2", "--gamma", "0.25", "--sector", "neumann", "--max-degree", "3"])

        assert code == 0
        cfg = mock_run.call_args[0][0]
        assert cfg.sector == "neumann"
        assert cfg.max_degree == 3

    @patch('main.run_command')
    def test_solver_failure_exit_code(self, mock_run):
        mock_run.side_effect = SolverError("no ansatz")
        assert main(["constants", "--n", "1", "--gamma", "0.25"]) == 4

    def test_harmonics_command_writes_json(self, tmp_path):
        cfg = parse_config(flags={
            "command": "harmonics",
            "n": 1,
            "gamma": 0.25,
            "sector": "dirichlet",
            "max_degree": 2,
            "output_dir": str(tmp_path)
        })

        assert run_command(cfg) == 0

        data = json.loads((tmp_path / "harmonics_dirichlet.json").read_text(encoding="utf-8"))
        assert len(data) == 3
        assert {item["sector"] for item in data} == {"dirichlet"}


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
