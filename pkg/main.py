"""
Kernels v1.0: CLI и оркестратор проверок

Разложения ядра Пуассона, функции Грина взвешенной задачи Неймана и
функции Грина дробного лапласиана для вырожденного оператора расширения.

Использование:
    python main.py constants --n 1 --gamma 0.25
    python main.py harmonics --n 2 --gamma 0.75 --sector neumann --max-degree 4
    python main.py expand --kind poisson --order 2 --metric metric.json
    python main.py verify --quick
"""

import argparse
import math
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from config import load_env
from errors import EXIT_INVARIANT_FAILURE, EXIT_OK, KernelsError
from kernels.degenerate_fd import (
    boundary_structure_check,
    calibrate_trace_constant,
    convergence_study,
    run_fd_solve,
    run_trace,
)
from kernels.expansion_engine import (
    conformal_covariance_check,
    convolution_check,
    decay_profile,
    expand,
    locally_flat_max_grade,
    pe_expected_grade_set,
    run_expand,
)
from kernels.flat_kernels import (
    FracConfig,
    calibrate_constants,
    compute_c_n3,
    p_n_gamma,
    poisson_mass,
)
from kernels.hemisphere_spectral import build_harmonics, rayleigh_quotient, run_harmonics
from kernels.homogeneous_algebra import (
    AtomSum,
    apply_flat_D,
    is_canonical_atom,
    lattice,
    multi_indices,
)
from kernels.homogeneous_solver import (
    check_solvable_dirichlet,
    check_solvable_neumann,
    run_solve,
    solve_dirichlet,
    solve_neumann,
    spectral_cross_check,
)
from kernels.metric_model import flat_jet, jet_from_coefficients, pe_locally_flat_jet
from storage.run_config import RunConfig, parse_config
from storage.serializers import export, to_jsonable
from utils import make_rng, relative_error, setup_logger


GAMMAS = (0.25, 0.75)


# =========================================
# Модели для проверок
# =========================================

def y2s_jet(n: int, gamma: float, amplitude: float = 0.1, order: int = 4):
    """h_y = δ + y²S с фиксированной симметричной S"""
    s = amplitude * (np.eye(n) + 0.3 * (np.ones((n, n)) - np.eye(n)))
    if n > 1:
        s[0, 0] = -0.5 * amplitude
    return jet_from_coefficients(n, gamma, order, {(2, (0,) * n): s}, kind="jet")


def random_gammas(count: int, seed: int) -> List[float]:
    """γ ∈ (0.05, 0.95) вдали от 1/2"""
    rng = make_rng(seed)
    out: List[float] = []
    while len(out) < count:
        g = float(rng.uniform(0.05, 0.95))
        if abs(g - 0.5) > 0.05:
            out.append(g)
    return out


def solver_corpus(n: int, gamma: float, sector: str, limit: int) -> List[AtomSum]:
    """Одноатомные u₀ сектора с D(u₀) ≠ 0"""
    cfg = FracConfig(n, gamma)
    ctx = cfg.context()
    g = 1 if sector == "dirichlet" else 0
    ys = [lattice(j, g) for j in range(4) if sector == "dirichlet" or j != 1]
    rs = [lattice(0), lattice(-2), lattice(-n, -1), lattice(-n, 1), lattice(1, 1)]
    corpus = []
    for y in ys:
        for degree in range(3):
            for beta in multi_indices(n, degree):
                for r in rs:
                    if len(corpus) >= limit or not is_canonical_atom(ctx, y, beta, r):
                        continue
                    u0 = AtomSum.monomial(ctx, 1.0, y=y, beta=beta, r=r)
                    if not apply_flat_D(u0).is_empty:
                        corpus.append(u0)
    return corpus


class Verifier:
    """Оркестратор набора проверок приёмки"""

    def __init__(self, run_config: Optional[RunConfig] = None):
        load_env()
        self.run_config = run_config or parse_config(flags={"command": "verify"})
        self.quick = self.run_config.quick
        self.seed = self.run_config.seed
        self.tol = self.run_config.tolerances
        self.logger = setup_logger("Verifier", "verify.log")

        # Статистика выполнения
        self.stats: Dict[str, Any] = {
            "started_at": None,
            "finished_at": None,
            "checks": {},
            "errors": []
        }

        self.logger.info("Verifier инициализирован")

    def _run_check(self, name: str, func: Callable, *args, **kwargs) -> Any:
        """
        Запускает проверку с логированием и обработкой ошибок.

        Args:
            name: Название проверки
            func: Функция проверки (возвращает словарь с ключом "passed")
            *args, **kwargs: Аргументы для функции

        Returns:
            Отчёт проверки или None при ошибке
        """
        self.logger.info(f"▶️ Проверка: {name}")
        start_time = datetime.now()

        try:
            result = func(*args, **kwargs)
            duration = (datetime.now() - start_time).total_seconds()
            passed = bool(result.get("passed", False))
            self.stats["checks"][name] = {
                "status": "passed" if passed else "failed",
                "exit_code": EXIT_OK if passed else EXIT_INVARIANT_FAILURE,
                "report": to_jsonable(result),
                "duration_sec": duration
            }
            if passed:
                self.logger.info(f"✅ {name}: пройдена за {duration:.2f}с")
            else:
                self.stats["errors"].append({"check": name, "error": "invariant violated"})
                self.logger.error(f"❌ {name}: инвариант нарушен ({duration:.2f}с)")
            return result

        except Exception as e:
            duration = (datetime.now() - start_time).total_seconds()
            error_msg = f"{type(e).__name__}: {str(e)}"
            self.stats["checks"][name] = {
                "status": "error",
                "exit_code": getattr(e, "exit_code", EXIT_INVARIANT_FAILURE),
                "error": error_msg,
                "duration_sec": duration
            }
            self.stats["errors"].append({"check": name, "error": error_msg})
            self.logger.error(f"❌ {name} завершилась с ошибкой: {e}")

            # Graceful degradation: продолжаем набор
            return None

    # ----- проверки -----

    def check_flat_kernels(self) -> Dict[str, Any]:
        """D(K) = D(Γ) = 0 в точном режиме и масса K равна 1"""
        masses, identities = [], []
        for n in (1, 2):
            for gamma in GAMMAS:
                cfg = FracConfig(n, gamma)
                exact = cfg.context(exact=True)
                k_zero = apply_flat_D(AtomSum.monomial(exact, 1, y=lattice(0, 1), r=lattice(-n, -1))).is_empty
                g_zero = apply_flat_D(AtomSum.monomial(exact, 1, r=lattice(-n, 1))).is_empty
                identities.append({"n": n, "gamma": gamma, "DK": k_zero, "DGamma": g_zero})
                for y in (0.1, 1.0, 10.0):
                    mass = poisson_mass(cfg, y)["mass"]
                    masses.append({"n": n, "gamma": gamma, "y": y, "mass_error": abs(mass - 1.0)})
        passed = (
            all(i["DK"] and i["DGamma"] for i in identities)
            and all(m["mass_error"] <= self.tol["flux_rho"] for m in masses)
        )
        return {"passed": passed, "identities": identities, "masses": masses}

    def check_harmonics(self) -> Dict[str, Any]:
        """D(A_m) = 0 и размерность C(m+n-1, n-1) для обоих секторов"""
        top = 4 if self.quick else 8
        dims = (1, 2) if self.quick else (1, 2, 3)
        gammas = random_gammas(2 if self.quick else 10, self.seed)
        failures = []
        for gamma in gammas:
            for n in dims:
                cfg = FracConfig(n, gamma)
                exact = gamma == gammas[0]
                for sector in ("dirichlet", "neumann"):
                    for m in range(top + 1):
                        # точный режим для первого γ, float для остальных
                        harmonics = build_harmonics(cfg, sector, m, exact=exact)
                        if len(harmonics) != math.comb(m + n - 1, n - 1):
                            failures.append({"n": n, "gamma": gamma, "sector": sector, "m": m, "reason": "dimension"})
                        for e in harmonics:
                            if not apply_flat_D(e.body).is_zero(self.tol["zero"], scale=e.body.max_abs_coeff()):
                                failures.append({"n": n, "gamma": gamma, "sector": sector, "m": m, "seed": e.seed})
        return {"passed": not failures, "gammas": gammas, "failures": failures}

    def check_eigenvalues(self) -> Dict[str, Any]:
        """Отношения Рэлея совпадают с k(k+n-2γ)"""
        top = 3 if self.quick else 6
        worst = 0.0
        for n in (1, 2):
            for gamma in GAMMAS:
                cfg = FracConfig(n, gamma)
                for sector in ("dirichlet", "neumann"):
                    for m in range(top + 1):
                        for e in build_harmonics(cfg, sector, m):
                            worst = max(worst, relative_error(rayleigh_quotient(e), e.eigenvalue))
        return {"passed": worst <= self.tol["eigenvalue"], "max_relative_error": worst}

    def check_solvability(self) -> Dict[str, Any]:
        """Знаменатели не обращаются в нуль; контрпример γ = 1/2"""
        zeros = []
        for gamma in random_gammas(10, self.seed + 1):
            for n in (1, 2, 3):
                for m in range(21):
                    for m_prime in range(21):
                        d = check_solvable_dirichlet(n, gamma, m, m_prime)
                        nm = check_solvable_neumann(n, gamma, m, m_prime)
                        if abs(d) < 1e-12 or abs(nm) < 1e-12:
                            zeros.append({"n": n, "gamma": gamma, "m": m, "m_prime": m_prime})
        counterexample = check_solvable_dirichlet(1, 0.5, 1, 0, allow_excluded=True)
        return {"passed": not zeros and counterexample == 0.0, "zeros": zeros, "counterexample": counterexample}

    def check_solver(self) -> Dict[str, Any]:
        """Обход D(solve(D u₀)) = D u₀ и спектральная сверка на полиномиальных дефицитах"""
        per_sector = 12 if self.quick else 50
        failures, counts, spectral = [], {}, []
        for sector, solve in (("dirichlet", solve_dirichlet), ("neumann", solve_neumann)):
            counts[sector] = 0
            for n, gamma in ((1, 0.25), (2, 0.75)):
                cfg = FracConfig(n, gamma)
                for u0 in solver_corpus(n, gamma, sector, per_sector // 2):
                    f = apply_flat_D(u0)
                    u = solve(f, cfg)
                    counts[sector] += 1
                    if not apply_flat_D(u).allclose(f, rtol=self.tol["zero"]) or u.degree != u0.degree:
                        failures.append({"sector": sector, "n": n, "gamma": gamma, "u0": u0.to_json()})
                g = 1 if sector == "dirichlet" else 0
                for beta in multi_indices(n, 1) + multi_indices(n, 2):
                    u0 = AtomSum.monomial(cfg.context(), 1.0, y=lattice(2, g), beta=beta)
                    report = spectral_cross_check(apply_flat_D(u0), cfg, sector)
                    spectral.append(max(report["d_difference"], report["projection_gap"]))
        spectral_gap = max(spectral) if spectral else 0.0
        passed = not failures and spectral_gap <= self.tol["spectral"]
        return {"passed": passed, "counts": counts, "failures": failures, "spectral_gap": spectral_gap}

    def check_deficit_killing(self) -> Dict[str, Any]:
        """Плоская струя без поправок; рост наклона остатка на y²S; множества однородностей"""
        flat = flat_jet(2, 0.25)
        flat_empty = all(not expand(flat, kind, 2).corrections for kind in ("poisson", "green"))

        jet = y2s_jet(2, 0.25)
        profile = decay_profile(jet, expand(jet, "poisson", 2))
        slopes = [p["slope"] for p in profile]
        improving = all(b - a >= 0.9 for a, b in zip(slopes[:-1], slopes[1:]))

        sets = []
        for n in ((2,) if self.quick else (2, 3)):
            pe = pe_locally_flat_jet(n, 0.25, seed=self.seed)
            for kind in ("poisson", "green", "boundary"):
                allowed = pe_expected_grade_set(kind, n, 0.25)
                expansion = expand(pe, kind, 8, max_grade=locally_flat_max_grade(kind, n, 0.25))
                found = expansion.homogeneities()
                sets.append({
                    "n": n,
                    "kind": kind,
                    "found": [h.label() for h in found],
                    "allowed": [h.label() for h in allowed],
                    "ok": found == allowed
                })
        passed = flat_empty and improving and all(s["ok"] for s in sets)
        return {"passed": passed, "flat_empty": flat_empty, "slopes": slopes, "grade_sets": sets}

    def check_convolution(self) -> Dict[str, Any]:
        """Γ = K * G в плоской модели"""
        count = 4 if self.quick else 10
        reports = [convolution_check(FracConfig(n, 0.25), count=count, seed=self.seed) for n in (1, 2)]
        worst = max(r["max_relative_error"] for r in reports)
        return {"passed": worst <= self.tol["convolution"], "max_relative_error": worst}

    def check_fd_oracle(self) -> Dict[str, Any]:
        """Порядок сходимости, след против мультипликатора, структура A₀ + A₁y + B₀y^{2γ}"""
        gamma = 0.25
        cfg = FracConfig(1, gamma)
        ctx = cfg.context()
        exact = (
            AtomSum.monomial(ctx, 1.0, beta=(2,))
            + AtomSum.monomial(ctx, -1.0 / (2.0 - 2.0 * gamma), y=lattice(2))
            + AtomSum.monomial(ctx, 1.0, y=lattice(0, 1), beta=(1,))
        )
        levels = (8, 16, 32) if self.quick else (16, 32, 64)
        study = convergence_study(cfg, exact, "dirichlet", levels)

        misfits = []
        for n in ((1,) if self.quick else (1, 2)):
            for g in GAMMAS:
                misfits.append(calibrate_trace_constant(FracConfig(n, g))["misfit"])

        boundary = lambda x: np.cos(np.pi * x[:, 0])
        flat = boundary_structure_check(None, boundary)
        curved = boundary_structure_check(y2s_jet(1, gamma), boundary)
        order = study["richardson_order"]
        passed = (
            order >= 1.5
            and max(misfits) <= self.tol["trace"]
            and flat["consistent"]
            and curved["consistent"]
        )
        return {
            "passed": passed,
            "convergence": study,
            "trace_misfits": misfits,
            "structure_flat": flat["consistent"],
            "structure_curved": curved["consistent"]
        }

    def check_constants(self) -> Dict[str, Any]:
        """Поток g_{n,γ} не зависит от ρ; p·c = 1; тождество Бета против квадратуры"""
        rows = []
        for n, gamma in (((1, 0.25),) if self.quick else ((1, 0.25), (2, 0.75))):
            cfg = FracConfig(n, gamma)
            constants = calibrate_constants(cfg)
            rows.append({
                "n": n,
                "gamma": gamma,
                "flux_spread": constants.residuals["flux_spread"],
                "pc": abs(p_n_gamma(cfg) * compute_c_n3(cfg) - 1.0),
                "c_n3_relative": constants.residuals["c_n3_relative"]
            })
        passed = all(
            math.isfinite(r["flux_spread"])
            and r["flux_spread"] <= self.tol["flux_rho"]
            and r["pc"] <= 1e-14
            and r["c_n3_relative"] <= self.tol["c_n3"]
            for r in rows
        )
        return {"passed": passed, "rows": rows}

    def check_covariance(self) -> Dict[str, Any]:
        """Постоянное конформное растяжение c²g"""
        jet = jet_from_coefficients(
            2, 0.25, 4,
            {(2, (0, 0)): [[0.1, 0.02], [0.02, -0.05]], (2, (1, 0)): [[0.03, 0.0], [0.0, 0.01]]}
        )
        report = conformal_covariance_check(jet, 2.0, 2, kind="boundary")
        passed = report["exponents_match"] and report["max_relative_error"] <= self.tol["covariance"]
        return {"passed": passed, **report}

    def check_determinism(self) -> Dict[str, Any]:
        """Два запуска с одним seed дают одну структуру показателей и коэффициенты до 1e-12"""
        runs = [expand(pe_locally_flat_jet(2, 0.25, seed=self.seed), "green", 2) for _ in range(2)]
        first, second = runs
        same_structure = first.homogeneities() == second.homogeneities() and all(
            set(a.coefficients()) == set(b.coefficients())
            for (_, a), (_, b) in zip(first.corrections, second.corrections)
        )
        same_values = same_structure and all(
            a.allclose(b, rtol=self.tol["determinism"]) for (_, a), (_, b) in zip(first.corrections, second.corrections)
        )
        return {"passed": same_structure and same_values, "structure": same_structure}

    def run_verify(self) -> Dict[str, Any]:
        """
        Запускает полный набор проверок.

        Returns:
            Статистика выполнения
        """
        self.logger.info("=" * 60)
        self.logger.info("🚀 Запуск проверок" + (" (быстрый режим)" if self.quick else ""))
        self.logger.info("=" * 60)

        self.stats["started_at"] = datetime.now().isoformat()

        self._run_check("Flat kernels", self.check_flat_kernels)
        self._run_check("Harmonic construction", self.check_harmonics)
        self._run_check("Eigenvalue law", self.check_eigenvalues)
        self._run_check("Solvability sweep", self.check_solvability)
        self._run_check("Homogeneous solver", self.check_solver)
        self._run_check("Deficit killing", self.check_deficit_killing)
        self._run_check("Convolution identity", self.check_convolution)
        self._run_check("FD oracle", self.check_fd_oracle)
        self._run_check("Constant calibration", self.check_constants)
        self._run_check("Conformal covariance", self.check_covariance)
        self._run_check("Determinism", self.check_determinism)

        self.stats["finished_at"] = datetime.now().isoformat()
        self.stats["exit_code"] = self.exit_code

        self._print_summary()
        export(self.stats, str(Path(self.run_config.output_dir) / "verify_report.json"))

        return self.stats

    @property
    def exit_code(self) -> int:
        codes = [c["exit_code"] for c in self.stats["checks"].values()]
        return max(codes, default=EXIT_OK)

    def _print_summary(self):
        """Печатает итоговый отчёт о выполнении"""
        self.logger.info("=" * 60)
        self.logger.info("📊 Итоговый отчёт")
        self.logger.info("=" * 60)

        for name, check in self.stats["checks"].items():
            mark = "✅" if check["status"] == "passed" else "❌"
            self.logger.info(f"{mark} {name}: {check['status']} ({check['duration_sec']:.2f}с)")

        # Ошибки
        if self.stats["errors"]:
            self.logger.warning(f"⚠️ Ошибок: {len(self.stats['errors'])}")
            for err in self.stats["errors"]:
                self.logger.warning(f"  - {err['check']}: {err['error']}")

        # Длительность
        if self.stats["started_at"] and self.stats["finished_at"]:
            start = datetime.fromisoformat(self.stats["started_at"])
            finish = datetime.fromisoformat(self.stats["finished_at"])
            self.logger.info(f"⏱️ Общая длительность: {(finish - start).total_seconds():.2f}с")

        self.logger.info("=" * 60)


# =========================================
# Команды
# =========================================

def _output_path(cfg: RunConfig, name: str) -> str:
    return str(Path(cfg.output_dir) / name)


def _problem_data(problem: Dict[str, Any], ctx) -> Dict[str, Any]:
    """Значения задачи FD: число, список или {"atoms": [...]}"""
    out = dict(problem)
    for key in ("boundary", "rhs", "outer"):
        value = problem.get(key)
        if isinstance(value, dict) and "atoms" in value:
            out[key] = AtomSum.from_json(ctx, value["atoms"])
    return out


def run_command(cfg: RunConfig) -> int:
    """
    Выполняет команду и пишет результаты.

    Returns:
        Код выхода
    """
    logger = setup_logger("Kernels", "kernels.log")

    if cfg.command == "verify":
        return Verifier(cfg).run_verify()["exit_code"]

    frac = cfg.frac_config()
    if cfg.command == "constants":
        export(calibrate_constants(frac), _output_path(cfg, "constants.json"))
    elif cfg.command == "harmonics":
        export(run_harmonics(frac, cfg.sector, cfg.max_degree), _output_path(cfg, f"harmonics_{cfg.sector}.json"))
    elif cfg.command == "solve-homogeneous":
        f = AtomSum.from_json(frac.context(), cfg.deficit)
        export(run_solve(f, frac, cfg.sector), _output_path(cfg, f"solution_{cfg.sector}.json"))
    elif cfg.command == "expand":
        result = run_expand(cfg.jet(), cfg.kind, cfg.order, cfg.max_grade, cfg.cutoff_radius)
        export(result, _output_path(cfg, f"expansion_{cfg.kind}.json"))
    elif cfg.command == "fd-solve":
        jet = cfg.jet() if cfg.metric is not None else None
        field_ = run_fd_solve(frac, jet, _problem_data(cfg.problem, frac.context()))
        export(field_, _output_path(cfg, "field"), fmt="csv")
    elif cfg.command == "trace":
        grid = cfg.problem.get("grid", {})
        result = run_trace(
            frac,
            frequency=cfg.problem.get("frequency"),
            J=int(grid.get("J", 400)),
            Y=float(grid.get("Y", 12.0)),
            x_nodes=grid.get("x_nodes"),
            layers=cfg.problem.get("layers")
        )
        export(result, _output_path(cfg, "trace.json"))
    elif cfg.command == "convolve":
        export(convolution_check(frac, count=cfg.samples, seed=cfg.seed), _output_path(cfg, "convolution.json"))
    logger.info(f"Команда {cfg.command} завершена, результаты в {cfg.output_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Kernels: асимптотические разложения ядер оператора расширения дробного лапласиана"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON-конфигурация запуска")
    common.add_argument("--n", type=int, help="Размерность границы")
    common.add_argument("--gamma", type=float, help="Порядок γ ∈ (0, 1), γ ≠ 1/2")
    common.add_argument("--seed", type=int, help="Seed генератора")
    common.add_argument("--output", dest="output_dir", help="Директория результатов")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("constants", parents=[common], help="Нормировочные константы с остатками калибровки")

    harmonics = sub.add_parser("harmonics", parents=[common], help="Ортонормированные D-гармоники")
    harmonics.add_argument("--sector", choices=("dirichlet", "neumann"))
    harmonics.add_argument("--max-degree", dest="max_degree", type=int)

    solve = sub.add_parser("solve-homogeneous", parents=[common], help="Решение D u = f для однородного f")
    solve.add_argument("--sector", choices=("dirichlet", "neumann"))
    solve.add_argument("--deficit", help="JSON-файл со списком атомов f")

    expand_parser = sub.add_parser("expand", parents=[common], help="Разложение ядра по струе метрики")
    expand_parser.add_argument("--kind", choices=("poisson", "green", "boundary"))
    expand_parser.add_argument("--order", type=int)
    expand_parser.add_argument("--metric", help="JSON-файл струи метрики")
    expand_parser.add_argument("--max-grade", dest="max_grade", type=float)
    expand_parser.add_argument("--cutoff-radius", dest="cutoff_radius", type=float)

    fd = sub.add_parser("fd-solve", parents=[common], help="Конечные объёмы на полубоксе")
    fd.add_argument("--problem", help="JSON-описание задачи и сетки")
    fd.add_argument("--metric", help="JSON-файл струи метрики")

    trace = sub.add_parser("trace", parents=[common], help="Дробный след против мультипликатора Фурье")
    trace.add_argument("--problem", help="JSON: frequency, grid, layers")

    convolve = sub.add_parser("convolve", parents=[common], help="Проверка Γ = K * G")
    convolve.add_argument("--samples", type=int)

    verify = sub.add_parser("verify", parents=[common], help="Полный набор проверок")
    verify.add_argument("--quick", action="store_true", default=None, help="Сокращённые выборки")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Точка входа"""
    load_env()
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k != "config"}
    try:
        cfg = parse_config(args.config, flags)
        return run_command(cfg)
    except KernelsError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
