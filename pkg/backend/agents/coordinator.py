"""
Sweep Coordinator

This module coordinates the build / solve / measure pipeline:
1. Computes the Wardrop oracle and the game constants once per config
2. Runs one sweep row per ν concurrently, capped by AGGSOLVE_THREADS
3. Measures aggregate and profile errors against the oracle next to their bounds
4. Runs the verification checks and collects them into a VerifyReport
"""

import asyncio
import time
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import structlog

from agents.aas_builder import AASBuilder
from agents.vi_solver import ExtragradientSolver, check_unique
from models.game import CostFamily, FiniteGame
from models.schemas import (
    AASMethod,
    CheckResult,
    CheckStatus,
    GameConfig,
    SolveMode,
    SolverConfig,
    SWEEP_COLUMNS,
    VerifyReport,
)
from utils.config_loader import game_from_config, spec_from_config
from utils.errors import AggSolveError, NumericalError, OracleError, WitnessError
from utils.geometry import NUMERICAL_FAILURES, l2_distance_sq, nu_norm, psi
from utils.metrics import (
    GameConstants,
    aggregate_set_distance,
    bound_aggregate,
    bound_profile,
    check_monotone,
    compute_constants,
    compute_metrics,
)
from utils.oracle import WardropEquilibrium, we_oracle
from utils.settings import Settings, get_settings

logger = structlog.get_logger(__name__)

VERIFY_MONOTONE_NU = 8
VERIFY_UNIQUE_NU = 4
VERIFY_UNIQUE_STARTS = 5
ORACLE_AGREEMENT_TOL = 1e-9


class SweepCoordinator:
    """Runs sweeps and verification for one game config"""

    def __init__(self, config: GameConfig, settings: Optional[Settings] = None):
        self.config = config
        self.settings = settings or get_settings()
        self.spec = spec_from_config(config)
        self.builder = AASBuilder(self.spec)
        self._oracle: Optional[WardropEquilibrium] = None
        self._constants: Optional[GameConstants] = None
        self._constants_error: Optional[AggSolveError] = None
        self._semaphore: Optional[asyncio.Semaphore] = None

    async def oracle(self) -> WardropEquilibrium:
        if self._oracle is None:
            self._oracle = await asyncio.to_thread(we_oracle, self.spec)
        return self._oracle

    async def constants(self) -> Optional[GameConstants]:
        if self._constants is None and self._constants_error is None:
            try:
                self._constants = await asyncio.to_thread(compute_constants, self.spec)
            except WitnessError as e:
                logger.warning("constants uncertified; bounds are reported as invalid", reason=e.message)
                self._constants_error = e
        return self._constants

    def _row(self, nu: int, method: AASMethod, solver: SolverConfig, oracle: WardropEquilibrium,
             constants: Optional[GameConstants], game: Optional[FiniteGame] = None) -> Dict[str, Any]:
        row: Dict[str, Any] = {column: float("nan") for column in SWEEP_COLUMNS}
        row.update(nu=nu, mode=solver.mode.value, seed=solver.seed, gate_ok=False, status="ok")
        started = time.perf_counter()
        try:
            if game is None:
                game = self.builder.build(nu, method, self.config.sweep.add_theta_axis)
            row.update(I=game.n_players, mu_max=game.mu_max)

            result = ExtragradientSolver(game, solver, self.settings).solve()
            row.update(residual=result.residual, iters=result.iterations)
            if not result.converged:
                row["status"] = "not_converged"

            metrics = compute_metrics(self.spec, game, constants, self.settings)
            row.update(delta=metrics.delta, d_sub=metrics.d_sub, D_cap=metrics.D_cap)
            row["lambda"] = metrics.lam
            if constants is not None:
                agg = bound_aggregate(metrics, constants, solver.mode)
                prof = bound_profile(metrics, constants, solver.mode)
                row.update(gate_ok=bool(agg.gate_lhs < agg.gate_rhs), bound_agg=agg.value, bound_prof=prof.value)

            diff = result.aggregate - oracle.aggregate
            row["err_agg_sq"] = float(diff @ diff)
            row["err_prof_sq"] = l2_distance_sq(psi(game, result.profile), oracle.profile)
        except NUMERICAL_FAILURES as e:
            logger.error("sweep row failed", nu=nu, error=NumericalError.code, cause=type(e).__name__)
            row["status"] = NumericalError.code
        except AggSolveError as e:
            logger.error("sweep row failed", nu=nu, error=e.code, message=e.message)
            row["status"] = e.code
        row["wall_ms"] = 1000.0 * (time.perf_counter() - started)
        return row

    async def _bounded(self, fn: Callable[..., Any], *args: Any) -> Any:
        if self._semaphore is None:
            self._semaphore = asyncio.Semaphore(self.settings.threads)
        async with self._semaphore:
            return await asyncio.to_thread(fn, *args)

    async def run_sweep(self, nus: Optional[Sequence[int]] = None, mode: Optional[Union[SolveMode, str]] = None,
                        method: Optional[Union[AASMethod, str]] = None,
                        solver: Optional[SolverConfig] = None) -> pd.DataFrame:
        """One row per ν in input order; a config with a game section yields a single row for that game"""
        solver = (solver or self.config.solver).model_copy()
        if mode is not None:
            solver = solver.model_copy(update={"mode": SolveMode(mode)})
        method = AASMethod(method or self.config.sweep.method)
        oracle = await self.oracle()
        constants = await self.constants()

        if self.config.game is not None:
            game = game_from_config(self.config, self.spec)
            logger.info("solving the prebuilt game", nu=game.nu, players=game.n_players)
            tasks = [self._bounded(self._row, game.nu, AASMethod(game.method), solver, oracle, constants, game)]
        else:
            nus = list(self.config.sweep.nus if nus is None else nus)
            tasks = [self._bounded(self._row, nu, method, solver, oracle, constants) for nu in nus]

        self._semaphore = None
        rows = await asyncio.gather(*tasks)
        logger.info("sweep finished", name=self.config.name, rows=len(rows),
                    failed=sum(1 for r in rows if r["status"] != "ok"))
        return pd.DataFrame(rows, columns=SWEEP_COLUMNS)

    # ------------------------------------------------------------------
    # Verification
    # ------------------------------------------------------------------

    def _check_closed_form(self) -> CheckResult:
        alpha = float(CostFamily.curvature(self.spec.param_profile.endpoint_values()).min())
        beta = self.spec.cost.aggregate_modulus
        margin = min(alpha, beta)
        return CheckResult(
            name="closed_form_monotone",
            status=CheckStatus.PASS if margin >= 0 else CheckStatus.FAIL,
            margin=margin,
            details={"inf_a": alpha, "lambda_min_sym_D": beta},
        )

    def _check_declared(self) -> CheckResult:
        cost = self.spec.cost
        if cost.declared_alpha is None and cost.declared_beta is None:
            return CheckResult(name="declared_moduli", status=CheckStatus.SKIPPED)
        alpha = float(CostFamily.curvature(self.spec.param_profile.endpoint_values()).min())
        margins = []
        if cost.declared_alpha is not None:
            margins.append(alpha - cost.declared_alpha)
        if cost.declared_beta is not None:
            margins.append(cost.aggregate_modulus - cost.declared_beta)
        margin = min(margins)
        return CheckResult(
            name="declared_moduli",
            status=CheckStatus.PASS if margin >= -1e-12 else CheckStatus.FAIL,
            margin=margin,
            details={"declared_alpha": cost.declared_alpha, "declared_beta": cost.declared_beta},
        )

    def _monotone_result(self, name: str, report: Any) -> CheckResult:
        margin = min(report.min_gap, report.min_strong_margin, report.min_aggregate_margin)
        return CheckResult(
            name=name,
            status=CheckStatus.PASS if report.passed else CheckStatus.FAIL,
            margin=margin,
            details={
                "min_gap": report.min_gap,
                "min_strong_margin": report.min_strong_margin,
                "min_aggregate_margin": report.min_aggregate_margin,
                "alpha": report.alpha,
                "beta": report.beta,
                "pairs": report.n_pairs,
            },
        )

    def _check_monotone_nonatomic(self) -> CheckResult:
        report = check_monotone(self.spec, self.settings.monotone_pairs, self.config.solver.seed)
        return self._monotone_result("monotone_nonatomic", report)

    def _check_monotone_finite(self) -> CheckResult:
        game = self.builder.build_uniform(VERIFY_MONOTONE_NU)
        report = check_monotone(game, self.settings.monotone_pairs, self.config.solver.seed, self.config.solver.mode)
        return self._monotone_result("monotone_finite", report)

    def _check_unique(self) -> CheckResult:
        game = self.builder.build_uniform(VERIFY_UNIQUE_NU)
        solver = self.config.solver
        report = check_unique(game, solver, VERIFY_UNIQUE_STARTS, self.settings)
        strong = float(CostFamily.curvature(game.params).min()) > 0
        passed = report.all_converged and report.consistent(solver.tol, strong)
        limit = 10.0 * solver.tol
        margin = limit - (max(report.aggregate_spread, report.profile_spread) if strong else report.aggregate_spread)
        return CheckResult(
            name="uniqueness",
            status=CheckStatus.PASS if passed else CheckStatus.FAIL,
            margin=margin,
            details={"profile_spread": report.profile_spread, "aggregate_spread": report.aggregate_spread,
                     "starts": report.n_starts, "strongly_monotone": strong},
        )

    def _check_oracle(self) -> CheckResult:
        first = we_oracle(self.spec)
        second = we_oracle(self.spec, damping_scale=0.5)
        agreement = float(np.linalg.norm(first.aggregate - second.aggregate))
        passed = first.margin >= -1e-8 and agreement <= ORACLE_AGREEMENT_TOL
        return CheckResult(
            name="oracle",
            status=CheckStatus.PASS if passed else CheckStatus.FAIL,
            margin=min(first.margin, ORACLE_AGREEMENT_TOL - agreement),
            details={"aggregate": first.aggregate.tolist(), "multiplier": first.multiplier.tolist(),
                     "schedule_gap": agreement, "pointwise_margin": first.margin},
        )

    def _check_constants(self) -> CheckResult:
        constants = compute_constants(self.spec)
        return CheckResult(name="constants", status=CheckStatus.PASS, details=constants.as_dict())

    def _check_set_convergence(self) -> CheckResult:
        if not self.spec.is_box_family:
            return CheckResult(name="set_convergence", status=CheckStatus.SKIPPED)
        game = self.builder.build_uniform(VERIFY_MONOTONE_NU)
        distance = aggregate_set_distance(self.spec, game)
        delta = compute_metrics(self.spec, game, settings=self.settings).delta
        margin = delta - distance
        return CheckResult(
            name="set_convergence",
            status=CheckStatus.PASS if margin >= -1e-12 else CheckStatus.FAIL,
            margin=margin,
            details={"hausdorff": distance, "delta": delta, "nu": VERIFY_MONOTONE_NU},
        )

    def _check_norm_bound(self) -> CheckResult:
        game = self.builder.build_uniform(VERIFY_MONOTONE_NU)
        result = ExtragradientSolver(game, self.config.solver, self.settings).solve()
        metrics = compute_metrics(self.spec, game, settings=self.settings)
        lo, hi = self.spec.union_bounds()
        M = float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))
        norm = nu_norm(result.profile, game.weights)
        margin = metrics.delta + M - norm
        return CheckResult(
            name="norm_bound",
            status=CheckStatus.PASS if margin >= -1e-9 else CheckStatus.FAIL,
            margin=margin,
            details={"nu_norm": norm, "delta": metrics.delta, "M": M, "converged": result.converged},
        )

    def _guarded(self, name: str, fn: Callable[[], CheckResult]) -> CheckResult:
        try:
            return fn()
        except WitnessError as e:
            return CheckResult(name=name, status=CheckStatus.UNCERTIFIED, details=e.to_dict())
        except AggSolveError as e:
            logger.error("verification check failed", check=name, error=e.code)
            return CheckResult(name=name, status=CheckStatus.FAIL, details=e.to_dict())

    async def run_verify(self) -> VerifyReport:
        checks: Dict[str, Callable[[], CheckResult]] = {
            "closed_form_monotone": self._check_closed_form,
            "declared_moduli": self._check_declared,
            "monotone_nonatomic": self._check_monotone_nonatomic,
            "monotone_finite": self._check_monotone_finite,
            "uniqueness": self._check_unique,
            "oracle": self._check_oracle,
            "constants": self._check_constants,
            "set_convergence": self._check_set_convergence,
            "norm_bound": self._check_norm_bound,
        }
        self._semaphore = None
        results: List[CheckResult] = await asyncio.gather(*[
            self._bounded(self._guarded, name, fn) for name, fn in checks.items()
        ])
        report = VerifyReport(config_name=self.config.name, checks=results)
        logger.info("verification finished", name=self.config.name, passed=report.passed,
                    failed=[c.name for c in results if c.status == CheckStatus.FAIL])
        return report


def oracle_failed(report: VerifyReport) -> bool:
    return any(c.details.get("error") == OracleError.code for c in report.checks)
