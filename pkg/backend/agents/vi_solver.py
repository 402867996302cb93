"""
VI Solver Agent

This agent is responsible for:
1. Solving the finite-player variational inequality over X(A^ν) for VNE or pseudo-VNE
2. Reporting the natural residual ||x - Π(x - G(x))||_ν of any profile
3. Re-solving from random feasible starts to check uniqueness of the solution
"""

import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Union

import numpy as np
import structlog

from models.game import CostFamily, EquilibriumResult, FiniteGame, operator, vne_convexity_margin
from models.schemas import SolveMode, SolverConfig
from utils.errors import SolverError
from utils.geometry import nu_norm, project_coupled
from utils.settings import Settings, get_settings

logger = structlog.get_logger(__name__)

EXACT_RESIDUAL_EVERY = 50
STEP_CEILING = 1e6


def residual(game: FiniteGame, x: Any, mode: Union[SolveMode, str] = SolveMode.VNE,
             settings: Optional[Settings] = None) -> float:
    """Natural residual with reference step 1, measured in the ν-norm"""
    x = game.check_profile(x)
    G = operator(game, x, SolveMode(mode))
    return nu_norm(x - project_coupled(game, x - G, settings), game.weights)


@dataclass
class _Telemetry:
    rejections: int = 0
    projections: int = 0
    exact_checks: int = 0
    min_step: float = np.inf
    max_step: float = 0.0

    def as_dict(self) -> Dict[str, Any]:
        return {
            "rejections": self.rejections,
            "projections": self.projections,
            "exact_checks": self.exact_checks,
            "min_step": self.min_step,
            "max_step": self.max_step,
        }


class ExtragradientSolver:
    """Korpelevich extragradient iteration y = Π(x - τG(x)), x+ = Π(x - τG(y))"""

    def __init__(self, game: FiniteGame, config: Optional[SolverConfig] = None,
                 settings: Optional[Settings] = None):
        self.game = game
        self.config = config or SolverConfig()
        self.settings = settings or get_settings()
        self.mode = SolveMode(self.config.mode)
        self._telemetry = _Telemetry()

    def initial_step(self) -> float:
        if self.config.step != "adaptive":
            return float(self.config.step)
        game = self.game
        a_max = float(CostFamily.curvature(game.params).max())
        return 1.0 / (1.0 + game.cost.operator_norm + a_max / float(game.weights.min()))

    def _operator(self, x: np.ndarray) -> np.ndarray:
        G = operator(self.game, x, self.mode)
        if not np.all(np.isfinite(G)):
            raise SolverError("operator produced non-finite values", mode=self.mode.value)
        return G

    def _project(self, y: np.ndarray) -> np.ndarray:
        self._telemetry.projections += 1
        return project_coupled(self.game, y, self.settings)

    def _exact_residual(self, x: np.ndarray) -> float:
        self._telemetry.exact_checks += 1
        return nu_norm(x - self._project(x - self._operator(x)), self.game.weights)

    def solve(self, x0: Optional[np.ndarray] = None) -> EquilibriumResult:
        game = self.game
        cfg = self.config
        self._telemetry = _Telemetry()
        started = time.perf_counter()

        if self.mode == SolveMode.VNE:
            margin = vne_convexity_margin(game)
            if np.any(margin < 0):
                logger.warning(
                    "vne subproblem is nonconvex for some players; pseudo mode is recommended",
                    players=int(np.sum(margin < 0)), worst_margin=float(margin.min()),
                )

        start = np.zeros((game.n_players, game.dim)) if x0 is None else game.check_profile(x0)
        x = self._project(start)
        tau = self.initial_step()
        adaptive = cfg.step == "adaptive"

        best_x = x
        best_res = self._exact_residual(x)
        iterations = 0
        while best_res > cfg.tol and iterations < cfg.max_iters:
            iterations += 1
            Gx = self._operator(x)
            y = self._project(x - tau * Gx)
            Gy = self._operator(y)
            dx = x - y
            dG = Gx - Gy
            dx_sq = float(np.sum(dx * dx))
            if adaptive and dx_sq > 0.0:
                too_long = tau * np.linalg.norm(dG) > 0.9 * np.sqrt(dx_sq)
                if float(np.sum(dG * dx)) > dx_sq / (2.0 * tau) or too_long:
                    self._telemetry.rejections += 1
                    tau *= 0.5
                    continue

            x_next = self._project(x - tau * Gy)
            proxy = nu_norm(dx, game.weights) / min(tau, 1.0)
            self._telemetry.min_step = min(self._telemetry.min_step, tau)
            self._telemetry.max_step = max(self._telemetry.max_step, tau)
            if adaptive:
                tau = min(tau * cfg.step_growth, STEP_CEILING)

            x = x_next
            if proxy <= 10.0 * cfg.tol or dx_sq == 0.0 or iterations % EXACT_RESIDUAL_EVERY == 0:
                res = self._exact_residual(x)
                if res < best_res:
                    best_x, best_res = x, res

        converged = best_res <= cfg.tol
        wall = time.perf_counter() - started
        if not converged:
            logger.warning(
                "extragradient hit the iteration cap",
                iterations=iterations, residual=best_res, mode=self.mode.value, players=game.n_players,
            )
        else:
            logger.debug("solve finished", iterations=iterations, residual=best_res, mode=self.mode.value)
        return EquilibriumResult.from_profile(
            best_x,
            residual=best_res,
            iterations=iterations,
            converged=converged,
            wall_time=wall,
            mode=self.mode,
            final_step=tau,
            telemetry=self._telemetry.as_dict(),
        )


def solve(game: FiniteGame, config: Optional[SolverConfig] = None,
          settings: Optional[Settings] = None, x0: Optional[np.ndarray] = None) -> EquilibriumResult:
    return ExtragradientSolver(game, config, settings).solve(x0)


@dataclass
class UniquenessReport:
    n_starts: int
    profile_spread: float
    aggregate_spread: float
    residuals: List[float] = field(default_factory=list)
    all_converged: bool = True

    def consistent(self, tol: float, strongly_monotone: bool) -> bool:
        if self.aggregate_spread > 10.0 * tol:
            return False
        return not strongly_monotone or self.profile_spread <= 10.0 * tol


def random_feasible_profile(game: FiniteGame, rng: np.random.Generator,
                            settings: Optional[Settings] = None) -> np.ndarray:
    lower = np.vstack([s.lower for s in game.action_sets])
    upper = np.vstack([s.upper for s in game.action_sets])
    return project_coupled(game, rng.uniform(lower, upper), settings)


def check_unique(game: FiniteGame, config: Optional[SolverConfig] = None, n_starts: int = 5,
                 settings: Optional[Settings] = None) -> UniquenessReport:
    """Solve from several random feasible starts and report the spread of the solutions

    A single start is accepted and reports zero spread; n_starts < 1 raises SolverError.
    """
    if n_starts < 1:
        raise SolverError("at least one start is required", n_starts=n_starts)
    config = config or SolverConfig()
    rng = np.random.default_rng(config.seed)
    results = [
        solve(game, config, settings, random_feasible_profile(game, rng, settings))
        for _ in range(n_starts)
    ]
    profile_spread = 0.0
    aggregate_spread = 0.0
    for r1, r2 in combinations(results, 2):
        profile_spread = max(profile_spread, nu_norm(r1.profile - r2.profile, game.weights))
        aggregate_spread = max(aggregate_spread, float(np.linalg.norm(r1.aggregate - r2.aggregate)))
    report = UniquenessReport(
        n_starts=n_starts,
        profile_spread=profile_spread,
        aggregate_spread=aggregate_spread,
        residuals=[r.residual for r in results],
        all_converged=all(r.converged for r in results),
    )
    logger.info("uniqueness check", n_starts=n_starts, profile_spread=profile_spread,
                aggregate_spread=aggregate_spread)
    return report
