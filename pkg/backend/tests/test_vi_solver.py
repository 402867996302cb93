import numpy as np
import pytest
from pydantic import ValidationError

from agents.aas_builder import build_uniform
from agents.vi_solver import ExtragradientSolver, check_unique, random_feasible_profile, residual, solve
from models.game import CostFamily, FiniteGame, PolytopeSet, operator
from models.schemas import SolveMode, SolverConfig
from utils.errors import SolverError
from utils.geometry import nu_norm
from utils.oracle import kkt_brute


def random_instance(rng, capped):
    n = int(rng.integers(1, 4))
    T = int(rng.integers(1, 3))
    weights = rng.uniform(0.5, 1.5, size=n)
    weights /= weights.sum()
    B = rng.normal(size=(T, T))
    skew = rng.normal(scale=0.3, size=(T, T))
    D = B @ B.T + 0.5 * np.eye(T) + (skew - skew.T)
    upper = rng.uniform(1.0, 3.0, size=(n, T))
    rhs = np.hstack([upper, np.zeros((n, T))])
    params = np.hstack([rng.uniform(0.5, 2.0, size=(n, 1)), rng.uniform(1.0, 4.0, size=(n, T))])
    aggregate = PolytopeSet.box(np.zeros(T), np.full(T, 0.2)) if capped else None
    return FiniteGame.from_representatives(
        weights=weights,
        representative_rhs=rhs,
        params=params,
        cost=CostFamily(D, rng.uniform(-0.5, 0.5, size=T)),
        constraint_matrix=np.vstack([np.eye(T), -np.eye(T)]),
        aggregate_constraint=aggregate,
    )


class TestClosedForms:
    def test_lq1_vne(self, lq1_spec, tight_solver):
        result = solve(build_uniform(lq1_spec, 2), tight_solver)
        assert result.converged
        np.testing.assert_allclose(result.profile, [[0.4], [0.4]], atol=1e-8)

    @pytest.mark.parametrize("nu", [2, 8])
    def test_lq1_vne_aggregate(self, lq1_spec, tight_solver, nu):
        result = solve(build_uniform(lq1_spec, nu), tight_solver)
        assert result.aggregate[0] == pytest.approx(2 * nu / (2 * nu + 1), abs=1e-8)

    def test_lq1_pseudo_recovers_wardrop_aggregate(self, lq1_spec, tight_solver):
        config = tight_solver.model_copy(update={"mode": SolveMode.PSEUDO})
        result = solve(build_uniform(lq1_spec, 2), config)
        assert result.aggregate[0] == pytest.approx(1.0, abs=1e-8)

    def test_capped_lq1(self, lq1_capped_spec):
        result = solve(build_uniform(lq1_capped_spec, 2), SolverConfig(tol=1e-9))
        np.testing.assert_allclose(result.profile, [[0.25], [0.25]], atol=1e-7)

    def test_residual_at_origin(self, lq1_spec):
        game = build_uniform(lq1_spec, 2)
        assert residual(game, np.zeros((2, 1))) == pytest.approx(4.0)

    def test_residual_vanishes_at_solution(self, lq1_spec):
        game = build_uniform(lq1_spec, 2)
        assert residual(game, [[0.4], [0.4]]) == pytest.approx(0.0, abs=1e-12)


class TestSolverBehaviour:
    def test_iteration_cap_is_reported_not_raised(self, lq1_spec):
        result = solve(build_uniform(lq1_spec, 4), SolverConfig(max_iters=1, tol=1e-14))
        assert not result.converged
        assert result.iterations == 1
        assert np.isfinite(result.residual)

    def test_fixed_step(self, lq1_spec):
        result = solve(build_uniform(lq1_spec, 2), SolverConfig(step=0.1, tol=1e-9))
        assert result.converged
        assert result.final_step == 0.1
        assert result.telemetry["rejections"] == 0

    def test_fixed_step_must_respect_lipschitz_constant(self):
        with pytest.raises(ValidationError):
            SolverConfig(step=0.5, lipschitz=4.0)

    def test_warm_start_at_solution_returns_immediately(self, lq1_spec):
        game = build_uniform(lq1_spec, 2)
        result = ExtragradientSolver(game, SolverConfig(tol=1e-9)).solve(np.array([[0.4], [0.4]]))
        assert result.iterations == 0
        assert result.converged

    def test_nonconvex_vne_still_returns(self, lq1_spec):
        game = build_uniform(lq1_spec.with_price([[-1.0]]), 1)
        result = solve(game, SolverConfig(max_iters=200))
        assert np.all(np.isfinite(result.profile))

    def test_adaptive_step_stays_below_rotation_lipschitz_constant(self):
        # G(x) = (R + aI) x - b with R a quarter turn, so |ΔG| = sqrt(1 + a^2) |Δx|; solution (0.5, 0.5)
        a = 0.05
        game = FiniteGame.from_representatives(
            weights=[1.0],
            representative_rhs=[[1.0, 1.0, 0.0, 0.0]],
            params=[[a, 0.5 + 0.5 * a, -0.5 + 0.5 * a]],
            cost=CostFamily(np.array([[0.0, 1.0], [-1.0, 0.0]]), None),
            constraint_matrix=np.vstack([np.eye(2), -np.eye(2)]),
        )
        result = solve(game, SolverConfig(mode=SolveMode.PSEUDO, tol=1e-9))
        assert result.converged
        np.testing.assert_allclose(result.profile, [[0.5, 0.5]], atol=1e-7)
        assert result.telemetry["rejections"] > 0
        assert result.telemetry["max_step"] <= 1.05 * 0.9 / np.sqrt(1 + a ** 2)


class TestAgainstActiveSetEnumeration:
    @pytest.mark.parametrize("mode", [SolveMode.VNE, SolveMode.PSEUDO])
    def test_random_small_games(self, mode):
        rng = np.random.default_rng(2024 if mode == SolveMode.VNE else 2025)
        config = SolverConfig(mode=mode, tol=1e-9, max_iters=200_000)
        for k in range(20):
            game = random_instance(rng, capped=k % 2 == 0)
            exact = kkt_brute(game, mode)
            result = solve(game, config)
            assert result.converged
            assert nu_norm(result.profile - exact, game.weights) <= 1e-6


class TestUniqueness:
    def test_hetero_starts_agree(self, benchmark):
        game = build_uniform(benchmark("lq_hetero").spec, 4)
        report = check_unique(game, SolverConfig(tol=1e-10), n_starts=5)
        assert report.all_converged
        assert report.aggregate_spread <= 1e-7
        assert report.profile_spread <= 1e-7
        assert report.consistent(1e-8, strongly_monotone=True)

    def test_single_start_has_no_spread(self, lq1_spec):
        report = check_unique(build_uniform(lq1_spec, 2), SolverConfig(tol=1e-9), n_starts=1)
        assert report.n_starts == 1
        assert report.profile_spread == 0.0
        assert report.aggregate_spread == 0.0

    def test_zero_starts_are_rejected(self, lq1_spec):
        with pytest.raises(SolverError):
            check_unique(build_uniform(lq1_spec, 2), n_starts=0)


class TestSolutionQuality:
    def test_variational_inequality_holds_at_samples(self, benchmark):
        game = build_uniform(benchmark("lq_2d").spec, 4)
        result = solve(game, SolverConfig(tol=1e-9))
        assert result.converged
        x = result.profile
        G = operator(game, x, SolveMode.VNE)
        rng = np.random.default_rng(13)
        anchors = [random_feasible_profile(game, rng) for _ in range(100)]
        # X(A) is convex, so mixtures of feasible anchors stay feasible
        for _ in range(1000):
            j, k = rng.integers(len(anchors), size=2)
            t = rng.uniform()
            z = t * anchors[j] + (1 - t) * anchors[k]
            assert float(np.sum(G * (z - x))) >= -1e-6

    def test_pseudo_and_vne_profiles_merge_as_weights_shrink(self, benchmark):
        spec = benchmark("lq_hetero").spec
        gaps = []
        for nu in (2, 8, 32):
            game = build_uniform(spec, nu)
            vne = solve(game, SolverConfig(tol=1e-10))
            pseudo = solve(game, SolverConfig(tol=1e-10, mode=SolveMode.PSEUDO))
            assert vne.converged and pseudo.converged
            gaps.append(nu_norm(vne.profile - pseudo.profile, game.weights))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] <= gaps[0] / 8
