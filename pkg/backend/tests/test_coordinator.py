import math

import numpy as np
import pytest

from agents.aas_builder import build_uniform
from agents.coordinator import SweepCoordinator, oracle_failed
from models.schemas import CheckStatus, SolveMode, SolverConfig, SWEEP_COLUMNS
from utils.config_loader import config_with_game
import utils.geometry

pytestmark = pytest.mark.asyncio


def coordinator(benchmark, name, settings, **solver_update):
    config = benchmark(name).config
    if solver_update:
        config = config.model_copy(update={"solver": config.solver.model_copy(update=solver_update)})
    return SweepCoordinator(config, settings)


def checks_by_name(report):
    return {check.name: check for check in report.checks}


class TestSweep:
    async def test_lq1_vne_errors_match_closed_form(self, benchmark, settings):
        rows = await coordinator(benchmark, "lq1_homogeneous", settings).run_sweep(nus=[2, 8])
        assert list(rows.columns) == SWEEP_COLUMNS
        assert list(rows["nu"]) == [2, 8]
        assert (rows["status"] == "ok").all()
        for _, row in rows.iterrows():
            expected = (1.0 / (2 * row["nu"] + 1)) ** 2
            assert row["err_agg_sq"] == pytest.approx(expected, rel=1e-6)
            assert row["lambda"] == pytest.approx(10.0 / row["nu"])
            assert row["I"] == row["nu"]

    async def test_lq1_pseudo_is_exact(self, benchmark, settings):
        rows = await coordinator(benchmark, "lq1_homogeneous", settings).run_sweep(nus=[2, 8], mode="pseudo")
        assert (rows["mode"] == SolveMode.PSEUDO.value).all()
        assert rows["err_agg_sq"].max() <= 1e-12

    async def test_bounds_dominate_errors(self, benchmark, settings):
        rows = await coordinator(benchmark, "lq1_homogeneous", settings).run_sweep(nus=[2, 4])
        assert rows["gate_ok"].all()
        assert (rows["err_agg_sq"] <= rows["bound_agg"]).all()
        assert (rows["err_prof_sq"] <= rows["bound_prof"]).all()

    async def test_empty_nus_give_an_empty_frame(self, benchmark, settings):
        rows = await coordinator(benchmark, "lq1_homogeneous", settings).run_sweep(nus=[])
        assert rows.empty
        assert list(rows.columns) == SWEEP_COLUMNS

    async def test_rows_are_deterministic(self, benchmark, settings):
        first = await coordinator(benchmark, "lq_hetero", settings).run_sweep(nus=[2, 4])
        second = await coordinator(benchmark, "lq_hetero", settings).run_sweep(nus=[2, 4])
        stable = [c for c in SWEEP_COLUMNS if c != "wall_ms"]
        assert first[stable].equals(second[stable])

    async def test_prebuilt_game_matches_in_process_row(self, benchmark, settings):
        case = benchmark("lq_hetero")
        config = config_with_game(case.config, build_uniform(case.spec, 4))
        prebuilt = await SweepCoordinator(config, settings).run_sweep(nus=[2, 8, 16])
        in_process = await SweepCoordinator(case.config, settings).run_sweep(nus=[4])
        assert len(prebuilt) == 1
        for column in ("nu", "I", "delta", "d_sub", "lambda", "err_agg_sq", "bound_agg"):
            assert prebuilt[column].iloc[0] == pytest.approx(in_process[column].iloc[0])

    async def test_uncertified_constants_give_invalid_bounds(self, benchmark, settings):
        config = benchmark("lq1_capped").config
        profile = config.theta_profile.model_copy(update={"witness": None, "eta": None})
        config = config.model_copy(update={"theta_profile": profile})
        rows = await SweepCoordinator(config, settings).run_sweep(nus=[2])
        row = rows.iloc[0]
        assert row["status"] == "ok"
        assert not row["gate_ok"]
        assert math.isnan(row["bound_agg"])
        assert math.isnan(row["bound_prof"])
        assert row["err_agg_sq"] == pytest.approx(0.0, abs=1e-12)

    async def test_iteration_cap_marks_the_row(self, benchmark, settings):
        solver = SolverConfig(max_iters=1, tol=1e-14)
        rows = await coordinator(benchmark, "lq1_homogeneous", settings).run_sweep(nus=[4], solver=solver)
        assert rows["status"].iloc[0] == "not_converged"
        assert rows["iters"].iloc[0] == 1
        assert np.isfinite(rows["err_agg_sq"].iloc[0])

    async def test_scipy_failure_marks_only_its_row(self, benchmark, settings, monkeypatch):
        original = utils.geometry.project_product

        def fails_for_four_players(game, y):
            if game.n_players == 4:
                raise np.linalg.LinAlgError("SVD did not converge")
            return original(game, y)

        monkeypatch.setattr(utils.geometry, "project_product", fails_for_four_players)
        rows = await coordinator(benchmark, "lq1_homogeneous", settings).run_sweep(nus=[2, 4])
        assert list(rows["status"]) == ["ok", "numerical_error"]
        assert rows["err_agg_sq"].iloc[0] == pytest.approx(1.0 / 25.0, rel=1e-6)
        assert rows["I"].iloc[1] == 4

    async def test_lapack_failure_outside_geometry_marks_the_row(self, benchmark, settings, monkeypatch):
        def broken(*args, **kwargs):
            raise np.linalg.LinAlgError("eigenvalues did not converge")

        monkeypatch.setattr("agents.coordinator.compute_metrics", broken)
        rows = await coordinator(benchmark, "lq1_homogeneous", settings).run_sweep(nus=[2])
        assert rows["status"].iloc[0] == "numerical_error"
        assert np.isfinite(rows["residual"].iloc[0])


class TestVerify:
    async def test_lq1_passes(self, benchmark, settings):
        report = await coordinator(benchmark, "lq1_homogeneous", settings).run_verify()
        assert report.passed
        assert not oracle_failed(report)
        checks = checks_by_name(report)
        assert checks["monotone_nonatomic"].status == CheckStatus.PASS
        assert checks["oracle"].details["aggregate"] == pytest.approx([1.0], abs=1e-9)
        assert checks["constants"].details["M"] == pytest.approx(10.0)

    async def test_negative_price_slope_fails_monotonicity(self, benchmark, settings):
        case = benchmark("lq1_homogeneous")
        family = case.config.family.model_copy(update={"price_matrix": [[-1.0]], "declared_beta": None})
        config = case.config.model_copy(update={"family": family})
        report = await SweepCoordinator(config, settings).run_verify()
        checks = checks_by_name(report)
        assert not report.passed
        assert checks["monotone_nonatomic"].status == CheckStatus.FAIL
        assert checks["monotone_nonatomic"].margin < 0
        assert checks["closed_form_monotone"].status == CheckStatus.FAIL

    async def test_missing_witness_is_uncertified(self, benchmark, settings):
        config = benchmark("lq1_capped").config
        profile = config.theta_profile.model_copy(update={"witness": None, "eta": None})
        config = config.model_copy(update={"theta_profile": profile})
        report = await SweepCoordinator(config, settings).run_verify()
        checks = checks_by_name(report)
        assert checks["constants"].status == CheckStatus.UNCERTIFIED
        assert checks["constants"].details["error"] == "uncertified"
        assert not oracle_failed(report)

    async def test_capped_oracle_reports_multiplier(self, benchmark, settings):
        report = await coordinator(benchmark, "lq1_capped", settings, tol=1e-9).run_verify()
        oracle = checks_by_name(report)["oracle"]
        assert oracle.status == CheckStatus.PASS
        assert oracle.details["multiplier"] == pytest.approx([1.0, 0.0], abs=1e-8)
