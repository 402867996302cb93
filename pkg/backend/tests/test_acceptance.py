"""
Full-sweep checks over the benchmark suite. Slow: run with `pytest -m slow`.
"""

import numpy as np
import pytest

from agents.aas_builder import build_uniform
from agents.coordinator import SweepCoordinator
from agents.vi_solver import check_unique
from models.schemas import SolveMode, SolverConfig
from utils.benchmarks import benchmark_suite
from utils.metrics import check_monotone, compute_constants, compute_metrics
from utils.settings import Settings

pytestmark = pytest.mark.slow

NUS = [2, 4, 8, 16, 32, 64, 128]


def loglog_slope(nus, values):
    return float(np.polyfit(np.log(nus), np.log(values), 1)[0])


async def sweep(case, mode="vne"):
    return await SweepCoordinator(case.config, Settings(threads=4)).run_sweep(nus=NUS, mode=mode)


class TestHomogeneousPlayers:
    async def test_vne_error_rate(self, benchmark):
        rows = await sweep(benchmark("lq1_homogeneous"))
        nus = rows["nu"].to_numpy()
        expected = (1.0 / (2 * nus + 1)) ** 2
        np.testing.assert_allclose(rows["err_agg_sq"].to_numpy(), expected, rtol=1e-6)
        assert -2.1 <= loglog_slope(nus, rows["err_agg_sq"]) <= -1.9

    async def test_pseudo_is_exact_for_every_nu(self, benchmark):
        rows = await sweep(benchmark("lq1_homogeneous"), mode="pseudo")
        assert (rows["status"] == "ok").all()
        assert rows["err_agg_sq"].max() <= 1e-12

    async def test_capped_aggregate_is_exact(self, benchmark):
        rows = await sweep(benchmark("lq1_capped"))
        assert rows["gate_ok"].all()
        assert rows["err_agg_sq"].max() <= 1e-12


@pytest.mark.parametrize("name", ["lq_hetero", "lq_2d", "lq_breakpoint"])
async def test_bounds_dominate_and_decay(benchmark, name):
    rows = await sweep(benchmark(name))
    assert (rows["status"] == "ok").all()
    gated = rows[rows["gate_ok"]]
    assert len(gated) == len(NUS)
    assert (gated["err_agg_sq"] <= gated["bound_agg"]).all()
    assert (gated["err_prof_sq"] <= gated["bound_prof"]).all()
    assert rows["bound_agg"].iloc[-1] <= rows["bound_agg"].iloc[0] / 10


def test_metrics_decay_at_first_order(benchmark):
    spec = benchmark("lq_hetero").spec
    metrics = [compute_metrics(spec, build_uniform(spec, nu)) for nu in NUS]
    for field in ("delta", "d_sub", "lam"):
        assert loglog_slope(NUS, [getattr(m, field) for m in metrics]) <= -0.95


def test_lambda_is_price_bound_over_nu(benchmark):
    spec = benchmark("lq1_homogeneous").spec
    B_g = compute_constants(spec).B_g
    for nu in NUS:
        assert compute_metrics(spec, build_uniform(spec, nu)).lam == pytest.approx(B_g / nu)


def test_monotonicity_over_the_suite():
    for case in benchmark_suite():
        assert check_monotone(case.spec, n_pairs=1000).passed, case.name
        game = build_uniform(case.spec, 8)
        for mode in (SolveMode.PSEUDO, SolveMode.VNE):
            assert check_monotone(game, n_pairs=1000, mode=mode).passed, (case.name, mode)


def test_heterogeneous_equilibrium_is_unique(benchmark):
    game = build_uniform(benchmark("lq_hetero").spec, 8)
    report = check_unique(game, SolverConfig(tol=1e-10), n_starts=5)
    assert report.all_converged
    assert report.consistent(1e-9, strongly_monotone=True)
