import numpy as np
import pytest

from agents.aas_builder import AASBuilder, build_meshgrid, build_uniform
from models.schemas import AASMethod
from utils.benchmarks import benchmark_suite
from utils.errors import BuilderError
from utils.metrics import compute_metrics
from tests.conftest import make_lq_spec


class TestUniform:
    def test_lq1_two_players(self, lq1_spec):
        game = build_uniform(lq1_spec, 2)
        assert game.n_players == 2
        assert game.mu_max == pytest.approx(0.5)
        np.testing.assert_allclose(game.box_bounds[1], [[5.0], [5.0]])
        assert game.cells == (((0.0, 0.5),), ((0.5, 1.0),))

    def test_single_player(self, lq1_spec):
        game = build_uniform(lq1_spec, 1)
        assert game.n_players == 1
        assert game.weights[0] == 1.0

    @pytest.mark.parametrize("nu", [0, -3, 2.5])
    def test_invalid_nu(self, lq1_spec, nu):
        with pytest.raises(BuilderError):
            build_uniform(lq1_spec, nu)

    def test_breakpoints_become_cuts(self, benchmark):
        spec = benchmark("lq_breakpoint").spec
        game = build_uniform(spec, 2)
        np.testing.assert_allclose(game.weights, [0.3, 0.2, 0.5])
        np.testing.assert_allclose(game.params[:, 1], [1.0, 2.0, 2.0])

    def test_midpoint_representatives(self, benchmark):
        spec = benchmark("lq_hetero").spec
        game = build_uniform(spec, 2)
        np.testing.assert_allclose(game.params[0], [1.125, 1.25])
        np.testing.assert_allclose(game.representative_rhs[0], [1.25, 0.0])
        # X_i = μ_i X_{b̄_i}
        np.testing.assert_allclose(game.box_bounds[1][0], [0.625])

    def test_cells_cover_the_unit_interval(self, benchmark):
        spec = benchmark("lq_breakpoint").spec
        for nu in (3, 7, 16):
            game = build_uniform(spec, nu)
            total = sum(hi - lo for cell in game.cells for lo, hi in cell)
            assert total == pytest.approx(1.0, abs=1e-14)
            assert game.weights.sum() == pytest.approx(1.0, abs=1e-14)


class TestMeshgrid:
    def test_affine_parameters_split_evenly(self, benchmark):
        spec = benchmark("lq_hetero").spec
        game = build_meshgrid(spec, 2)
        np.testing.assert_allclose(game.weights, [0.5, 0.5])
        np.testing.assert_allclose(game.params[1], [1.375, 1.75])

    def test_constant_parameters_fall_back_to_theta_axis(self, lq1_spec):
        partition = AASBuilder(lq1_spec).partition_meshgrid(4)
        assert partition.add_theta_axis
        np.testing.assert_allclose(partition.weights, [0.25] * 4)

    def test_plateau_on_one_piece(self, benchmark):
        spec = benchmark("lq_breakpoint").spec
        game = build_meshgrid(spec, 2)
        np.testing.assert_allclose(game.weights, [0.3, 0.2, 0.5])
        assert game.method == AASMethod.MESHGRID.value

    def test_representatives_are_cell_averages(self, benchmark):
        spec = benchmark("lq_hetero").spec
        game = AASBuilder(spec).build(4, AASMethod.MESHGRID)
        for i, cell in enumerate(game.cells):
            average = sum(spec.param_profile.integrate(lo, hi) for lo, hi in cell) / game.weights[i]
            np.testing.assert_allclose(game.params[i], average)

    def test_build_dispatches_on_method(self, lq1_spec):
        builder = AASBuilder(lq1_spec)
        assert builder.build(3, "uniform").method == "uniform"
        assert builder.build(3, "meshgrid").method == "meshgrid"

    def test_opposite_slopes_give_two_cells(self):
        # b_θ = θ, b_u(θ) = 1 - θ
        spec = make_lq_spec(upper=(0.0, 1.0), b_u=(1.0, 0.0), witness=False)
        game = build_meshgrid(spec, 2)
        np.testing.assert_allclose(game.weights, [0.5, 0.5])
        assert game.cells == (((0.0, 0.5),), ((0.5, 1.0),))
        np.testing.assert_allclose(game.representative_rhs[:, 0], [0.25, 0.75])
        np.testing.assert_allclose(game.params[:, 1], [0.75, 0.25])

    def test_single_cell_rhs_is_the_integral(self):
        spec = make_lq_spec(upper=(0.0, 1.0), witness=False)
        game = build_meshgrid(spec, 1)
        assert game.n_players == 1
        assert game.weights[0] * game.representative_rhs[0, 0] == pytest.approx(0.5)
        np.testing.assert_allclose(game.box_bounds[1], [[0.5]])


@pytest.mark.parametrize("method", [AASMethod.UNIFORM, AASMethod.MESHGRID])
def test_metrics_do_not_grow_along_doubling_sweeps(method):
    for case in benchmark_suite():
        builder = AASBuilder(case.spec)
        previous = None
        for nu in (2, 4, 8, 16):
            metrics = compute_metrics(case.spec, builder.build(nu, method))
            if previous is not None:
                for field in ("delta", "d_sub", "lam"):
                    assert getattr(metrics, field) <= getattr(previous, field) + 1e-12, (case.name, nu, field)
            previous = metrics
