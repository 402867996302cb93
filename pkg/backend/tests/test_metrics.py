import numpy as np
import pytest

from agents.aas_builder import build_uniform
from models.game import FiniteGame, PolytopeSet
from models.schemas import SolveMode
from utils.errors import ProvenanceError, WitnessError
from utils.metrics import (
    AASMetrics,
    GameConstants,
    aggregate_set_distance,
    bound_aggregate,
    bound_profile,
    check_monotone,
    compute_constants,
    compute_metrics,
    interiority_constant,
    rho_constant,
    sensitivity_constant,
)
from tests.conftest import make_lq_spec


def formula_inputs(delta=0.1, d_sub=0.05, lam=0.02, alpha=1.0):
    metrics = AASMetrics(
        delta=delta, lam=lam, d_sub=d_sub, D_cap=0.0,
        delta_cells=np.array([delta]), lambda_cells=np.array([lam]), d_cells=np.array([d_sub]),
    )
    consts = GameConstants(M=1.0, B_f=2.0, B_g=0.0, L3=1.0, alpha=alpha, beta=1.0,
                           eta=1.0, rho=0.5, rho_bar=0.5, constrained=True)
    return metrics, consts


class TestBounds:
    def test_interiority_constant(self):
        _, consts = formula_inputs()
        assert consts.K_A == pytest.approx(4.0)
        assert interiority_constant(1.0, 0.5, 0.0) == float("inf")

    def test_rho_constant(self):
        assert rho_constant(eta=9.0, M=1.0, boundary_distance=0.5) == pytest.approx(0.5)

    def test_aggregate_bound_vne(self):
        metrics, consts = formula_inputs()
        bound = bound_aggregate(metrics, consts, SolveMode.VNE)
        assert bound.value == pytest.approx(3.01)
        assert bound.valid

    def test_profile_bound_vne(self):
        metrics, consts = formula_inputs()
        assert bound_profile(metrics, consts, SolveMode.VNE).value == pytest.approx(3.01)

    def test_pseudo_mode_drops_lambda(self):
        metrics, consts = formula_inputs()
        bound = bound_aggregate(metrics, consts, SolveMode.PSEUDO)
        assert bound.value == pytest.approx(2.95)
        assert bound.gate_lhs == pytest.approx(0.2)

    def test_stronger_modulus_halves_the_profile_bound(self):
        metrics, consts = formula_inputs(alpha=2.0)
        assert bound_profile(metrics, consts).value == pytest.approx(1.505)

    def test_gate_failure_marks_bound_invalid(self):
        metrics, consts = formula_inputs(delta=0.6)
        bound = bound_aggregate(metrics, consts)
        assert not bound.valid
        assert bound.gate_lhs == pytest.approx(0.6)
        assert bound.gate_rhs == pytest.approx(0.5)

    def test_pseudo_gate_is_twice_as_strict(self):
        metrics, consts = formula_inputs(delta=0.3)
        assert bound_aggregate(metrics, consts, SolveMode.VNE).valid
        assert not bound_aggregate(metrics, consts, SolveMode.PSEUDO).valid

    def test_zero_modulus_gives_infinite_bound(self):
        metrics, consts = formula_inputs(alpha=0.0)
        bound = bound_profile(metrics, consts)
        assert bound.value == float("inf")
        assert not bound.valid


class TestConstants:
    def test_unconstrained_lq1(self, lq1_spec):
        consts = compute_constants(lq1_spec)
        assert consts.M == pytest.approx(10.0)
        assert consts.B_g == pytest.approx(10.0)
        assert consts.B_f == pytest.approx(22.0)
        assert consts.L3 == pytest.approx(np.sqrt(101.0))
        assert (consts.alpha, consts.beta) == (1.0, 1.0)
        assert not consts.constrained
        assert consts.K_A == 0.0

    def test_capped_lq1(self, lq1_capped_spec):
        consts = compute_constants(lq1_capped_spec)
        assert consts.reference == pytest.approx((0.25,))
        assert consts.rho == pytest.approx(5.0 / 90.0 * 0.25)
        t = 0.25 / 30.0
        z = 0.25 - t * (0.25 - 5.0)
        assert consts.rho_bar == pytest.approx((0.5 - z) / 3.0)
        assert consts.K_A == pytest.approx(11.0 / consts.rho)

    def test_missing_witness_is_uncertified(self):
        spec = make_lq_spec(aggregate_constraint=PolytopeSet.box([0.0], [0.5]), witness=False)
        with pytest.raises(WitnessError):
            compute_constants(spec)

    def test_reference_on_the_boundary_is_rejected(self, lq1_capped_spec):
        with pytest.raises(WitnessError):
            compute_constants(lq1_capped_spec, reference=[0.5])

    def test_sensitivity_constant_of_axis_rows(self):
        assert sensitivity_constant(np.array([[1.0], [-1.0]])) == pytest.approx(1.0)


class TestMetrics:
    def test_homogeneous_players(self, lq1_spec):
        for nu in (2, 4, 8):
            metrics = compute_metrics(lq1_spec, build_uniform(lq1_spec, nu))
            assert metrics.delta == pytest.approx(0.0, abs=1e-14)
            assert metrics.d_sub == pytest.approx(0.0, abs=1e-14)
            assert metrics.lam == pytest.approx(10.0 / nu)
            assert metrics.D_cap == 0.0

    def test_heterogeneous_players(self, benchmark):
        spec = benchmark("lq_hetero").spec
        previous = None
        for nu in (2, 4, 8, 16):
            metrics = compute_metrics(spec, build_uniform(spec, nu))
            assert metrics.delta == pytest.approx(1.0 / (2 * nu))
            if previous is not None:
                assert metrics.d_sub == pytest.approx(previous.d_sub / 2)
            previous = metrics

    def test_same_constraint_has_zero_cap_distance(self, lq1_capped_spec):
        metrics = compute_metrics(lq1_capped_spec, build_uniform(lq1_capped_spec, 4))
        assert metrics.D_cap == pytest.approx(0.0)

    def test_metrics_need_provenance(self, lq1_spec):
        game = build_uniform(lq1_spec, 2)
        bare = FiniteGame.from_representatives(
            game.weights, game.representative_rhs, game.params, game.cost, game.constraint_matrix
        )
        with pytest.raises(ProvenanceError):
            compute_metrics(lq1_spec, bare)

    def test_aggregate_set_converges_within_delta(self, benchmark):
        spec = benchmark("lq_hetero").spec
        for nu in (2, 4, 8):
            game = build_uniform(spec, nu)
            assert aggregate_set_distance(spec, game) <= compute_metrics(spec, game).delta + 1e-12


class TestMonotonicity:
    def test_lq1_passes(self, lq1_spec):
        report = check_monotone(lq1_spec, n_pairs=200)
        assert report.passed
        assert report.min_gap >= 0.0

    def test_finite_game_passes_in_both_modes(self, lq1_spec):
        game = build_uniform(lq1_spec, 4)
        for mode in (SolveMode.PSEUDO, SolveMode.VNE):
            assert check_monotone(game, n_pairs=200, mode=mode).passed

    def test_negative_price_slope_fails(self, lq1_spec):
        report = check_monotone(lq1_spec.with_price([[-1.0]]), n_pairs=200)
        assert not report.passed
        assert report.min_strong_margin < 0.0

    def test_declared_moduli_are_used(self, lq1_spec):
        report = check_monotone(lq1_spec, n_pairs=10)
        assert (report.alpha, report.beta) == (1.0, 1.0)

    def test_same_seed_same_report(self, lq1_spec):
        assert check_monotone(lq1_spec, n_pairs=50, seed=3) == check_monotone(lq1_spec, n_pairs=50, seed=3)
