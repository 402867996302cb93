import numpy as np
import pytest

from models.game import AffineProfile, CostFamily, NonatomicGameSpec, PolytopeSet
from models.schemas import SolverConfig
from utils.benchmarks import load_benchmark
from utils.settings import Settings


def make_lq_spec(name="lq", price=1.0, a=(1.0, 1.0), b_u=(2.0, 2.0), upper=(10.0, 10.0),
                 aggregate_constraint=None, witness=True):
    """One-dimensional linear-quadratic spec with affine a, b_u and X_θ = [0, upper(θ)]"""
    witness_profile = None
    eta = None
    if witness:
        witness_profile = AffineProfile.from_pieces([0.0, 1.0], [([upper[0] / 2], [upper[1] / 2])])
        eta = min(upper) / 2
    return NonatomicGameSpec(
        name=name,
        constraint_matrix=np.array([[1.0], [-1.0]]),
        rhs_profile=AffineProfile.from_pieces([0.0, 1.0], [([upper[0], 0.0], [upper[1], 0.0])]),
        param_profile=AffineProfile.from_pieces([0.0, 1.0], [([a[0], b_u[0]], [a[1], b_u[1]])]),
        cost=CostFamily(np.array([[price]]), np.zeros(1), 1.0, 1.0 if price > 0 else None),
        aggregate_constraint=aggregate_constraint,
        eta=eta,
        witness=witness_profile,
    )


@pytest.fixture
def settings():
    return Settings(threads=2, monotone_pairs=200)


@pytest.fixture
def lq1_spec():
    return make_lq_spec("lq1")


@pytest.fixture
def lq1_capped_spec():
    return make_lq_spec("lq1_capped", aggregate_constraint=PolytopeSet.box([0.0], [0.5]))


@pytest.fixture
def tight_solver():
    return SolverConfig(tol=1e-11, max_iters=200_000)


@pytest.fixture
def benchmark():
    return load_benchmark
