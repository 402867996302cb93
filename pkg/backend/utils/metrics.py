"""
Approximation Metrics and Error Bounds

This module measures how well a finite game approximates its nonatomic parent:
1. Per-cell metrics δ (action sets), d (cost gradients), λ (own-aggregate impact) and D (constraints)
2. Game constants M, B_f, B_g, L3, α, β and the interiority constants ρ, ρ̄, K_A
3. The aggregate and profile error bounds, with their applicability gates
4. Stochastic monotonicity certificates for finite and nonatomic games
"""

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import structlog

from models.game import CostFamily, FiniteGame, NonatomicGameSpec, PolytopeSet, operator
from models.schemas import SetKind, SolveMode
from utils.errors import ProvenanceError, WitnessError
from utils.geometry import hausdorff, nu_norm, project_polytope
from utils.oracle import interior_witness
from utils.settings import Settings, get_settings

logger = structlog.get_logger(__name__)

MONOTONE_TOL = 1e-9
NONATOMIC_CELLS = 32


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GameConstants:
    """Constants entering the error bounds; ρ = ρ̄ = inf when there is no aggregate constraint"""

    M: float
    B_f: float
    B_g: float
    L3: float
    alpha: float
    beta: float
    eta: float = float("nan")
    rho: float = float("inf")
    rho_bar: float = float("inf")
    constrained: bool = False
    reference: Optional[Tuple[float, ...]] = None
    provenance: Dict[str, str] = field(default_factory=dict)

    @property
    def K_A(self) -> float:
        return interiority_constant(self.M, self.rho, self.rho_bar)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "M": self.M, "B_f": self.B_f, "B_g": self.B_g, "L3": self.L3,
            "alpha": self.alpha, "beta": self.beta, "eta": self.eta,
            "rho": self.rho, "rho_bar": self.rho_bar, "K_A": self.K_A,
            "reference": list(self.reference) if self.reference is not None else None,
        }


def rho_constant(eta: float, M: float, boundary_distance: float) -> float:
    """ρ = η / (9M) · d(∫y, rbd(S ∩ A))"""
    return eta / (9.0 * M) * boundary_distance


def interiority_constant(M: float, rho: float, rho_bar: float) -> float:
    """K_A = (M + 1) / min(ρ, ρ̄)"""
    smallest = min(rho, rho_bar)
    if smallest <= 0:
        return float("inf")
    return (M + 1.0) / smallest


def smoothness_constants(spec: NonatomicGameSpec) -> Dict[str, float]:
    """M, B_f, B_g, L3, α, β from the closed forms of the linear-quadratic family"""
    lo, hi = spec.union_bounds()
    M = float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))
    params = spec.param_profile.endpoint_values()
    a = CostFamily.curvature(params)
    sup_linear = float(np.max(np.linalg.norm(CostFamily.linear_term(params), axis=1)))
    cost = spec.cost
    return {
        "M": M,
        "B_f": cost.own_gradient_bound(M, sup_linear, float(a.max())),
        "B_g": cost.aggregate_gradient_bound(M),
        "L3": CostFamily.parameter_lipschitz(M),
        "alpha": float(a.min()),
        "beta": cost.aggregate_modulus,
    }


def witness_slack(spec: NonatomicGameSpec) -> float:
    """Smallest normalized row slack of the witness over all piece endpoints"""
    if spec.witness is None:
        raise WitnessError("no interior witness: add theta_profile.witness and theta_profile.eta")
    norms = np.linalg.norm(spec.constraint_matrix, axis=1)
    worst = np.inf
    for k in range(spec.n_pieces):
        for theta in spec.breakpoints[k:k + 2]:
            rhs = spec.rhs_profile.on_piece(k, theta)
            xbar = spec.witness.on_piece(k, theta)
            worst = min(worst, float(np.min((rhs - spec.constraint_matrix @ xbar) / norms)))
    return worst


def compute_constants(spec: NonatomicGameSpec, reference: Optional[Any] = None) -> GameConstants:
    base = smoothness_constants(spec)
    provenance = {
        "M": "max corner norm of the union bounding box",
        "B_f": "|D| M + |d| + sup|b_u| + sup a M",
        "B_g": "|D| M",
        "L3": "sqrt(1 + M^2)",
        "alpha": "inf a(s) at piece endpoints",
        "beta": "lambda_min((D + D^T) / 2)",
    }
    if not spec.constrained:
        eta = float(spec.eta) if spec.eta is not None else float("nan")
        return GameConstants(**base, eta=eta, provenance=provenance)

    if spec.witness is None or spec.eta is None:
        raise WitnessError(
            "aggregate constraint present but no interior witness; the constants cannot be certified",
            name=spec.name,
        )
    slack = witness_slack(spec)
    if slack < spec.eta - get_settings().feasibility_tol:
        raise WitnessError("witness slack is below the declared eta", slack=slack, eta=spec.eta)

    M = base["M"]
    feasible = spec.aggregate_feasible_set()
    if reference is None:
        reference = spec.reference_aggregate
    Y = interior_witness(spec) if reference is None else np.asarray(reference, dtype=float)
    dist = feasible.boundary_distance(Y)
    if dist <= 0:
        raise WitnessError("reference aggregate is not interior to S ∩ A", reference=Y, distance=dist)

    rho = rho_constant(spec.eta, M, dist)
    t = min(dist / (3.0 * M), 1.0)
    Z = Y - t * (Y - spec.witness.integrate(0.0, 1.0))
    rho_bar = max(feasible.boundary_distance(Z), 0.0) / 3.0
    if rho_bar == 0.0:
        logger.warning("shifted reference touches the boundary; K_A is unbounded", name=spec.name)

    provenance.update({
        "rho": "eta / (9 M) * d(Y_ref, rbd(S ∩ A))",
        "rho_bar": "d(Z, rbd(S ∩ A)) / 3, Z = Y_ref - t (Y_ref - ∫x̄), t = d / (3M)",
        "reference": "user supplied" if reference is not None else "Chebyshev center of S ∩ A",
    })
    return GameConstants(
        **base, eta=float(spec.eta), rho=rho, rho_bar=rho_bar, constrained=True,
        reference=tuple(float(v) for v in Y), provenance=provenance,
    )


# ---------------------------------------------------------------------------
# AAS metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AASMetrics:
    delta: float
    lam: float
    d_sub: float
    D_cap: float
    delta_cells: np.ndarray
    lambda_cells: np.ndarray
    d_cells: np.ndarray
    slack_constant: float = 0.0
    sampling: str = "cell endpoints"

    def as_dict(self) -> Dict[str, float]:
        return {"delta": self.delta, "lambda": self.lam, "d_sub": self.d_sub, "D_cap": self.D_cap}


@lru_cache(maxsize=32)
def _sensitivity_constant(matrix_bytes: bytes, shape: Tuple[int, int]) -> float:
    A = np.frombuffer(matrix_bytes, dtype=float).reshape(shape)
    p, T = shape
    worst = 0.0
    for size in range(1, min(p, T) + 1):
        for rows in combinations(range(p), size):
            sigma = np.linalg.svd(A[list(rows)], compute_uv=False)
            if sigma[-1] > 1e-12:
                worst = max(worst, 1.0 / sigma[-1])
    return worst


def sensitivity_constant(matrix: np.ndarray) -> float:
    """C0 = max over independent row subsets J of 1 / σ_min(A_J)"""
    A = np.ascontiguousarray(matrix, dtype=float)
    return _sensitivity_constant(A.tobytes(), A.shape)


def compute_metrics(spec: NonatomicGameSpec, game: FiniteGame, constants: Optional[GameConstants] = None,
                    settings: Optional[Settings] = None) -> AASMetrics:
    if not game.has_provenance:
        raise ProvenanceError("metrics need the partition cells recorded by the builder")
    settings = settings or get_settings()
    base = smoothness_constants(spec) if constants is None else {"B_g": constants.B_g, "L3": constants.L3}
    A = spec.constraint_matrix
    box_family = spec.is_box_family
    C0 = 0.0 if box_family else sensitivity_constant(A)

    delta_cells = np.zeros(game.n_players)
    d_cells = np.zeros(game.n_players)
    for i, cell in enumerate(game.cells):
        representative = PolytopeSet.from_halfspaces(A, game.representative_rhs[i])
        for lo, hi in cell:
            k = spec.rhs_profile.piece_of(0.5 * (lo + hi))
            ends_rhs = [spec.rhs_profile.on_piece(k, theta) for theta in (lo, hi)]
            gap = max(hausdorff(PolytopeSet.from_halfspaces(A, b), representative, settings) for b in ends_rhs)
            slack = 0.5 * C0 * float(np.linalg.norm(ends_rhs[1] - ends_rhs[0]))
            delta_cells[i] = max(delta_cells[i], gap + slack)
            drift = max(
                float(np.linalg.norm(spec.param_profile.on_piece(k, theta) - game.params[i]))
                for theta in (lo, hi)
            )
            d_cells[i] = max(d_cells[i], base["L3"] * drift)

    lambda_cells = game.weights * base["B_g"]
    if game.aggregate_constraint is None and spec.aggregate_constraint is None:
        D_cap = 0.0
    elif game.aggregate_constraint is None or spec.aggregate_constraint is None:
        logger.warning("only one of the games carries an aggregate constraint")
        D_cap = float("inf")
    else:
        D_cap = hausdorff(game.aggregate_constraint, spec.aggregate_constraint, settings)

    metrics = AASMetrics(
        delta=float(delta_cells.max()),
        lam=float(lambda_cells.max()),
        d_sub=float(d_cells.max()),
        D_cap=D_cap,
        delta_cells=delta_cells,
        lambda_cells=lambda_cells,
        d_cells=d_cells,
        slack_constant=C0,
    )
    logger.debug("metrics computed", nu=game.nu, **metrics.as_dict())
    return metrics


def aggregate_set_distance(spec: NonatomicGameSpec, game: FiniteGame) -> float:
    """d_H(Σ_i X_i, S) for box families, with the Minkowski sum taken coordinatewise"""
    bounds = game.box_bounds
    if bounds is None or not spec.is_box_family:
        raise ProvenanceError("aggregate set distance is available for box families only")
    finite_sum = PolytopeSet.box(bounds[0].sum(axis=0), bounds[1].sum(axis=0))
    return hausdorff(finite_sum, spec.aggregate_range())


# ---------------------------------------------------------------------------
# Error bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorBound:
    value: float
    valid: bool
    gate_lhs: float
    gate_rhs: float
    modulus: float
    mode: SolveMode


def _bound(metrics: AASMetrics, consts: GameConstants, modulus: float, mode: SolveMode) -> ErrorBound:
    mode = SolveMode(mode)
    worst_set = max(metrics.D_cap, metrics.delta)
    sub = metrics.d_sub + (metrics.lam if mode == SolveMode.VNE else 0.0)
    if consts.constrained:
        K_A = consts.K_A
        if mode == SolveMode.VNE:
            gate_lhs, gate_rhs = worst_set, min(consts.rho, consts.rho_bar)
        else:
            gate_lhs, gate_rhs = 2.0 * worst_set, consts.rho
        gate = gate_lhs < gate_rhs
        constraint_term = (3.0 * consts.B_f + 1.0) * K_A * worst_set if np.isfinite(K_A) else float("inf")
    else:
        gate_lhs, gate_rhs, gate = 0.0, float("inf"), True
        constraint_term = 0.0

    if modulus <= 0:
        return ErrorBound(float("inf"), False, gate_lhs, gate_rhs, modulus, mode)
    inner = constraint_term + (2.0 * consts.M + 1.0) * sub
    return ErrorBound(inner / modulus, bool(gate and np.isfinite(inner)), gate_lhs, gate_rhs, modulus, mode)


def bound_aggregate(metrics: AASMetrics, consts: GameConstants,
                    mode: Union[SolveMode, str] = SolveMode.VNE) -> ErrorBound:
    """Bound on |X̂ - X*|^2 scaled by the aggregate modulus β"""
    return _bound(metrics, consts, consts.beta, SolveMode(mode))


def bound_profile(metrics: AASMetrics, consts: GameConstants,
                  mode: Union[SolveMode, str] = SolveMode.VNE) -> ErrorBound:
    """Bound on |ψ(x̂) - x*|_2^2 scaled by the strong modulus α"""
    return _bound(metrics, consts, consts.alpha, SolveMode(mode))


# ---------------------------------------------------------------------------
# Monotonicity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonotonicityReport:
    n_pairs: int
    min_gap: float
    min_strong_margin: float
    min_aggregate_margin: float
    alpha: float
    beta: float

    @property
    def passed(self) -> bool:
        return min(self.min_gap, self.min_strong_margin, self.min_aggregate_margin) >= -MONOTONE_TOL


def _moduli(cost: CostFamily, alpha: float, beta: float) -> Tuple[float, float]:
    a = cost.declared_alpha if cost.declared_alpha is not None else alpha
    b = cost.declared_beta if cost.declared_beta is not None else beta
    return float(a), float(b)


def _sample_in(action_set: PolytopeSet, rng: np.random.Generator) -> np.ndarray:
    point = rng.uniform(action_set.lower, action_set.upper)
    if action_set.kind == SetKind.BOX:
        return point
    return project_polytope(action_set, point)


def _finite_pairs(game: FiniteGame, n_pairs: int, rng: np.random.Generator,
                  mode: SolveMode) -> Tuple[List[float], List[float], List[float]]:
    a = CostFamily.curvature(game.params)
    alpha, beta = _moduli(game.cost, float(a.min()), game.cost.aggregate_modulus)
    gaps, strong, aggregate = [], [], []
    for _ in range(n_pairs):
        x = np.vstack([_sample_in(s, rng) for s in game.action_sets])
        y = np.vstack([_sample_in(s, rng) for s in game.action_sets])
        dx = x - y
        gap = float(np.sum((operator(game, x, mode) - operator(game, y, mode)) * dx))
        dX = dx.sum(axis=0)
        gaps.append(gap)
        strong.append(gap - alpha * nu_norm(dx, game.weights) ** 2)
        aggregate.append(gap - beta * float(dX @ dX))
    return gaps, strong, aggregate


def _nonatomic_pairs(spec: NonatomicGameSpec, n_pairs: int,
                     rng: np.random.Generator) -> Tuple[List[float], List[float], List[float]]:
    cuts = np.unique(np.concatenate([np.linspace(0.0, 1.0, NONATOMIC_CELLS + 1), spec.breakpoints]))
    lengths = np.diff(cuts)
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    sets = [spec.action_set(m) for m in mids]
    a_integrals = np.array([
        CostFamily.curvature(spec.param_profile.integrate(lo, hi)) for lo, hi in zip(cuts[:-1], cuts[1:])
    ])
    alpha_default = float(CostFamily.curvature(spec.param_profile.endpoint_values()).min())
    alpha, beta = _moduli(spec.cost, alpha_default, spec.cost.aggregate_modulus)
    D = spec.cost.price_matrix
    gaps, strong, aggregate = [], [], []
    for _ in range(n_pairs):
        dx = np.vstack([_sample_in(s, rng) - _sample_in(s, rng) for s in sets])
        dX = lengths @ dx
        sq = np.sum(dx * dx, axis=1)
        # b_u and d cancel in the difference of the pointwise gradients
        gap = float(dX @ (D @ dX)) + float(a_integrals @ sq)
        gaps.append(gap)
        strong.append(gap - alpha * float(lengths @ sq))
        aggregate.append(gap - beta * float(dX @ dX))
    return gaps, strong, aggregate


def check_monotone(target: Union[FiniteGame, NonatomicGameSpec], n_pairs: Optional[int] = None,
                   seed: int = 0, mode: Union[SolveMode, str] = SolveMode.PSEUDO) -> MonotonicityReport:
    """Sample profile pairs and report the worst monotonicity gaps"""
    n_pairs = n_pairs or get_settings().monotone_pairs
    rng = np.random.default_rng(seed)
    if isinstance(target, FiniteGame):
        gaps, strong, aggregate = _finite_pairs(target, n_pairs, rng, SolveMode(mode))
        cost = target.cost
        alpha, beta = _moduli(cost, float(CostFamily.curvature(target.params).min()), cost.aggregate_modulus)
    else:
        gaps, strong, aggregate = _nonatomic_pairs(target, n_pairs, rng)
        cost = target.cost
        alpha, beta = _moduli(
            cost, float(CostFamily.curvature(target.param_profile.endpoint_values()).min()), cost.aggregate_modulus
        )
    report = MonotonicityReport(
        n_pairs=n_pairs,
        min_gap=float(min(gaps)),
        min_strong_margin=float(min(strong)),
        min_aggregate_margin=float(min(aggregate)),
        alpha=alpha,
        beta=beta,
    )
    if not report.passed:
        logger.warning("monotonicity margin violated", min_gap=report.min_gap,
                       strong=report.min_strong_margin, aggregate=report.min_aggregate_margin)
    return report
