"""
Geometry

Projections, distances and embeddings between finite and nonatomic profiles:
1. Euclidean projection onto polytopes (clip, sorted-threshold budget projection, least-distance NNLS)
2. Dykstra projection onto the coupled set {x in prod X_i : sum_i x_i in A}
3. Hausdorff distance between polytopes via vertex enumeration
4. The weighted ν-norm, step profiles and the ψ / ψ̄ maps
5. Piecewise Gauss-Legendre integration used for exact cell integrals
"""

from dataclasses import dataclass
from functools import lru_cache, wraps
from itertools import combinations, product
from typing import Any, Callable, Iterable, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.optimize import nnls
from scipy.spatial import HalfspaceIntersection, QhullError

from models.game import AffineProfile, FiniteGame, Interval, NonatomicGameSpec, PolytopeSet
from models.schemas import SetKind
from utils.errors import (
    DimensionCapError,
    DimensionError,
    InfeasibleError,
    NumericalError,
    ProjectionError,
    ProvenanceError,
    UnsupportedProfileError,
)
from utils.settings import Settings, get_settings

logger = structlog.get_logger(__name__)

QUADRATURE_ORDER = 24

# Failures raised from inside LAPACK / Qhull rather than by this package
NUMERICAL_FAILURES = (np.linalg.LinAlgError, QhullError)


def numerical_guard(fn: Callable[..., Any]) -> Callable[..., Any]:
    """Re-raise LAPACK and Qhull failures as NumericalError"""
    @wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except NUMERICAL_FAILURES as e:
            raise NumericalError(
                f"{fn.__name__} failed inside scipy", cause=type(e).__name__, detail=str(e)
            ) from e
    return wrapper


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def integrate_piecewise(fn: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                        breakpoints: Iterable[float] = (), order: int = QUADRATURE_ORDER) -> np.ndarray:
    """∫_lo^hi fn(θ) dθ, splitting at breakpoints; exact for polynomials of degree < 2*order"""
    cuts = np.unique(np.concatenate([[lo, hi], [b for b in breakpoints if lo < b < hi]]))
    nodes, weights = _gauss_legendre(order)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        half = 0.5 * (b - a)
        values = np.asarray(fn(half * nodes + 0.5 * (a + b)))
        total = total + half * np.tensordot(weights, values, axes=1)
    return np.asarray(total)


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------

def _project_simplex(y: np.ndarray, total: float) -> np.ndarray:
    """Projection onto {x >= 0, sum(x) = total} by sorting"""
    if total <= 0:
        return np.zeros_like(y)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - total
    ind = np.arange(1, y.shape[0] + 1)
    cond = u - css / ind > 0
    rho = ind[cond][-1]
    tau = css[cond][-1] / rho
    return np.maximum(y - tau, 0.0)


def _project_budget(y: np.ndarray, sum_lo: float, sum_hi: float) -> np.ndarray:
    z = np.maximum(y, 0.0)
    s = z.sum()
    if s > sum_hi:
        return _project_simplex(y, sum_hi)
    if s < sum_lo:
        return _project_simplex(y, sum_lo)
    return z


def _project_least_distance(matrix: np.ndarray, rhs: np.ndarray, y: np.ndarray) -> np.ndarray:
    """min |z| s.t. A(y + z) <= b, solved as a least-distance program through NNLS"""
    h = matrix @ y - rhs
    if np.all(h <= 0):
        return y.copy()
    n = y.shape[0]
    E = np.vstack([-matrix.T, h[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    try:
        u, _ = nnls(E, f, maxiter=50 * E.shape[1])
    except RuntimeError as e:
        raise ProjectionError("NNLS hit its iteration cap", rows=matrix.shape[0], detail=str(e)) from e
    r = E @ u - f
    if np.linalg.norm(r) <= 1e-14 or r[-1] >= 0:
        raise InfeasibleError("least-distance program is infeasible", rows=matrix.shape[0])
    return y - r[:n] / r[-1]


@numerical_guard
def project_polytope(P: PolytopeSet, y: Any) -> np.ndarray:
    """argmin_{x in P} |x - y|"""
    y = np.asarray(y, dtype=float)
    if y.shape != (P.dim,):
        raise DimensionError("point dimension does not match the set", expected=P.dim, got=y.shape)
    if P.kind == SetKind.BOX:
        return np.clip(y, P.lower, P.upper)
    if P.kind == SetKind.SIMPLEX_BUDGET:
        return _project_budget(y, *P.budget)
    return _project_least_distance(P.matrix, P.rhs, y)


def project_product(game: FiniteGame, y: np.ndarray) -> np.ndarray:
    """Componentwise projection onto prod_i X_i"""
    bounds = game.box_bounds
    if bounds is not None:
        return np.clip(y, bounds[0], bounds[1])
    return np.vstack([project_polytope(s, yi) for s, yi in zip(game.action_sets, y)])


@numerical_guard
def project_coupled(game: FiniteGame, y: Any, settings: Optional[Settings] = None) -> np.ndarray:
    """Projection onto X(A) = {x in prod X_i : sum x_i in A} by Dykstra's algorithm"""
    settings = settings or get_settings()
    y = game.check_profile(y)
    x = project_product(game, y)
    A = game.aggregate_constraint
    if A is None or A.contains(x.sum(axis=0), tol=0.0):
        return x

    n_players = game.n_players

    def onto_aggregate(z: np.ndarray) -> np.ndarray:
        Z = z.sum(axis=0)
        return z + (project_polytope(A, Z) - Z)[None, :] / n_players

    x = y.copy()
    p = np.zeros_like(y)
    q = np.zeros_like(y)
    gap = move = np.inf
    for _ in range(settings.max_proj_iters):
        u = project_product(game, x + p)
        p = x + p - u
        x_next = onto_aggregate(u + q)
        q = u + q - x_next
        move = float(np.linalg.norm(x_next - x))
        gap = float(np.linalg.norm(u - x_next))
        x = x_next
        if move < settings.dykstra_tol and gap <= 1e-8:
            return x
    raise ProjectionError(
        "Dykstra projection did not converge", gap=gap, move=move, iterations=settings.max_proj_iters
    )


# ---------------------------------------------------------------------------
# Hausdorff distance
# ---------------------------------------------------------------------------

@numerical_guard
def polytope_vertices(P: PolytopeSet) -> np.ndarray:
    """Vertex list of a bounded polytope"""
    if P.kind == SetKind.BOX:
        return np.array(list(product(*zip(P.lower, P.upper))), dtype=float)
    center, radius = P.chebyshev_ball()
    if radius > 1e-9 and P.dim > 1:
        try:
            hs = HalfspaceIntersection(np.hstack([P.matrix, -P.rhs[:, None]]), center)
            return np.unique(np.round(hs.intersections, 12) + 0.0, axis=0)
        except QhullError:
            logger.debug("qhull failed, falling back to basis enumeration", dim=P.dim)
    vertices = []
    for rows in combinations(range(P.matrix.shape[0]), P.dim):
        sub = P.matrix[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, P.rhs[list(rows)])
        if P.contains(v, tol=1e-9):
            vertices.append(v)
    if not vertices:
        raise InfeasibleError("no vertex found", dim=P.dim)
    return np.unique(np.round(np.array(vertices), 12) + 0.0, axis=0)


def _box_directed(lo1: np.ndarray, hi1: np.ndarray, lo2: np.ndarray, hi2: np.ndarray) -> float:
    def gap(e: np.ndarray) -> np.ndarray:
        return np.maximum(np.maximum(lo2 - e, e - hi2), 0.0)
    return float(np.sqrt(np.sum(np.maximum(gap(lo1), gap(hi1)) ** 2)))


def directed_hausdorff(P: PolytopeSet, Q: PolytopeSet) -> float:
    """max_{p in P} dist(p, Q), attained at a vertex of P"""
    if P.kind == SetKind.BOX and Q.kind == SetKind.BOX or P.dim == 1:
        return _box_directed(P.lower, P.upper, Q.lower, Q.upper)
    return max(float(np.linalg.norm(v - project_polytope(Q, v))) for v in polytope_vertices(P))


@numerical_guard
def hausdorff(P: PolytopeSet, Q: PolytopeSet, settings: Optional[Settings] = None) -> float:
    """Symmetric Hausdorff distance in the Euclidean norm"""
    settings = settings or get_settings()
    if P.dim != Q.dim:
        raise DimensionError("Hausdorff distance between different dimensions", left=P.dim, right=Q.dim)
    both_boxes = P.kind == SetKind.BOX and Q.kind == SetKind.BOX
    if not both_boxes and P.dim > settings.vertex_dim_cap:
        raise DimensionCapError(
            "vertex enumeration above the dimension cap; use box sets or a sampling bound",
            dim=P.dim, cap=settings.vertex_dim_cap,
        )
    return max(directed_hausdorff(P, Q), directed_hausdorff(Q, P))


# ---------------------------------------------------------------------------
# ν-norm and embeddings
# ---------------------------------------------------------------------------

def nu_norm(x: Any, weights: Any) -> float:
    """(sum_i |x_i|^2 / μ_i)^(1/2)"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mu = np.asarray(weights, dtype=float)
    if x.shape[0] != mu.shape[0]:
        raise DimensionError("profile and weights disagree", players=mu.shape[0], rows=x.shape[0])
    return float(np.sqrt(np.sum(np.sum(x ** 2, axis=1) / mu)))


@dataclass(frozen=True, eq=False)
class StepProfile:
    """Piecewise-constant element of L2([0, 1], R^T)"""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=float)
        values = np.atleast_2d(np.array(self.values, dtype=float))
        if bp.ndim != 1 or np.any(np.diff(bp) <= 0):
            raise DimensionError("step breakpoints must be strictly increasing")
        if values.shape[0] != bp.shape[0] - 1:
            raise DimensionError("one value per interval", intervals=bp.shape[0] - 1, values=values.shape[0])
        bp.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, theta: Any) -> np.ndarray:
        idx = np.searchsorted(self.breakpoints, theta, side="right") - 1
        return self.values[np.clip(idx, 0, self.values.shape[0] - 1)]

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.diff(self.breakpoints) * np.sum(self.values ** 2, axis=1))))

    def integrate(self, lo: float, hi: float) -> np.ndarray:
        left = np.maximum(self.breakpoints[:-1], lo)
        right = np.minimum(self.breakpoints[1:], hi)
        overlap = np.clip(right - left, 0.0, None)
        return overlap @ self.values


def _cells_of(partition: Any) -> Sequence[Sequence[Interval]]:
    if isinstance(partition, FiniteGame):
        if not partition.has_provenance:
            raise ProvenanceError("game carries no partition cells")
        return partition.cells
    cells = getattr(partition, "cells", partition)
    return [getattr(cell, "intervals", cell) for cell in cells]


def psi(game: FiniteGame, x: Any) -> StepProfile:
    """Step profile equal to x_i / μ_i on the cell of player i"""
    x = game.check_profile(x)
    if not game.has_provenance:
        raise ProvenanceError("game carries no partition cells")
    pieces = sorted((lo, hi, i) for i, cell in enumerate(game.cells) for lo, hi in cell)
    breakpoints = [lo for lo, _, _ in pieces] + [pieces[-1][1]]
    values = [x[i] / game.weights[i] for _, _, i in pieces]
    return StepProfile(np.array(breakpoints), np.array(values))


def psi_bar(spec: Optional[NonatomicGameSpec], x: Any, partition: Any) -> np.ndarray:
    """Cell integrals ∫_{Θ_i} x_θ dθ of a nonatomic profile"""
    if not (isinstance(x, (AffineProfile, StepProfile)) or callable(getattr(x, "integrate", None))):
        raise UnsupportedProfileError(
            "profile must be piecewise affine, a step profile, or expose integrate(lo, hi)",
            got=type(x).__name__,
        )
    if spec is not None and getattr(x, "dim", spec.dim) != spec.dim:
        raise DimensionError("profile dimension differs from the game", expected=spec.dim, got=x.dim)
    cells = _cells_of(partition)
    return np.array([np.sum([x.integrate(lo, hi) for lo, hi in cell], axis=0) for cell in cells])


def l2_distance_sq(step: StepProfile, profile: Any) -> float:
    """|step - profile|_2^2 for a vectorized profile θ -> R^T with known kinks"""
    kinks = np.asarray(getattr(profile, "breakpoints", ()), dtype=float)
    total = 0.0
    for lo, hi, value in zip(step.breakpoints[:-1], step.breakpoints[1:], step.values):
        def sq_err(theta: np.ndarray, v: np.ndarray = value) -> np.ndarray:
            return np.sum((profile(theta) - v[None, :]) ** 2, axis=1)
        total += float(integrate_piecewise(sq_err, lo, hi, kinks))
    return total
