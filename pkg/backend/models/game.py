"""
Game Model

This module holds the immutable game representations:
1. PolytopeSet feasible sets {x : Ax <= b} with box / simplex-budget fast-path tags
2. The linear-quadratic CostFamily f(x, X; s) = <x, D X + d> - <b_u(s), x> + a(s)/2 |x|^2
3. Piecewise-affine characteristic profiles and the NonatomicGameSpec built on them
4. FiniteGame elements of an approximating sequence, with scaled costs and gradients
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.optimize import linprog

from models.schemas import SetKind, SolveMode
from utils.errors import (
    BuilderError,
    ConfigError,
    DimensionError,
    InfeasibleError,
    UnboundedSetError,
)
from utils.settings import get_settings

logger = structlog.get_logger(__name__)

Interval = Tuple[float, float]

WEIGHT_TOL = 1e-12


def _frozen(values: Any, ndim: Optional[int] = None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if ndim == 2:
        arr = np.atleast_2d(arr)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Polytopes
# ---------------------------------------------------------------------------

def _chebyshev_ball(matrix: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, float]:
    """Largest inscribed ball of {Ax <= b} by linear programming"""
    p, T = matrix.shape
    norms = np.linalg.norm(matrix, axis=1)
    c = np.zeros(T + 1)
    c[-1] = -1.0
    res = linprog(
        c,
        A_ub=np.hstack([matrix, norms[:, None]]),
        b_ub=rhs,
        bounds=[(None, None)] * T + [(0, None)],
        method="highs",
    )
    if res.status == 2:
        raise InfeasibleError("polytope is empty", rows=p)
    if res.status == 3:
        raise UnboundedSetError("polytope contains arbitrarily large balls")
    if res.status != 0:
        raise InfeasibleError(f"feasibility solve failed: {res.message}")
    return res.x[:T], float(res.x[-1])


def _lifted_bounds(matrix: np.ndarray, rhs_left: np.ndarray, rhs_right: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Bounding box of the union of {Ax <= (1-w) b_left + w b_right} over w in [0, 1]"""
    T = matrix.shape[1]
    A_ub = np.hstack([matrix, -(rhs_right - rhs_left)[:, None]])
    bounds = [(None, None)] * T + [(0.0, 1.0)]
    lower = np.empty(T)
    upper = np.empty(T)
    for k in range(T):
        for sign, store in ((1.0, lower), (-1.0, upper)):
            c = np.zeros(T + 1)
            c[k] = sign
            res = linprog(c, A_ub=A_ub, b_ub=rhs_left, bounds=bounds, method="highs")
            if res.status == 3:
                raise UnboundedSetError("polytope is unbounded", coordinate=k)
            if res.status != 0:
                raise InfeasibleError(f"bounding solve failed: {res.message}", coordinate=k)
            store[k] = sign * res.fun
    return lower, upper


def _box_bounds(matrix: np.ndarray, rhs: np.ndarray) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    nonzero = np.abs(matrix) > 0
    if np.any(nonzero.sum(axis=1) != 1):
        return None
    T = matrix.shape[1]
    lower = np.full(T, -np.inf)
    upper = np.full(T, np.inf)
    for row, mask in enumerate(nonzero):
        k = int(np.argmax(mask))
        coef = matrix[row, k]
        bound = rhs[row] / coef
        if coef > 0:
            upper[k] = min(upper[k], bound)
        else:
            lower[k] = max(lower[k], bound)
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise UnboundedSetError("box is missing a bound", coordinates=np.flatnonzero(~np.isfinite(lower + upper)))
    return lower, upper


def _simplex_budget(matrix: np.ndarray, rhs: np.ndarray) -> Optional[Tuple[float, float]]:
    """Detect {x >= 0, lo <= sum(x) <= hi}"""
    T = matrix.shape[1]
    nonneg = np.zeros(T, dtype=bool)
    sum_lo, sum_hi = 0.0, np.inf
    has_sum_row = False
    for row, b in zip(matrix, rhs):
        nz = np.flatnonzero(row)
        if len(nz) == 1 and row[nz[0]] < 0 and b == 0.0:
            nonneg[nz[0]] = True
        elif len(nz) == T and np.allclose(row, row[0]):
            has_sum_row = True
            if row[0] > 0:
                sum_hi = min(sum_hi, b / row[0])
            else:
                sum_lo = max(sum_lo, b / row[0])
        else:
            return None
    if not (has_sum_row and nonneg.all()):
        return None
    return sum_lo, sum_hi


@dataclass(frozen=True, eq=False)
class PolytopeSet:
    """Nonempty bounded polytope {x in R^T : Ax <= b}"""

    matrix: np.ndarray
    rhs: np.ndarray
    kind: SetKind
    lower: np.ndarray
    upper: np.ndarray
    budget: Optional[Tuple[float, float]] = None

    @classmethod
    def from_halfspaces(cls, matrix: Any, rhs: Any, tol: Optional[float] = None) -> "PolytopeSet":
        A = np.atleast_2d(np.asarray(matrix, dtype=float))
        b = np.asarray(rhs, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise DimensionError("constraint matrix and rhs disagree", rows=A.shape[0], rhs=b.shape[0])
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise DimensionError("constraint data must be finite")
        tol = get_settings().feasibility_tol if tol is None else tol

        zero_rows = ~np.any(A != 0, axis=1)
        if np.any(b[zero_rows] < -tol):
            raise InfeasibleError("trivial row 0 <= b violated", row=int(np.flatnonzero(zero_rows & (b < -tol))[0]))
        A, b = A[~zero_rows], b[~zero_rows]
        if A.shape[0] == 0:
            raise UnboundedSetError("polytope has no constraints")

        box = _box_bounds(A, b)
        if box is not None:
            lower, upper = box
            gap = lower - upper
            if np.any(gap > tol):
                raise InfeasibleError("box is empty", coordinate=int(np.argmax(gap)), gap=float(gap.max()))
            upper = np.maximum(upper, lower)
            return cls(_frozen(A), _frozen(b), SetKind.BOX, _frozen(lower), _frozen(upper))

        budget = _simplex_budget(A, b)
        if budget is not None:
            sum_lo, sum_hi = budget
            if not np.isfinite(sum_hi):
                raise UnboundedSetError("budget set has no upper sum bound")
            if sum_hi < max(sum_lo, 0.0) - tol:
                raise InfeasibleError("budget set is empty", sum_lo=sum_lo, sum_hi=sum_hi)
            T = A.shape[1]
            return cls(
                _frozen(A), _frozen(b), SetKind.SIMPLEX_BUDGET,
                _frozen(np.zeros(T)), _frozen(np.full(T, sum_hi)), budget=(sum_lo, sum_hi),
            )

        _chebyshev_ball(A, b)
        lower, upper = _lifted_bounds(A, b, b)
        return cls(_frozen(A), _frozen(b), SetKind.GENERAL, _frozen(lower), _frozen(upper))

    @classmethod
    def box(cls, lower: Any, upper: Any) -> "PolytopeSet":
        lo = np.asarray(lower, dtype=float).reshape(-1)
        hi = np.asarray(upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionError("box bounds disagree", lower=lo.shape[0], upper=hi.shape[0])
        eye = np.eye(lo.shape[0])
        return cls.from_halfspaces(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def scaled(self, factor: float) -> "PolytopeSet":
        """factor * P = {x : Ax <= factor b}; factor > 0 keeps the kind"""
        if factor <= 0:
            raise DimensionError("scaling factor must be positive", factor=factor)
        budget = None if self.budget is None else (factor * self.budget[0], factor * self.budget[1])
        return PolytopeSet(
            self.matrix, _frozen(factor * self.rhs), self.kind,
            _frozen(factor * self.lower), _frozen(factor * self.upper), budget,
        )

    def slack(self, x: np.ndarray) -> np.ndarray:
        return self.rhs - self.matrix @ np.asarray(x, dtype=float)

    def contains(self, x: np.ndarray, tol: Optional[float] = None) -> bool:
        tol = get_settings().feasibility_tol if tol is None else tol
        return bool(np.all(self.slack(x) >= -tol))

    def check_member(self, x: np.ndarray, tol: Optional[float] = None, **context: Any) -> None:
        tol = get_settings().feasibility_tol if tol is None else tol
        slack = self.slack(x)
        if np.any(slack < -tol):
            row = int(np.argmin(slack))
            raise InfeasibleError(
                f"constraint row {row} violated by {-slack[row]:.3e}",
                row=row, violation=float(-slack[row]), **context,
            )

    def chebyshev_ball(self) -> Tuple[np.ndarray, float]:
        if self.kind == SetKind.BOX:
            half = 0.5 * (self.upper - self.lower)
            return 0.5 * (self.lower + self.upper), float(half.min())
        return _chebyshev_ball(self.matrix, self.rhs)

    def boundary_distance(self, x: np.ndarray) -> float:
        """Distance from an interior point to the boundary; negative outside"""
        norms = np.linalg.norm(self.matrix, axis=1)
        return float(np.min(self.slack(x) / norms))

    def max_norm(self) -> float:
        """Upper bound on max ||x|| over the set (exact for boxes)"""
        if self.kind == SetKind.SIMPLEX_BUDGET:
            return float(self.budget[1])
        return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))

    def intersect(self, other: "PolytopeSet") -> "PolytopeSet":
        if other.dim != self.dim:
            raise DimensionError("intersection of sets in different dimensions", left=self.dim, right=other.dim)
        return PolytopeSet.from_halfspaces(
            np.vstack([self.matrix, other.matrix]), np.concatenate([self.rhs, other.rhs])
        )


def ramp_constraint(lower: Sequence[float], upper: Sequence[float],
                    ramp_lower: Sequence[float], ramp_upper: Sequence[float]) -> PolytopeSet:
    """{lower <= X <= upper, ramp_lower_t <= X_{t+1} - X_t <= ramp_upper_t}"""
    lo = np.asarray(lower, dtype=float)
    T = lo.shape[0]
    if len(ramp_lower) != T - 1 or len(ramp_upper) != T - 1:
        raise DimensionError("ramp bounds need T - 1 entries", dimension=T)
    eye = np.eye(T)
    diff = eye[1:] - eye[:-1]
    matrix = np.vstack([eye, -eye, diff, -diff])
    rhs = np.concatenate([upper, -lo, ramp_upper, -np.asarray(ramp_lower, dtype=float)])
    return PolytopeSet.from_halfspaces(matrix, rhs)


# ---------------------------------------------------------------------------
# Cost family
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CostFamily:
    """f(x, X; s) = <x, c(X)> - u(x; s), c(X) = D X + d, s = (a, b_u)"""

    price_matrix: np.ndarray
    price_offset: np.ndarray
    declared_alpha: Optional[float] = None
    declared_beta: Optional[float] = None

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.price_matrix, dtype=float))
        if D.shape[0] != D.shape[1]:
            raise DimensionError("price matrix must be square", shape=D.shape)
        d = np.zeros(D.shape[0]) if self.price_offset is None else np.asarray(self.price_offset, dtype=float)
        if d.shape != (D.shape[0],):
            raise DimensionError("price offset has the wrong length", expected=D.shape[0], got=d.shape)
        object.__setattr__(self, "price_matrix", _frozen(D))
        object.__setattr__(self, "price_offset", _frozen(d))

    @property
    def dim(self) -> int:
        return self.price_matrix.shape[0]

    @property
    def param_dim(self) -> int:
        return self.dim + 1

    @staticmethod
    def curvature(params: np.ndarray) -> np.ndarray:
        return np.asarray(params)[..., 0]

    @staticmethod
    def linear_term(params: np.ndarray) -> np.ndarray:
        return np.asarray(params)[..., 1:]

    def price(self, aggregate: np.ndarray) -> np.ndarray:
        return self.price_matrix @ aggregate + self.price_offset

    def utility(self, x: np.ndarray, params: np.ndarray) -> float:
        a = self.curvature(params)
        return float(self.linear_term(params) @ x - 0.5 * a * (x @ x))

    def cost(self, x: np.ndarray, aggregate: np.ndarray, params: np.ndarray) -> float:
        return float(x @ self.price(aggregate)) - self.utility(x, params)

    def grad_own(self, x: np.ndarray, aggregate: np.ndarray, params: np.ndarray) -> np.ndarray:
        """Gradient in the first argument, aggregate held fixed"""
        return self.price(aggregate) + self.curvature(params) * x - self.linear_term(params)

    def grad_aggregate(self, x: np.ndarray) -> np.ndarray:
        return self.price_matrix.T @ x

    @cached_property
    def operator_norm(self) -> float:
        return float(np.linalg.norm(self.price_matrix, 2))

    @cached_property
    def aggregate_modulus(self) -> float:
        """lambda_min((D + D^T) / 2)"""
        sym = 0.5 * (self.price_matrix + self.price_matrix.T)
        return float(np.linalg.eigvalsh(sym)[0])

    def own_gradient_bound(self, radius: float, sup_linear: float, sup_curvature: float) -> float:
        return (
            self.operator_norm * radius + float(np.linalg.norm(self.price_offset))
            + sup_linear + sup_curvature * radius
        )

    def aggregate_gradient_bound(self, radius: float) -> float:
        return self.operator_norm * radius

    @staticmethod
    def parameter_lipschitz(radius: float) -> float:
        # |d(grad_own)/ds| <= |Δb_u| + |Δa| |x|
        return float(np.sqrt(1.0 + radius ** 2))


# ---------------------------------------------------------------------------
# Characteristic profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AffineProfile:
    """Piecewise-affine map θ -> R^m on [0, 1]; piece k is affine on [σ_k, σ_{k+1}]"""

    breakpoints: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        left = np.atleast_2d(np.asarray(self.left, dtype=float))
        right = np.atleast_2d(np.asarray(self.right, dtype=float))
        if bp.ndim != 1 or bp.shape[0] < 2 or bp[0] != 0.0 or bp[-1] != 1.0 or np.any(np.diff(bp) <= 0):
            raise ConfigError("breakpoints must increase strictly from 0 to 1", breakpoints=bp)
        if left.shape != right.shape or left.shape[0] != bp.shape[0] - 1:
            raise DimensionError("one left/right value pair is needed per piece", pieces=bp.shape[0] - 1)
        object.__setattr__(self, "breakpoints", _frozen(bp))
        object.__setattr__(self, "left", _frozen(left))
        object.__setattr__(self, "right", _frozen(right))

    @classmethod
    def constant(cls, value: Any) -> "AffineProfile":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.array([0.0, 1.0]), v[None, :], v[None, :])

    @classmethod
    def from_pieces(cls, breakpoints: Sequence[float], pieces: Sequence[Tuple[Sequence[float], Sequence[float]]]) -> "AffineProfile":
        return cls(
            np.asarray(breakpoints, dtype=float),
            np.array([p[0] for p in pieces], dtype=float),
            np.array([p[1] for p in pieces], dtype=float),
        )

    @property
    def n_pieces(self) -> int:
        return self.left.shape[0]

    @property
    def dim(self) -> int:
        return self.left.shape[1]

    def piece_of(self, theta: float) -> int:
        k = int(np.searchsorted(self.breakpoints, theta, side="right")) - 1
        return min(max(k, 0), self.n_pieces - 1)

    def on_piece(self, k: int, theta: Any) -> np.ndarray:
        """Evaluate piece k's affine map (also at its closed endpoints)"""
        lo, hi = self.breakpoints[k], self.breakpoints[k + 1]
        w = (np.asarray(theta, dtype=float) - lo) / (hi - lo)
        if w.ndim == 0:
            return self.left[k] + w * (self.right[k] - self.left[k])
        return self.left[k][None, :] + w[:, None] * (self.right[k] - self.left[k])[None, :]

    def __call__(self, theta: Any) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 0:
            return self.on_piece(self.piece_of(float(theta)), float(theta))
        idx = np.clip(np.searchsorted(self.breakpoints, theta, side="right") - 1, 0, self.n_pieces - 1)
        lo = self.breakpoints[idx]
        w = (theta - lo) / (self.breakpoints[idx + 1] - lo)
        return self.left[idx] + w[:, None] * (self.right[idx] - self.left[idx])

    def slope(self, k: int) -> np.ndarray:
        return (self.right[k] - self.left[k]) / (self.breakpoints[k + 1] - self.breakpoints[k])

    def integrate(self, lo: float, hi: float) -> np.ndarray:
        """Exact integral over [lo, hi] (midpoint rule is exact per affine piece)"""
        total = np.zeros(self.dim)
        for k in range(self.n_pieces):
            a = max(lo, self.breakpoints[k])
            b = min(hi, self.breakpoints[k + 1])
            if b > a:
                total += (b - a) * self.on_piece(k, 0.5 * (a + b))
        return total

    def endpoint_values(self) -> np.ndarray:
        return np.vstack([self.left, self.right])

    def linear_image(self, matrix: np.ndarray, offset: Optional[np.ndarray] = None) -> "AffineProfile":
        """θ -> matrix @ v(θ) + offset, still piecewise affine"""
        offset = np.zeros(matrix.shape[0]) if offset is None else offset
        return AffineProfile(self.breakpoints, self.left @ matrix.T + offset, self.right @ matrix.T + offset)


@dataclass(frozen=True, eq=False)
class NonatomicGameSpec:
    """Nonatomic aggregative game with piecewise-affine characteristics"""

    name: str
    constraint_matrix: np.ndarray
    rhs_profile: AffineProfile
    param_profile: AffineProfile
    cost: CostFamily
    aggregate_constraint: Optional[PolytopeSet] = None
    eta: Optional[float] = None
    witness: Optional[AffineProfile] = None
    reference_aggregate: Optional[np.ndarray] = None

    def __post_init__(self):
        A = _frozen(self.constraint_matrix, ndim=2)
        object.__setattr__(self, "constraint_matrix", A)
        T = self.cost.dim
        if A.shape[1] != T:
            raise DimensionError("constraint matrix width must equal the action dimension", width=A.shape[1], dimension=T)
        if self.rhs_profile.dim != A.shape[0]:
            raise DimensionError("rhs profile must have one entry per constraint row", rows=A.shape[0], got=self.rhs_profile.dim)
        if self.param_profile.dim != self.cost.param_dim:
            raise DimensionError("parameter profile must be (a, b_u)", expected=self.cost.param_dim, got=self.param_profile.dim)
        for other in (self.param_profile, self.witness):
            if other is not None and not np.array_equal(other.breakpoints, self.rhs_profile.breakpoints):
                raise ConfigError("all θ-profiles must share the same breakpoints")
        if self.witness is not None and self.witness.dim != T:
            raise DimensionError("witness must live in R^T", dimension=T, got=self.witness.dim)
        if self.aggregate_constraint is not None and self.aggregate_constraint.dim != T:
            raise DimensionError("aggregate constraint dimension mismatch", dimension=T, got=self.aggregate_constraint.dim)
        if self.reference_aggregate is not None:
            object.__setattr__(self, "reference_aggregate", _frozen(self.reference_aggregate))

        curvature = CostFamily.curvature(self.param_profile.endpoint_values())
        if np.any(curvature < 0):
            raise ConfigError("utility curvature a(s) must be nonnegative", minimum=float(curvature.min()))

        for k in range(self.n_pieces):
            for theta in self.breakpoints[k:k + 2]:
                PolytopeSet.from_halfspaces(A, self.rhs_profile.on_piece(k, theta))

        if self.aggregate_constraint is not None:
            try:
                self.aggregate_range().intersect(self.aggregate_constraint)
            except InfeasibleError as e:
                raise InfeasibleError("aggregate constraint does not meet the aggregate range", name=self.name) from e
        logger.debug("spec certified", name=self.name, pieces=self.n_pieces, dimension=T)

    @property
    def dim(self) -> int:
        return self.cost.dim

    @property
    def breakpoints(self) -> np.ndarray:
        return self.rhs_profile.breakpoints

    @property
    def n_pieces(self) -> int:
        return self.rhs_profile.n_pieces

    @property
    def constrained(self) -> bool:
        return self.aggregate_constraint is not None

    def action_set(self, theta: float, piece: Optional[int] = None) -> PolytopeSet:
        k = self.rhs_profile.piece_of(theta) if piece is None else piece
        return PolytopeSet.from_halfspaces(self.constraint_matrix, self.rhs_profile.on_piece(k, theta))

    @cached_property
    def box_rows(self) -> Optional[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
        """(lower rows, lower coefs, upper rows, upper coefs) when every X_θ is a box with one row per side"""
        A = self.constraint_matrix
        nonzero = np.abs(A) > 0
        if np.any(nonzero.sum(axis=1) != 1):
            return None
        T = self.dim
        coords = np.argmax(nonzero, axis=1)
        coefs = A[np.arange(A.shape[0]), coords]
        lower_rows, upper_rows = [], []
        for k in range(T):
            lows = np.flatnonzero((coords == k) & (coefs < 0))
            ups = np.flatnonzero((coords == k) & (coefs > 0))
            if len(lows) != 1 or len(ups) != 1:
                return None
            lower_rows.append(lows[0])
            upper_rows.append(ups[0])
        lower_rows, upper_rows = np.array(lower_rows), np.array(upper_rows)
        return lower_rows, coefs[lower_rows], upper_rows, coefs[upper_rows]

    @property
    def is_box_family(self) -> bool:
        return self.box_rows is not None

    def bound_profiles(self) -> Tuple[AffineProfile, AffineProfile]:
        """Affine lower / upper corner profiles of a box family"""
        if self.box_rows is None:
            raise DimensionError("bound profiles exist only for box families")
        lower_rows, lower_coefs, upper_rows, upper_coefs = self.box_rows
        p = self.constraint_matrix.shape[0]
        select_lo = np.zeros((self.dim, p))
        select_hi = np.zeros((self.dim, p))
        select_lo[np.arange(self.dim), lower_rows] = 1.0 / lower_coefs
        select_hi[np.arange(self.dim), upper_rows] = 1.0 / upper_coefs
        return self.rhs_profile.linear_image(select_lo), self.rhs_profile.linear_image(select_hi)

    def union_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Bounding box of the union of all X_θ"""
        lows, highs = [], []
        for k in range(self.n_pieces):
            lo, hi = _lifted_bounds(self.constraint_matrix, self.rhs_profile.left[k], self.rhs_profile.right[k])
            lows.append(lo)
            highs.append(hi)
        return np.min(lows, axis=0), np.max(highs, axis=0)

    def aggregate_range(self) -> PolytopeSet:
        """S = ∫ X_θ dθ: exact for box families, inner box around the witness otherwise"""
        if self.is_box_family:
            lower, upper = self.bound_profiles()
            return PolytopeSet.box(lower.integrate(0.0, 1.0), upper.integrate(0.0, 1.0))
        if self.witness is not None:
            center = self.witness.integrate(0.0, 1.0)
            half = self.eta / np.sqrt(self.dim)
            return PolytopeSet.box(center - half, center + half)
        logger.warning("aggregate range uses the outer bounding box", name=self.name)
        lo, hi = self.union_bounds()
        return PolytopeSet.box(lo, hi)

    def aggregate_feasible_set(self) -> PolytopeSet:
        """S ∩ A"""
        S = self.aggregate_range()
        return S if self.aggregate_constraint is None else S.intersect(self.aggregate_constraint)

    def with_price(self, price_matrix: Any) -> "NonatomicGameSpec":
        """Copy with a different price matrix (declared moduli kept)"""
        cost = CostFamily(np.asarray(price_matrix, dtype=float), self.cost.price_offset,
                          self.cost.declared_alpha, self.cost.declared_beta)
        return NonatomicGameSpec(
            self.name, self.constraint_matrix, self.rhs_profile, self.param_profile, cost,
            self.aggregate_constraint, self.eta, self.witness, self.reference_aggregate,
        )


# ---------------------------------------------------------------------------
# Finite games
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FiniteGame:
    """I-player aggregative game G^ν(A^ν); player i has weight μ_i and set X_i = μ_i X_{b̄_i}"""

    weights: np.ndarray
    action_sets: Tuple[PolytopeSet, ...]
    params: np.ndarray
    representative_rhs: np.ndarray
    cost: CostFamily
    constraint_matrix: np.ndarray
    aggregate_constraint: Optional[PolytopeSet] = None
    cells: Tuple[Tuple[Interval, ...], ...] = ()
    nu: int = 0
    method: str = "uniform"

    def __post_init__(self):
        mu = _frozen(self.weights)
        object.__setattr__(self, "weights", mu)
        object.__setattr__(self, "params", _frozen(self.params, ndim=2))
        object.__setattr__(self, "representative_rhs", _frozen(self.representative_rhs, ndim=2))
        object.__setattr__(self, "constraint_matrix", _frozen(self.constraint_matrix, ndim=2))
        I = mu.shape[0]
        if I == 0:
            raise BuilderError("a finite game needs at least one player")
        if np.any(mu <= 0):
            raise BuilderError("player weights must be positive", minimum=float(mu.min()))
        if abs(mu.sum() - 1.0) > WEIGHT_TOL:
            raise BuilderError("player weights must sum to one", total=float(mu.sum()))
        if len(self.action_sets) != I or self.params.shape != (I, self.cost.param_dim):
            raise DimensionError("one action set and parameter vector per player", players=I)
        if self.cells and len(self.cells) != I:
            raise DimensionError("provenance must list one cell per player", players=I, cells=len(self.cells))

    @classmethod
    def from_representatives(cls, weights: Any, representative_rhs: Any, params: Any, cost: CostFamily,
                             constraint_matrix: Any, aggregate_constraint: Optional[PolytopeSet] = None,
                             cells: Sequence[Sequence[Interval]] = (), nu: int = 0,
                             method: str = "uniform") -> "FiniteGame":
        mu = np.asarray(weights, dtype=float)
        rhs = np.atleast_2d(np.asarray(representative_rhs, dtype=float))
        A = np.atleast_2d(np.asarray(constraint_matrix, dtype=float))
        action_sets = tuple(PolytopeSet.from_halfspaces(A, m * b) for m, b in zip(mu, rhs))
        frozen_cells = tuple(tuple((float(lo), float(hi)) for lo, hi in cell) for cell in cells)
        return cls(mu, action_sets, params, rhs, cost, A, aggregate_constraint, frozen_cells, nu, method)

    @property
    def n_players(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.cost.dim

    @property
    def mu_max(self) -> float:
        return float(self.weights.max())

    @property
    def has_provenance(self) -> bool:
        return len(self.cells) == self.n_players

    @cached_property
    def box_bounds(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """Stacked (I, T) lower / upper corners when every X_i is a box"""
        if any(s.kind != SetKind.BOX for s in self.action_sets):
            return None
        lower = np.vstack([s.lower for s in self.action_sets])
        upper = np.vstack([s.upper for s in self.action_sets])
        lower.setflags(write=False)
        upper.setflags(write=False)
        return lower, upper

    def aggregate(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x).sum(axis=0)

    def check_profile(self, x: Any) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        if arr.shape != (self.n_players, self.dim):
            raise DimensionError("profile must be I x T", expected=(self.n_players, self.dim), got=arr.shape)
        return arr

    def check_feasible(self, x: np.ndarray, tol: Optional[float] = None) -> None:
        for i, (action_set, xi) in enumerate(zip(self.action_sets, x)):
            action_set.check_member(xi, tol, player=i)
        if self.aggregate_constraint is not None:
            self.aggregate_constraint.check_member(self.aggregate(x), tol, player="aggregate")

    def summary(self) -> Dict[str, Any]:
        return {"nu": self.nu, "method": self.method, "players": self.n_players, "mu_max": self.mu_max}


def operator(game: FiniteGame, x: np.ndarray, mode: SolveMode = SolveMode.VNE) -> np.ndarray:
    """Stacked gradients G(x)_i for every player"""
    x = game.check_profile(x)
    mu = game.weights
    a = CostFamily.curvature(game.params)
    b = CostFamily.linear_term(game.params)
    price = game.cost.price(game.aggregate(x))
    G = price[None, :] + (a / mu)[:, None] * x - b
    if SolveMode(mode) == SolveMode.VNE:
        G = G + x @ game.cost.price_matrix
    return G


def eval_cost(game: FiniteGame, i: int, x: Any, tol: Optional[float] = None) -> float:
    """f_i(x_i, X) = μ_i f(x_i / μ_i, X; s̄_i)"""
    x = game.check_profile(x)
    if not 0 <= i < game.n_players:
        raise DimensionError("player index out of range", player=i, players=game.n_players)
    game.check_feasible(x, tol)
    mu = game.weights[i]
    return float(mu * game.cost.cost(x[i] / mu, game.aggregate(x), game.params[i]))


def grad_own(game: FiniteGame, i: int, x: Any, mode: SolveMode = SolveMode.VNE) -> np.ndarray:
    """vne: gradient of x_i -> f_i(x_i, x_i + X_{-i}); pseudo: aggregate held fixed"""
    x = game.check_profile(x)
    if not 0 <= i < game.n_players:
        raise DimensionError("player index out of range", player=i, players=game.n_players)
    mu = game.weights[i]
    g = game.cost.grad_own(x[i] / mu, game.aggregate(x), game.params[i])
    if SolveMode(mode) == SolveMode.VNE:
        g = g + game.cost.grad_aggregate(x[i])
    return g


def vne_convexity_margin(game: FiniteGame) -> np.ndarray:
    """Per player λ_min(D + D^T) + a_i / μ_i; negative means the VNE subproblem is nonconvex"""
    return 2.0 * game.cost.aggregate_modulus + CostFamily.curvature(game.params) / game.weights


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    """Solver output for one finite game"""

    profile: np.ndarray
    aggregate: np.ndarray
    residual: float
    iterations: int
    converged: bool
    wall_time: float
    mode: SolveMode = SolveMode.VNE
    final_step: float = float("nan")
    telemetry: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_profile(cls, profile: np.ndarray, **kwargs: Any) -> "EquilibriumResult":
        profile = _frozen(profile, ndim=2)
        return cls(profile=profile, aggregate=_frozen(profile.sum(axis=0)), **kwargs)
