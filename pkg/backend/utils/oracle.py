"""
Equilibrium Oracles

Independent ground truth for the solver and the bounds:
1. Wardrop equilibrium of box-constrained linear-quadratic nonatomic games, with a multiplier on
   the aggregate constraint, by a damped aggregate fixed point and per-face dual bracketing
2. Exact VNE / pseudo-VNE of tiny finite games by enumerating every active set of the KKT system
3. A strictly interior reference aggregate for the interiority constants
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import structlog
from scipy.optimize import brentq

from models.game import CostFamily, FiniteGame, NonatomicGameSpec
from models.schemas import SolveMode
from utils.errors import OracleError
from utils.geometry import integrate_piecewise

logger = structlog.get_logger(__name__)

FIXED_POINT_TOL = 1e-13
MULTIPLIER_TOL = 1e-12
CERTIFY_SAMPLES = 1000
CERTIFY_TOL = 1e-8
MAX_DOUBLINGS = 60
KKT_MAX_PLAYERS = 3
KKT_MAX_DIM = 2


def interior_witness(spec: NonatomicGameSpec) -> np.ndarray:
    """Chebyshev center of S ∩ A"""
    center, radius = spec.aggregate_feasible_set().chebyshev_ball()
    if radius <= 0:
        raise OracleError("S ∩ A has empty interior", name=spec.name, radius=radius)
    return center


# ---------------------------------------------------------------------------
# Wardrop oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WardropProfile:
    """θ -> clip((b_u(θ) - price) / a(θ), l(θ), h(θ)) for a fixed effective price"""

    spec: NonatomicGameSpec
    price: np.ndarray

    @property
    def dim(self) -> int:
        return self.spec.dim

    @cached_property
    def _bounds(self) -> Tuple[Any, Any]:
        return self.spec.bound_profiles()

    def _piece_coefficients(self, k: int) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
        spec = self.spec
        lower, upper = self._bounds
        params = spec.param_profile
        start = spec.breakpoints[k]

        def affine(profile: Any) -> Tuple[np.ndarray, np.ndarray]:
            return profile.on_piece(k, start), profile.slope(k)

        p0, p1 = affine(params)
        return {
            "a": (CostFamily.curvature(p0), CostFamily.curvature(p1)),
            "num": (CostFamily.linear_term(p0) - self.price, CostFamily.linear_term(p1)),
            "lo": affine(lower),
            "hi": affine(upper),
        }

    def _on_piece(self, k: int, theta: np.ndarray) -> np.ndarray:
        c = self._piece_coefficients(k)
        t = (np.asarray(theta, dtype=float) - self.spec.breakpoints[k])[:, None]
        a = c["a"][0] + c["a"][1] * t[:, 0]
        num = c["num"][0][None, :] + t * c["num"][1][None, :]
        lo = c["lo"][0][None, :] + t * c["lo"][1][None, :]
        hi = c["hi"][0][None, :] + t * c["hi"][1][None, :]
        return np.clip(num / a[:, None], lo, hi)

    def clip_points(self, k: int) -> np.ndarray:
        """θ in piece k where some coordinate enters or leaves its bounds"""
        c = self._piece_coefficients(k)
        length = self.spec.breakpoints[k + 1] - self.spec.breakpoints[k]
        a0, a1 = c["a"]
        roots: List[float] = []
        for bound in ("lo", "hi"):
            b0, b1 = c[bound]
            n0, n1 = c["num"]
            for j in range(self.dim):
                # num - a * bound = 0 is quadratic in t
                coefs = [-a1 * b1[j], n1[j] - a0 * b1[j] - a1 * b0[j], n0[j] - a0 * b0[j]]
                if not np.any(coefs):
                    continue
                for r in np.roots(coefs):
                    if abs(r.imag) < 1e-14 and 0.0 < r.real < length:
                        roots.append(self.spec.breakpoints[k] + r.real)
        return np.unique(roots)

    @property
    def breakpoints(self) -> np.ndarray:
        points = [self.spec.breakpoints]
        points.extend(self.clip_points(k) for k in range(self.spec.n_pieces))
        return np.unique(np.concatenate(points))

    def __call__(self, theta: Any) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        scalar = theta.ndim == 0
        theta = np.atleast_1d(theta)
        idx = np.clip(np.searchsorted(self.spec.breakpoints, theta, side="right") - 1, 0, self.spec.n_pieces - 1)
        out = np.empty((theta.shape[0], self.dim))
        for k in np.unique(idx):
            mask = idx == k
            out[mask] = self._on_piece(int(k), theta[mask])
        return out[0] if scalar else out

    def integrate(self, lo: float, hi: float) -> np.ndarray:
        total = np.zeros(self.dim)
        bp = self.spec.breakpoints
        for k in range(self.spec.n_pieces):
            a, b = max(lo, bp[k]), min(hi, bp[k + 1])
            if b > a:
                total = total + integrate_piecewise(
                    lambda th, k=k: self._on_piece(k, th), a, b, self.clip_points(k)
                )
        return total


@dataclass(frozen=True, eq=False)
class WardropEquilibrium:
    aggregate: np.ndarray
    multiplier: np.ndarray
    price_shift: np.ndarray
    profile: WardropProfile
    iterations: int
    damping: float
    margin: float
    details: Dict[str, Any] = field(default_factory=dict)


class WardropOracle:
    """Aggregate fixed point X = ∫ clip((b_u - DX - d - p) / a) with p = Gᵀλ complementary to A"""

    def __init__(self, spec: NonatomicGameSpec, damping_scale: float = 1.0, max_iters: int = 100_000):
        if not spec.is_box_family:
            raise OracleError("the Wardrop oracle supports box action sets only", name=spec.name)
        if not 0.0 < damping_scale <= 1.0:
            raise OracleError("damping scale must lie in (0, 1]", damping_scale=damping_scale)
        a_min = float(CostFamily.curvature(spec.param_profile.endpoint_values()).min())
        if a_min <= 0:
            raise OracleError("the Wardrop oracle needs a(s) > 0", minimum=a_min)
        self.spec = spec
        self.max_iters = max_iters
        inverse_a = float(integrate_piecewise(
            lambda th: 1.0 / CostFamily.curvature(spec.param_profile(th)), 0.0, 1.0, spec.breakpoints
        ))
        self.damping = damping_scale / (1.0 + spec.cost.operator_norm * inverse_a)
        self._lo, self._hi = spec.union_bounds()
        self.iterations = 0

    def response(self, price: np.ndarray) -> np.ndarray:
        return WardropProfile(self.spec, price).integrate(0.0, 1.0)

    def _price(self, X: np.ndarray, shift: np.ndarray) -> np.ndarray:
        return self.spec.cost.price(X) + shift

    def fixed_point(self, shift: np.ndarray, start: np.ndarray) -> np.ndarray:
        X = start.copy()
        omega = self.damping
        limit = 1e6 * (1.0 + float(np.max(np.abs(self._hi)) + np.max(np.abs(self._lo))))
        for _ in range(self.max_iters):
            self.iterations += 1
            Y = self.response(self._price(X, shift))
            X_next = (1.0 - omega) * X + omega * Y
            if not np.all(np.isfinite(X_next)) or np.max(np.abs(X_next)) > limit:
                raise OracleError("aggregate iteration diverged", iterate=X_next)
            if np.linalg.norm(X_next - X) <= FIXED_POINT_TOL:
                return X_next
            X = X_next
        raise OracleError("aggregate iteration did not settle", iterations=self.max_iters, last=X)

    def _constrained(self, rows: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        lam = np.zeros(rows.shape[0])
        X = self.fixed_point(np.zeros(self.spec.dim), np.zeros(self.spec.dim))
        for sweep in range(200):
            previous = lam.copy()
            for r in range(rows.shape[0]):
                cache = {"X": X}

                def excess(t: float, r: int = r) -> float:
                    trial = lam.copy()
                    trial[r] = t
                    cache["X"] = self.fixed_point(rows.T @ trial, cache["X"])
                    return float(rows[r] @ cache["X"] - rhs[r])

                if excess(0.0) <= 0.0:
                    lam[r] = 0.0
                else:
                    hi = max(lam[r], 1.0)
                    doublings = 0
                    while excess(hi) > 0.0:
                        hi *= 2.0
                        doublings += 1
                        if doublings > MAX_DOUBLINGS:
                            raise OracleError("no multiplier brings the aggregate onto the face", row=r)
                    lam[r] = brentq(excess, 0.0, hi, xtol=MULTIPLIER_TOL)
                X = self.fixed_point(rows.T @ lam, cache["X"])
            if np.max(np.abs(lam - previous)) <= MULTIPLIER_TOL:
                logger.debug("multiplier sweeps settled", sweeps=sweep + 1)
                return lam, X
        raise OracleError("dual coordinate ascent did not settle", multiplier=lam)

    def certify(self, profile: WardropProfile, samples: int = CERTIFY_SAMPLES) -> float:
        """Worst pointwise variational margin min_{y in X_θ} <g_θ, y - x_θ> over sampled θ"""
        spec = self.spec
        theta = (np.arange(samples) + 0.5) / samples
        x = profile(theta)
        params = spec.param_profile(theta)
        a = CostFamily.curvature(params)
        g = profile.price[None, :] + a[:, None] * x - CostFamily.linear_term(params)
        lower, upper = spec.bound_profiles()
        lo, hi = lower(theta), upper(theta)
        per_coord = np.minimum(g * (lo - x), g * (hi - x))
        return float(np.min(per_coord.sum(axis=1)))

    def solve(self) -> WardropEquilibrium:
        spec = self.spec
        self.iterations = 0
        A = spec.aggregate_constraint
        if A is None:
            lam = np.zeros(0)
            shift = np.zeros(spec.dim)
            X = self.fixed_point(shift, np.zeros(spec.dim))
        else:
            lam, X = self._constrained(A.matrix, A.rhs)
            shift = A.matrix.T @ lam
            if not A.contains(X, tol=CERTIFY_TOL):
                raise OracleError("oracle aggregate violates the aggregate constraint", aggregate=X)

        profile = WardropProfile(spec, spec.cost.price(X) + shift)
        margin = self.certify(profile)
        if margin < -CERTIFY_TOL:
            raise OracleError("oracle profile fails the pointwise variational check", margin=margin)
        logger.info("wardrop oracle solved", name=spec.name, aggregate=X.tolist(),
                    iterations=self.iterations, margin=margin)
        return WardropEquilibrium(
            aggregate=X,
            multiplier=lam,
            price_shift=shift,
            profile=profile,
            iterations=self.iterations,
            damping=self.damping,
            margin=margin,
            details={"fixed_point_tol": FIXED_POINT_TOL, "multiplier_tol": MULTIPLIER_TOL},
        )


def we_oracle(spec: NonatomicGameSpec, damping_scale: float = 1.0) -> WardropEquilibrium:
    return WardropOracle(spec, damping_scale).solve()


# ---------------------------------------------------------------------------
# KKT enumeration for tiny finite games
# ---------------------------------------------------------------------------

def _affine_operator(game: FiniteGame, mode: SolveMode) -> Tuple[np.ndarray, np.ndarray]:
    """G(x) = Mx + q on the flattened profile"""
    I, T = game.n_players, game.dim
    D = game.cost.price_matrix
    a = CostFamily.curvature(game.params)
    M = np.kron(np.ones((I, I)), D)
    for i in range(I):
        block = slice(i * T, (i + 1) * T)
        M[block, block] += (a[i] / game.weights[i]) * np.eye(T)
        if mode == SolveMode.VNE:
            M[block, block] += D.T
    q = (game.cost.price_offset[None, :] - CostFamily.linear_term(game.params)).reshape(-1)
    return M, q


def kkt_brute(game: FiniteGame, mode: Union[SolveMode, str] = SolveMode.VNE, tol: float = 1e-9) -> np.ndarray:
    """Exact solution of the finite VI by trying every active set"""
    mode = SolveMode(mode)
    I, T = game.n_players, game.dim
    if I > KKT_MAX_PLAYERS or T > KKT_MAX_DIM:
        raise OracleError("active-set enumeration is limited to tiny games", players=I, dimension=T)
    bounds = game.box_bounds
    if bounds is None:
        raise OracleError("active-set enumeration needs box action sets")
    lower, upper = bounds[0].reshape(-1), bounds[1].reshape(-1)
    M, q = _affine_operator(game, mode)
    n = I * T

    if game.aggregate_constraint is not None:
        agg_rows = np.hstack([game.aggregate_constraint.matrix] * I)
        agg_rhs = game.aggregate_constraint.rhs
    else:
        agg_rows = np.zeros((0, n))
        agg_rhs = np.zeros(0)
    C = np.vstack([-np.eye(n), np.eye(n), agg_rows])
    e = np.concatenate([-lower, upper, agg_rhs])

    for coords in product((0, 1, 2), repeat=n):
        box_active = [c for c, state in enumerate(coords) if state == 1] + \
                     [n + c for c, state in enumerate(coords) if state == 2]
        for agg_state in product((0, 1), repeat=agg_rows.shape[0]):
            active = box_active + [2 * n + r for r, on in enumerate(agg_state) if on]
            C_S = C[active]
            k = len(active)
            K = np.block([[M, C_S.T], [C_S, np.zeros((k, k))]])
            rhs = np.concatenate([-q, e[active]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.allclose(K @ sol, rhs, atol=1e-10):
                continue
            x, lam = sol[:n], sol[n:]
            if np.all(C @ x <= e + tol) and np.all(lam >= -tol):
                return x.reshape(I, T)
    raise OracleError("no active set satisfies the KKT conditions", players=I, dimension=T)
