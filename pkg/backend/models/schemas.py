from pydantic import BaseModel, Field, field_validator, model_validator
from typing import List, Optional, Dict, Any, Tuple, Union, Literal
from enum import Enum

class SolveMode(str, Enum):
    """Which variational inequality the finite game is solved for"""
    VNE = "vne"
    PSEUDO = "pseudo"

class AASMethod(str, Enum):
    """Partition scheme used to build one element of the approximating sequence"""
    UNIFORM = "uniform"
    MESHGRID = "meshgrid"

class SetKind(str, Enum):
    """Fast-path tag of a polytope"""
    BOX = "box"
    SIMPLEX_BUDGET = "simplex-budget"
    GENERAL = "general"

class ConstraintKind(str, Enum):
    """Aggregate constraint encodings accepted in config files"""
    NONE = "none"
    BOX = "box"
    RAMP = "ramp"
    POLYTOPE = "polytope"

class CheckStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    UNCERTIFIED = "uncertified"
    SKIPPED = "skipped"

PieceValues = Tuple[List[float], List[float]]

class SolverConfig(BaseModel):
    """Extragradient settings"""
    step: Union[float, Literal["adaptive"]] = Field("adaptive", description="Fixed step τ or 'adaptive'")
    tol: float = Field(1e-8, gt=0, description="Natural-residual threshold")
    max_iters: int = Field(100_000, ge=1, description="Iteration cap")
    mode: SolveMode = Field(SolveMode.VNE, description="vne or pseudo operator")
    seed: int = Field(0, description="Seed for random initial points")
    step_growth: float = Field(1.05, ge=1.0, description="Adaptive step growth factor")
    lipschitz: Optional[float] = Field(None, gt=0, description="Known operator Lipschitz constant")

    @field_validator("step")
    @classmethod
    def step_positive(cls, v):
        if not isinstance(v, str) and v <= 0:
            raise ValueError("fixed step must be positive")
        return v

    @model_validator(mode="after")
    def fixed_step_below_lipschitz(self):
        if not isinstance(self.step, str) and self.lipschitz is not None:
            if self.step * self.lipschitz >= 1.0:
                raise ValueError("fixed step must satisfy step * lipschitz < 1")
        return self

class FamilySection(BaseModel):
    """Linear-quadratic cost family: price D·X + d, utility <b_u(s), x> - a(s)/2 |x|^2"""
    dimension: int = Field(..., ge=1, description="Action dimension T")
    price_matrix: List[List[float]] = Field(..., description="D, T x T")
    price_offset: Optional[List[float]] = Field(None, description="d, length T (zeros if omitted)")
    declared_alpha: Optional[float] = Field(None, ge=0, description="Claimed strong monotonicity modulus")
    declared_beta: Optional[float] = Field(None, description="Claimed aggregate strong monotonicity modulus")

    @model_validator(mode="after")
    def shapes_match(self):
        T = self.dimension
        if len(self.price_matrix) != T or any(len(row) != T for row in self.price_matrix):
            raise ValueError(f"price_matrix must be {T} x {T}")
        if self.price_offset is not None and len(self.price_offset) != T:
            raise ValueError(f"price_offset must have length {T}")
        return self

class ThetaProfileSection(BaseModel):
    """Piecewise-affine characteristic profile θ -> (b_θ, s_θ)"""
    constraint_matrix: List[List[float]] = Field(..., description="Shared A_poly, p x T")
    breakpoints: List[float] = Field(default_factory=lambda: [0.0, 1.0], description="0 = σ_0 < ... < σ_K = 1")
    rhs: List[PieceValues] = Field(..., description="Per piece: [b at left end, b at right end]")
    params: List[PieceValues] = Field(..., description="Per piece: [s at left end, s at right end], s = (a, b_u)")
    witness: Optional[List[PieceValues]] = Field(None, description="Interior witness x̄ per piece")
    eta: Optional[float] = Field(None, gt=0, description="Interior slack of the witness")

    @field_validator("breakpoints")
    @classmethod
    def breakpoints_partition_unit_interval(cls, v):
        if len(v) < 2 or v[0] != 0.0 or v[-1] != 1.0:
            raise ValueError("breakpoints must start at 0 and end at 1")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        return v

    @model_validator(mode="after")
    def one_entry_per_piece(self):
        pieces = len(self.breakpoints) - 1
        for name in ("rhs", "params"):
            if len(getattr(self, name)) != pieces:
                raise ValueError(f"{name} needs one [left, right] entry per piece ({pieces})")
        if self.witness is not None and len(self.witness) != pieces:
            raise ValueError(f"witness needs one [left, right] entry per piece ({pieces})")
        if (self.witness is None) != (self.eta is None):
            raise ValueError("witness and eta must be given together")
        return self

class ConstraintSection(BaseModel):
    """Aggregate constraint A"""
    kind: ConstraintKind = Field(ConstraintKind.NONE)
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    ramp_lower: Optional[List[float]] = Field(None, description="Lower bounds on X_{t+1} - X_t")
    ramp_upper: Optional[List[float]] = Field(None, description="Upper bounds on X_{t+1} - X_t")
    matrix: Optional[List[List[float]]] = None
    rhs: Optional[List[float]] = None
    reference_aggregate: Optional[List[float]] = Field(None, description="Reference point for ρ")

    @model_validator(mode="after")
    def fields_for_kind(self):
        if self.kind in (ConstraintKind.BOX, ConstraintKind.RAMP):
            if self.lower is None or self.upper is None:
                raise ValueError(f"{self.kind.value} constraint needs lower and upper")
        if self.kind == ConstraintKind.RAMP and (self.ramp_lower is None or self.ramp_upper is None):
            raise ValueError("ramp constraint needs ramp_lower and ramp_upper")
        if self.kind == ConstraintKind.POLYTOPE and (self.matrix is None or self.rhs is None):
            raise ValueError("polytope constraint needs matrix and rhs")
        return self

class SweepSection(BaseModel):
    method: AASMethod = Field(AASMethod.UNIFORM)
    nus: List[int] = Field(default_factory=lambda: [2, 4, 8, 16, 32, 64, 128])
    add_theta_axis: bool = Field(False, description="Append θ as an extra meshgrid dimension")

    @field_validator("nus")
    @classmethod
    def nus_positive(cls, v):
        if any(nu < 1 for nu in v):
            raise ValueError("every ν must be >= 1")
        return v

class GameSection(BaseModel):
    """A built finite game, as written by the build command"""
    nu: int = Field(..., ge=1)
    method: AASMethod
    weights: List[float]
    representative_rhs: List[List[float]] = Field(..., description="b̄_i; X_i = {x : A x <= μ_i b̄_i}")
    params: List[List[float]] = Field(..., description="s̄_i per player")
    cells: List[List[Tuple[float, float]]] = Field(..., description="θ-intervals that generated each player")

    @model_validator(mode="after")
    def one_row_per_player(self):
        n = len(self.weights)
        if not (len(self.representative_rhs) == len(self.params) == len(self.cells) == n):
            raise ValueError("weights, representative_rhs, params and cells must have one entry per player")
        return self

class GameConfig(BaseModel):
    """Top-level config file"""
    name: str = Field("unnamed")
    family: FamilySection
    theta_profile: ThetaProfileSection
    constraint: ConstraintSection = Field(default_factory=ConstraintSection)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    sweep: SweepSection = Field(default_factory=SweepSection)
    game: Optional[GameSection] = None

class CheckResult(BaseModel):
    """One verified property"""
    name: str
    status: CheckStatus
    margin: Optional[float] = Field(None, description="Signed slack; negative means violated")
    details: Dict[str, Any] = Field(default_factory=dict)

class VerifyReport(BaseModel):
    config_name: str
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(check.status != CheckStatus.FAIL for check in self.checks)

SWEEP_COLUMNS = [
    "nu", "I", "mu_max", "delta", "d_sub", "lambda", "D_cap", "gate_ok",
    "bound_agg", "err_agg_sq", "bound_prof", "err_prof_sq",
    "residual", "iters", "wall_ms", "mode", "seed", "status",
]
