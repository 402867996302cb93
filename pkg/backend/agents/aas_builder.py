"""
AAS Builder Agent

This agent is responsible for:
1. Cutting Θ = [0, 1] into player cells (uniform splitting or meshgrid preimages)
2. Choosing representative characteristics per cell (midpoint or cell average)
3. Assembling the scaled finite game X_i = μ_i X_σ̄, f_i(x, Y) = μ_i f(x / μ_i, Y; s̄_i), A^ν = A
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Tuple, Union

import numpy as np
import structlog

from models.game import AffineProfile, FiniteGame, Interval, NonatomicGameSpec
from models.schemas import AASMethod
from utils.errors import BuilderError

logger = structlog.get_logger(__name__)

DROP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PartitionCell:
    """One player's share of Θ"""

    intervals: Tuple[Interval, ...]
    pieces: Tuple[int, ...]
    measure: float
    representative_rhs: np.ndarray
    params: np.ndarray


@dataclass(frozen=True, eq=False)
class Partition:
    cells: Tuple[PartitionCell, ...]
    nu: int
    method: AASMethod
    add_theta_axis: bool = False

    @property
    def weights(self) -> np.ndarray:
        return np.array([cell.measure for cell in self.cells])


class AASBuilder:
    """Builds the ν-th element of an atomic approximating sequence"""

    def __init__(self, spec: NonatomicGameSpec, drop_tol: float = DROP_TOL):
        if not isinstance(spec.rhs_profile, AffineProfile) or not isinstance(spec.param_profile, AffineProfile):
            raise BuilderError("characteristic profiles must be piecewise affine")
        self.spec = spec
        self.drop_tol = drop_tol

    def _check_nu(self, nu: int) -> int:
        if int(nu) != nu or nu < 1:
            raise BuilderError("ν must be a positive integer", nu=nu)
        return int(nu)

    def partition_uniform(self, nu: int) -> Partition:
        """Cells [c_{i-1}, c_i) from the cut set {k/ν} ∪ {σ_k}, last cell closed"""
        nu = self._check_nu(nu)
        spec = self.spec
        cuts = np.unique(np.concatenate([np.arange(nu + 1) / nu, spec.breakpoints]))
        cells: List[PartitionCell] = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi - lo < self.drop_tol:
                logger.debug("dropping null cell", lo=float(lo), hi=float(hi))
                continue
            mid = 0.5 * (lo + hi)
            k = spec.rhs_profile.piece_of(mid)
            cells.append(PartitionCell(
                intervals=((float(lo), float(hi)),),
                pieces=(k,),
                measure=float(hi - lo),
                representative_rhs=spec.rhs_profile.on_piece(k, mid),
                params=spec.param_profile.on_piece(k, mid),
            ))
        return Partition(tuple(cells), nu, AASMethod.UNIFORM)

    def _stacked_profile(self, add_theta_axis: bool) -> Tuple[np.ndarray, np.ndarray]:
        spec = self.spec
        left = np.hstack([spec.rhs_profile.left, spec.param_profile.left])
        right = np.hstack([spec.rhs_profile.right, spec.param_profile.right])
        if add_theta_axis:
            left = np.hstack([left, spec.breakpoints[:-1, None]])
            right = np.hstack([right, spec.breakpoints[1:, None]])
        return left, right

    def partition_meshgrid(self, nu: int, add_theta_axis: bool = False) -> Partition:
        """Players are the nonempty preimages of a ν-per-axis grid over the parameter box"""
        nu = self._check_nu(nu)
        spec = self.spec
        bp = spec.breakpoints
        left, right = self._stacked_profile(add_theta_axis)
        values = np.vstack([left, right])
        lo = values.min(axis=0)
        span = values.max(axis=0) - lo
        active = span > self.drop_tol
        step = np.where(active, span / nu, 1.0)

        groups: Dict[Tuple[int, ...], List[Tuple[float, float, int]]] = OrderedDict()
        for k in range(spec.n_pieces):
            a, b = bp[k], bp[k + 1]
            points = [a, b]
            for j in np.flatnonzero(active):
                vl, vr = left[k, j], right[k, j]
                if vl == vr:
                    continue
                w = (lo[j] + step[j] * np.arange(1, nu) - vl) / (vr - vl)
                points.extend(a + w[(w > 0) & (w < 1)] * (b - a))
            points = np.unique(points)
            for c0, c1 in zip(points[:-1], points[1:]):
                if c1 <= c0:
                    continue
                value = left[k] + ((0.5 * (c0 + c1) - a) / (b - a)) * (right[k] - left[k])
                index = np.where(active, np.clip(np.floor((value - lo) / step), 0, nu - 1), 0).astype(int)
                key = tuple(int(v) for v in index)
                runs = groups.setdefault(key, [])
                if runs and runs[-1][2] == k and runs[-1][1] == c0:
                    runs[-1] = (runs[-1][0], float(c1), k)
                else:
                    runs.append((float(c0), float(c1), k))

        cells: List[PartitionCell] = []
        for key, runs in groups.items():
            measure = float(sum(c1 - c0 for c0, c1, _ in runs))
            if measure < self.drop_tol:
                logger.debug("dropping null meshgrid cell", index=key, measure=measure)
                continue
            rhs_integral = np.sum([spec.rhs_profile.integrate(c0, c1) for c0, c1, _ in runs], axis=0)
            param_integral = np.sum([spec.param_profile.integrate(c0, c1) for c0, c1, _ in runs], axis=0)
            cells.append(PartitionCell(
                intervals=tuple((c0, c1) for c0, c1, _ in runs),
                pieces=tuple(k for _, _, k in runs),
                measure=measure,
                representative_rhs=rhs_integral / measure,
                params=param_integral / measure,
            ))

        partition = Partition(tuple(cells), nu, AASMethod.MESHGRID, add_theta_axis)
        if not add_theta_axis and partition.weights.max() > 1.0 / nu + self.drop_tol:
            logger.info(
                "constant-parameter plateau detected, appending the θ axis",
                nu=nu, largest_cell=float(partition.weights.max()),
            )
            return self.partition_meshgrid(nu, add_theta_axis=True)
        return partition

    def assemble(self, partition: Partition) -> FiniteGame:
        spec = self.spec
        game = FiniteGame.from_representatives(
            weights=partition.weights,
            representative_rhs=np.vstack([cell.representative_rhs for cell in partition.cells]),
            params=np.vstack([cell.params for cell in partition.cells]),
            cost=spec.cost,
            constraint_matrix=spec.constraint_matrix,
            aggregate_constraint=spec.aggregate_constraint,
            cells=[cell.intervals for cell in partition.cells],
            nu=partition.nu,
            method=partition.method.value,
        )
        logger.info("finite game built", spec=spec.name, **game.summary())
        return game

    def build_uniform(self, nu: int) -> FiniteGame:
        return self.assemble(self.partition_uniform(nu))

    def build_meshgrid(self, nu: int, add_theta_axis: bool = False) -> FiniteGame:
        return self.assemble(self.partition_meshgrid(nu, add_theta_axis))

    def build(self, nu: int, method: Union[AASMethod, str] = AASMethod.UNIFORM,
              add_theta_axis: bool = False) -> FiniteGame:
        if AASMethod(method) == AASMethod.MESHGRID:
            return self.build_meshgrid(nu, add_theta_axis)
        return self.build_uniform(nu)


def build_uniform(spec: NonatomicGameSpec, nu: int) -> FiniteGame:
    return AASBuilder(spec).build_uniform(nu)


def build_meshgrid(spec: NonatomicGameSpec, nu: int, add_theta_axis: bool = False) -> FiniteGame:
    return AASBuilder(spec).build_meshgrid(nu, add_theta_axis)
