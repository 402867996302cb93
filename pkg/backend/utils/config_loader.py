"""
Config Loader

Reads and writes the YAML game configs:
1. Parses YAML with line diagnostics and validates it against GameConfig
2. Turns a validated config into a NonatomicGameSpec (and a FiniteGame when a game section is present)
3. Serializes built games back into the same format
"""

from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import structlog
import yaml
from pydantic import ValidationError

from models.game import AffineProfile, CostFamily, FiniteGame, NonatomicGameSpec, PolytopeSet, ramp_constraint
from models.schemas import AASMethod, ConstraintKind, ConstraintSection, GameConfig, GameSection
from utils.errors import ConfigError

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]


def _field_path(loc: Any) -> str:
    return ".".join(str(part) for part in loc)


def parse_config(data: Any, source: str = "<memory>") -> GameConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level", source=source)
    try:
        return GameConfig.model_validate(data)
    except ValidationError as e:
        problems = [f"{_field_path(err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError(
            f"invalid config {source}: " + "; ".join(problems),
            source=source,
            fields=[_field_path(err["loc"]) for err in e.errors()],
        ) from e


def load_config(path: PathLike) -> GameConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", path=str(path)) from e
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"YAML syntax error in {path}" + (f" at line {line}" if line else ""),
                          path=str(path), line=line) from e
    config = parse_config(data, str(path))
    logger.debug("config loaded", path=str(path), name=config.name)
    return config


def write_config(config: GameConfig, path: PathLike) -> None:
    payload = config.model_dump(mode="json", exclude_none=True)
    Path(path).write_text(yaml.safe_dump(payload, sort_keys=False), encoding="utf-8")


def build_constraint(section: ConstraintSection, dimension: int) -> Optional[PolytopeSet]:
    kind = section.kind
    if kind == ConstraintKind.NONE:
        return None
    if kind == ConstraintKind.BOX:
        return PolytopeSet.box(section.lower, section.upper)
    if kind == ConstraintKind.RAMP:
        return ramp_constraint(section.lower, section.upper, section.ramp_lower, section.ramp_upper)
    matrix = np.atleast_2d(np.asarray(section.matrix, dtype=float))
    if matrix.shape[1] != dimension:
        raise ConfigError("constraint.matrix width must equal family.dimension",
                          width=matrix.shape[1], dimension=dimension)
    return PolytopeSet.from_halfspaces(matrix, section.rhs)


def spec_from_config(config: GameConfig) -> NonatomicGameSpec:
    family = config.family
    profile = config.theta_profile
    cost = CostFamily(
        np.asarray(family.price_matrix, dtype=float),
        None if family.price_offset is None else np.asarray(family.price_offset, dtype=float),
        family.declared_alpha,
        family.declared_beta,
    )
    witness = None
    if profile.witness is not None:
        witness = AffineProfile.from_pieces(profile.breakpoints, profile.witness)
    reference = config.constraint.reference_aggregate
    return NonatomicGameSpec(
        name=config.name,
        constraint_matrix=np.asarray(profile.constraint_matrix, dtype=float),
        rhs_profile=AffineProfile.from_pieces(profile.breakpoints, profile.rhs),
        param_profile=AffineProfile.from_pieces(profile.breakpoints, profile.params),
        cost=cost,
        aggregate_constraint=build_constraint(config.constraint, family.dimension),
        eta=profile.eta,
        witness=witness,
        reference_aggregate=None if reference is None else np.asarray(reference, dtype=float),
    )


def game_section(game: FiniteGame) -> GameSection:
    return GameSection(
        nu=game.nu,
        method=AASMethod(game.method),
        weights=game.weights.tolist(),
        representative_rhs=game.representative_rhs.tolist(),
        params=game.params.tolist(),
        cells=[list(cell) for cell in game.cells],
    )


def game_from_config(config: GameConfig, spec: Optional[NonatomicGameSpec] = None) -> FiniteGame:
    section = config.game
    if section is None:
        raise ConfigError("config has no game section")
    spec = spec or spec_from_config(config)
    return FiniteGame.from_representatives(
        weights=section.weights,
        representative_rhs=section.representative_rhs,
        params=section.params,
        cost=spec.cost,
        constraint_matrix=spec.constraint_matrix,
        aggregate_constraint=spec.aggregate_constraint,
        cells=section.cells,
        nu=section.nu,
        method=section.method.value,
    )


def config_with_game(config: GameConfig, game: FiniteGame) -> GameConfig:
    return config.model_copy(update={"game": game_section(game)})
