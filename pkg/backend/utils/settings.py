"""
Runtime settings loaded from the environment (prefix AGGSOLVE_) and an optional .env file.
"""

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Tolerances, caps and logging switches shared by every module"""

    model_config = SettingsConfigDict(env_prefix="AGGSOLVE_", env_file=".env", extra="ignore")

    threads: int = Field(1, ge=1, description="Maximum number of sweep rows computed concurrently")
    feasibility_tol: float = Field(1e-9, gt=0, description="Membership tolerance for constraint rows")
    max_proj_iters: int = Field(10_000, ge=1, description="Dykstra iteration cap")
    dykstra_tol: float = Field(1e-10, gt=0, description="Dykstra successive-iterate tolerance")
    vertex_dim_cap: int = Field(4, ge=1, description="Largest dimension for vertex enumeration")
    monotone_pairs: int = Field(1_000, ge=1, description="Random pairs used by monotonicity checks")
    log_level: str = Field("INFO", description="Root log level")
    log_json: bool = Field(False, description="Render log events as JSON lines")


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
