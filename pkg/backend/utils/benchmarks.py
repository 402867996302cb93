"""
Benchmark suite of linear-quadratic games with independently computable Wardrop equilibria.
Each member is a YAML config under data/benchmarks/ so it can be rerun or edited from the CLI.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List

from models.game import NonatomicGameSpec
from models.schemas import GameConfig
from utils.config_loader import load_config, spec_from_config
from utils.errors import ConfigError

BENCHMARK_DIR = Path(__file__).resolve().parent.parent / "data" / "benchmarks"


@dataclass(frozen=True, eq=False)
class BenchmarkCase:
    name: str
    path: Path
    config: GameConfig
    spec: NonatomicGameSpec


def benchmark_names() -> List[str]:
    return sorted(p.stem for p in BENCHMARK_DIR.glob("*.yaml"))


def benchmark_path(name: str) -> Path:
    path = BENCHMARK_DIR / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"unknown benchmark '{name}'", available=benchmark_names())
    return path


def load_benchmark(name: str) -> BenchmarkCase:
    path = benchmark_path(name)
    config = load_config(path)
    return BenchmarkCase(name=name, path=path, config=config, spec=spec_from_config(config))


def benchmark_suite() -> List[BenchmarkCase]:
    return [load_benchmark(name) for name in benchmark_names()]
