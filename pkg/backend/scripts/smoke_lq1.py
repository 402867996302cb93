import asyncio
import json

from agents.coordinator import SweepCoordinator
from utils.benchmarks import load_benchmark


async def main():
    case = load_benchmark("lq1_homogeneous")
    coordinator = SweepCoordinator(case.config)
    rows = await coordinator.run_sweep(nus=[2, 8], mode="vne")
    out = {
        "benchmark": case.name,
        "rows": [
            {"nu": int(r.nu), "err_agg_sq": float(r.err_agg_sq), "expected": (1.0 / (2 * r.nu + 1)) ** 2,
             "status": r.status}
            for r in rows.itertuples()
        ],
    }
    print(json.dumps(out))


if __name__ == "__main__":
    asyncio.run(main())
