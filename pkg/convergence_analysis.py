"""
aggsolve - Convergence Analysis
Runs the benchmark suite through full ν sweeps and reports how the finite
games approach the Wardrop equilibrium next to the error bounds
"""
import sys
import os
import asyncio
from datetime import datetime

import numpy as np

# Add backend to path
backend_path = os.path.join(os.path.dirname(__file__), 'backend')
sys.path.insert(0, backend_path)

try:
    from agents.coordinator import SweepCoordinator
    from utils.benchmarks import benchmark_suite
    from utils.logging_config import configure_logging
except ImportError as e:
    print(f"❌ Import error: {e}")
    sys.exit(1)


def loglog_slope(nus, values):
    nus = np.asarray(nus, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = np.isfinite(values) & (values > 0)
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(nus[mask]), np.log(values[mask]), 1)[0])


async def analyze_convergence():
    """Sweep every benchmark in both modes and summarize rates and bound domination"""

    print("📊 aggsolve - Convergence Analysis")
    print("=" * 70)
    print(f"🕒 Analysis Time: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print("=" * 70)

    configure_logging(level="WARNING")
    cases = benchmark_suite()
    total_sweeps = 0
    dominated_sweeps = 0

    print(f"\n🧪 Running {len(cases)} benchmarks x 2 modes...")
    print("=" * 70)

    for case in cases:
        coordinator = SweepCoordinator(case.config)
        for mode in ("vne", "pseudo"):
            print(f"\n📋 {case.name} [{mode}]")
            print("-" * 40)
            total_sweeps += 1
            try:
                start_time = datetime.now()
                rows = await coordinator.run_sweep(mode=mode)
                elapsed = (datetime.now() - start_time).total_seconds()
            except Exception as e:
                print(f"❌ ERROR: {str(e)}")
                continue

            ok = rows[rows["status"] == "ok"]
            gated = ok[ok["gate_ok"]]
            dominated = bool(
                (gated["err_agg_sq"] <= gated["bound_agg"] + 1e-12).all()
                and (gated["err_prof_sq"] <= gated["bound_prof"] + 1e-12).all()
            )
            if dominated:
                dominated_sweeps += 1

            print(f"✅ Rows solved: {len(ok)}/{len(rows)} (gate holds on {len(gated)})")
            print(f"📉 err_agg_sq slope: {loglog_slope(ok['nu'], ok['err_agg_sq']):.3f}")
            print(f"📉 err_prof_sq slope: {loglog_slope(ok['nu'], ok['err_prof_sq']):.3f}")
            print(f"📐 delta slope: {loglog_slope(ok['nu'], ok['delta']):.3f}")
            if len(gated):
                print(f"🎯 Bounds dominate errors: {'✅ Yes' if dominated else '❌ No'}")
            if len(ok):
                last = ok.iloc[-1]
                print(f"🔬 ν={int(last['nu'])}: err_agg_sq={last['err_agg_sq']:.3e} bound_agg={last['bound_agg']:.3e}")
            print(f"⏱️  Sweep Time: {elapsed:.2f}s")

    print("\n" + "=" * 70)
    print("📈 OVERALL CONVERGENCE ANALYSIS")
    print("=" * 70)
    print(f"🎯 Sweeps with bound domination: {dominated_sweeps}/{total_sweeps}")

    if dominated_sweeps == total_sweeps:
        print("🎉 GRADE: every bound holds on every gated row")
    else:
        print("⚠️  GRADE: some sweeps failed or violated a bound")

    print("\n" + "=" * 70)
    print("🏁 Convergence analysis complete!")
    print("=" * 70)


if __name__ == "__main__":
    asyncio.run(analyze_convergence())
