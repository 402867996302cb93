"""
Log-log plots of sweep errors against their bounds. matplotlib is optional.
"""

from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
import structlog

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    HAS_MATPLOTLIB = True
except ImportError:
    HAS_MATPLOTLIB = False
    plt = None

logger = structlog.get_logger(__name__)


def plot_sweep(rows: pd.DataFrame, path: Union[str, Path], title: str = "") -> bool:
    """Write the error / bound curves to path; returns False when nothing was drawn"""
    if not HAS_MATPLOTLIB:
        logger.warning("matplotlib is not installed; skipping plot", path=str(path))
        return False
    ok = rows[rows["status"] == "ok"]
    if ok.empty:
        logger.warning("no successful rows to plot", path=str(path))
        return False

    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
    for ax, (err, bound, label) in zip(axes, (
        ("err_agg_sq", "bound_agg", "aggregate"),
        ("err_prof_sq", "bound_prof", "profile"),
    )):
        nus = ok["nu"].to_numpy(dtype=float)
        for column, style in ((err, "o-"), (bound, "s--")):
            values = ok[column].to_numpy(dtype=float)
            mask = np.isfinite(values) & (values > 0)
            if mask.any():
                ax.loglog(nus[mask], values[mask], style, label=column)
        ax.set_xlabel("ν")
        ax.set_ylabel(f"squared {label} error")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    logger.info("plot written", path=str(path))
    return True
