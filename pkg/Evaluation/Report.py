"""
Metrics table and plots.

metrics.csv       one row per evaluation point
achievement.svg   overall goal achievement vs frames, one curve per run
dimensions.svg    per-dimension achievement strip over evaluation points
"""

import logging
from pathlib import Path
from typing import Dict, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from shared.errors import EmptyReportError  # noqa: E402
from shared.schemas import MetricsRow  # noqa: E402

log = logging.getLogger(__name__)

BASE_COLUMNS = ["frames", "wall_seconds", "td_loss", "disc_loss", "mean_reward", "achievement_overall"]
CURVE_GID = "curve-{}"

plt.rcParams["svg.hashsalt"] = "discern"


def metrics_frame(rows: Sequence[MetricsRow]) -> pd.DataFrame:
    if not rows:
        raise EmptyReportError("no metrics rows to report")
    df = pd.DataFrame([r.record() for r in rows])
    dims = sorted((c for c in df.columns if c.startswith("achievement_dim_")), key=lambda c: int(c.rsplit("_", 1)[1]))
    return df[BASE_COLUMNS + dims]


def write_metrics_csv(rows: Sequence[MetricsRow], path: Path) -> Path:
    path = Path(path)
    metrics_frame(rows).to_csv(path, index=False)
    return path


def read_metrics_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path)


def plot_learning_curves(curves: Mapping[str, pd.DataFrame], path: Path) -> Path:
    """Overall achievement against frames; each curve's SVG group id is curve-<label>."""
    if not curves:
        raise EmptyReportError("no curves to plot")
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, df in curves.items():
        (line,) = ax.plot(df["frames"], df["achievement_overall"], label=label)
        line.set_gid(CURVE_GID.format(label))
    ax.set_xlabel("frames")
    ax.set_ylabel("goal achievement")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def plot_dimension_strip(df: pd.DataFrame, path: Path) -> Path:
    dims = [c for c in df.columns if c.startswith("achievement_dim_")]
    if not dims:
        raise EmptyReportError("metrics carry no per-dimension achievement")
    fig, ax = plt.subplots(figsize=(7, 1 + 0.5 * len(dims)))
    image = ax.imshow(df[dims].to_numpy().T, aspect="auto", vmin=0.0, vmax=1.0, cmap="viridis",
                      interpolation="nearest")
    ax.set_yticks(range(len(dims)))
    ax.set_yticklabels([f"dim {c.rsplit('_', 1)[1]}" for c in dims])
    ticks = list(range(len(df)))
    ax.set_xticks(ticks)
    ax.set_xticklabels([str(int(f)) for f in df["frames"]], rotation=45, ha="right", fontsize=7)
    ax.set_xlabel("frames")
    fig.colorbar(image, ax=ax, label="achievement")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def emit_report(rows: Sequence[MetricsRow], out_dir: Path, label: str = "run") -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    df = metrics_frame(rows)
    paths = {
        "metrics": write_metrics_csv(rows, out_dir / "metrics.csv"),
        "achievement": plot_learning_curves({label: df}, out_dir / "achievement.svg"),
        "dimensions": plot_dimension_strip(df, out_dir / "dimensions.svg"),
    }
    log.info("report written dir=%s rows=%d", out_dir, len(df))
    return paths


def emit_comparison(runs: Mapping[str, Path], out_path: Path) -> Path:
    """One achievement plot across several finished runs (label -> metrics.csv)."""
    curves = {label: read_metrics_csv(p) for label, p in runs.items()}
    return plot_learning_curves(curves, out_path)
