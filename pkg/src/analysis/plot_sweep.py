"""
Sweep figures: per eval set, whole-region and boundary-region MSE against
the segmentation sample count, one line per matte sample count.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from utils.errors import InvalidInputError  # noqa: E402

REQUIRED_COLUMNS = ("seg_n", "mat_n", "eval_set", "mse_whole", "mse_boundary")
PANELS = (("mse_whole", "whole-region MSE (x1e3)"), ("mse_boundary", "boundary-region MSE (x1e3)"))


def load_sweep_csv(csv_path):
    """Read and check a sweep CSV; malformed rows are reported by file line number"""
    try:
        df = pd.read_csv(csv_path)
    except pd.errors.EmptyDataError:
        raise InvalidInputError(f"sweep CSV {csv_path} is empty")
    except OSError as e:
        raise InvalidInputError(f"cannot read sweep CSV {csv_path}: {e}")

    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise InvalidInputError(f"sweep CSV {csv_path} lacks columns {missing}")
    if df.empty:
        raise InvalidInputError(f"sweep CSV {csv_path} has no rows")

    for col in ("seg_n", "mat_n", "mse_whole", "mse_boundary"):
        numeric = pd.to_numeric(df[col], errors="coerce")
        bad = numeric.isna() & (df[col].notna() if col == "mse_boundary" else True)
        if bad.any():
            row = int(bad.idxmax())
            # +2: header line and 1-based numbering
            raise InvalidInputError(f"malformed row {row + 2} in {csv_path}: column {col}={df[col][row]!r}")
        df[col] = numeric

    if df["eval_set"].isna().any():
        row = int(df["eval_set"].isna().idxmax())
        raise InvalidInputError(f"malformed row {row + 2} in {csv_path}: missing eval_set")

    df["seg_n"] = df["seg_n"].astype(int)
    df["mat_n"] = df["mat_n"].astype(int)
    return df


def plot_eval_set(df, eval_set, output_dir):
    """Two line charts for one eval set; returns the written paths"""
    sub = df[df["eval_set"] == eval_set]
    paths = []
    for metric, ylabel in PANELS:
        fig, ax = plt.subplots(figsize=(6, 4))
        for mat_n, group in sorted(sub.groupby("mat_n"), key=lambda g: g[0]):
            group = group.sort_values("seg_n").dropna(subset=[metric])
            if group.empty:
                continue
            ax.plot(group["seg_n"], group[metric], "-o", label=f"mat={mat_n}")
        ax.set_xlabel("segmentation samples")
        ax.set_ylabel(ylabel)
        ax.set_title(f"{eval_set}: {metric}")
        ax.grid(True, alpha=0.3)
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
        fig.tight_layout()

        path = Path(output_dir) / f"{eval_set}_{metric}.png"
        fig.savefig(path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        paths.append(path)
    return paths


def plot_sweep(csv_path, output_dir=None):
    df = load_sweep_csv(csv_path)
    output_dir = Path(output_dir or Path(csv_path).parent / "figures")
    output_dir.mkdir(parents=True, exist_ok=True)

    paths = []
    for eval_set in sorted(df["eval_set"].unique()):
        paths.extend(plot_eval_set(df, eval_set, output_dir))
    return paths

