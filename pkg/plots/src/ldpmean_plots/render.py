"""Turn a sweep CSV into an error-vs-axis figure.

One line per mechanism: x is one of the sweep axes, y is the mean l2 error
over rounds, with a shaded +-1 sample-std band. This layer is a pure consumer
of the CSV; the only statistics it computes are the per-group mean and std
over the ``round`` column, so the harness output stays the single source of
per-round truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

X_AXES = ("eps", "bits", "n", "d")
REQUIRED_COLUMNS = ("mechanism", "eps", "bits", "n", "d", "round", "l2_error")

SERIES_STYLE = {
    "rrsc": dict(color="#1f77b4", marker="o"),
    "privunitg": dict(color="#2ca02c", marker="s"),
    "sqkr": dict(color="#d62728", marker="^"),
    "mmrc": dict(color="#ff7f0e", marker="d"),
}


class SchemaError(ValueError):
    """CSV does not conform to the harness schema."""


class NoDataError(ValueError):
    """Filtering left nothing to plot."""


@dataclass
class PlotSpec:
    csv_path: str
    x_axis: str
    out_path: str
    filters: dict[str, str] = field(default_factory=dict)
    logy: bool = False


def load_frame(csv_path: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(csv_path, dtype={"mechanism": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise SchemaError(f"cannot parse {csv_path}: {exc}") from exc
    missing = [col for col in REQUIRED_COLUMNS if col not in frame.columns]
    if missing:
        raise SchemaError(f"{csv_path} is missing required columns: {', '.join(missing)}")
    return frame


def apply_filters(frame: pd.DataFrame, filters: dict[str, str]) -> pd.DataFrame:
    for column, value in filters.items():
        if column not in frame.columns:
            raise SchemaError(f"filter column {column!r} not in CSV")
        col = frame[column]
        if pd.api.types.is_numeric_dtype(col):
            try:
                frame = frame[col == float(value)]
            except ValueError as exc:
                raise SchemaError(f"filter {column}={value!r} is not numeric") from exc
        else:
            frame = frame[col == value]
    return frame


def aggregate(frame: pd.DataFrame, x_axis: str) -> pd.DataFrame:
    """Mean and std of l2_error over rounds, per (mechanism, x) group."""
    grouped = frame.groupby(["mechanism", x_axis])["l2_error"]
    out = grouped.agg(["mean", "std", "count"]).reset_index()
    out["std"] = out["std"].fillna(0.0)
    return out


def render(spec: PlotSpec) -> str:
    """Render the figure and return the output path."""
    if spec.x_axis not in X_AXES:
        raise SchemaError(f"x axis must be one of {X_AXES}, got {spec.x_axis!r}")
    frame = load_frame(spec.csv_path)
    frame = apply_filters(frame, spec.filters)
    frame = frame.dropna(subset=[spec.x_axis, "l2_error"])
    if frame.empty:
        raise NoDataError("no rows left after filtering")

    stats = aggregate(frame, spec.x_axis)
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=120)
    for mechanism in sorted(stats["mechanism"].unique()):
        rows = stats[stats["mechanism"] == mechanism].sort_values(spec.x_axis)
        style = SERIES_STYLE.get(mechanism, {})
        ax.plot(rows[spec.x_axis], rows["mean"], label=mechanism, **style)
        ax.fill_between(
            rows[spec.x_axis],
            rows["mean"] - rows["std"],
            rows["mean"] + rows["std"],
            alpha=0.2,
            color=style.get("color"),
        )
    if spec.logy:
        ax.set_yscale("log")
    ax.set_xlabel(spec.x_axis)
    ax.set_ylabel("l2 error")
    ax.grid(True, alpha=0.3)
    ax.legend()
    title_bits = [f"{k}={v}" for k, v in spec.filters.items()]
    ax.set_title("mean l2 error +- 1 std over rounds" + (f" ({', '.join(title_bits)})" if title_bits else ""))
    fig.tight_layout()
    # suppress the Software text chunk so rerenders are byte-identical
    fig.savefig(spec.out_path, format="png", metadata={"Software": None})
    plt.close(fig)
    return spec.out_path
