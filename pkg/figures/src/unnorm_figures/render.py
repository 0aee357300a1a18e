"""Curve-per-tau figures with confidence bands from summary CSVs.

Three kinds are supported, each reading the seven-column summary schema
(tau, lambda, estimator, value, ci_lo, ci_hi, n_used):

mse-vs-mle
    One panel per estimator, mean squared error relative to the exact
    maximum-likelihood baseline, log-log axes.
mcmle-vs-nce
    The paired error ratio of the two estimators, log-log axes, with a
    reference line at one.
existence
    Fraction of replicates whose unconstrained maximiser stays in the
    parameter set. Log x axis only: the fractions cluster near one and
    a log y axis would flatten exactly the region of interest.

NaN cells (for example a grid point whose replicates all fell out of
the domain) break the curve instead of crashing or being dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

KINDS = ("mse-vs-mle", "mcmle-vs-nce", "existence")

REQUIRED_COLUMNS = ("tau", "lambda", "estimator", "value", "ci_lo", "ci_hi")

# which summary file each kind consumes, relative to the input directory
SOURCE_FILES = {
    "mse-vs-mle": "summary_mse.csv",
    "mcmle-vs-nce": "summary_mse.csv",
    "existence": "summary_existence.csv",
}

# pinned style so that repeated renders of the same CSV are byte-identical
_STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.6,
    "lines.markersize": 4.5,
    "legend.frameon": False,
}

_TAU_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b",
               "#e377c2", "#7f7f7f")


class SchemaError(ValueError):
    """The input CSV does not match the documented summary schema."""


@dataclass(frozen=True)
class FigureSpec:
    """What to render: one summary CSV, one figure kind, one output path."""

    csv_path: Path
    kind: str
    out_path: Path

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")


def load_summary(csv_path: str | Path) -> pd.DataFrame:
    """Read a summary CSV, tolerating '#' comment headers.

    Raises SchemaError naming the first missing required column.
    """
    path = Path(csv_path)
    if not path.exists():
        raise SchemaError(f"summary file not found: {path}")
    frame = pd.read_csv(path, comment="#")
    for column in REQUIRED_COLUMNS:
        if column not in frame.columns:
            raise SchemaError(f"missing column {column!r} in {path}")
    return frame


def spec_for_dir(in_dir: str | Path, kind: str, out_path: str | Path) -> FigureSpec:
    """Build a FigureSpec pointing at the summary file this kind consumes."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    return FigureSpec(
        csv_path=Path(in_dir) / SOURCE_FILES[kind],
        kind=kind,
        out_path=Path(out_path),
    )


# ---------------------------------------------------------------------------
# Drawing helpers
# ---------------------------------------------------------------------------


def _sorted_taus(frame: pd.DataFrame) -> list[float]:
    return sorted(float(t) for t in frame["tau"].unique())


def _drawable(frame: pd.DataFrame, estimators: tuple[str, ...]) -> pd.DataFrame:
    """Rows that put at least one vertex on the canvas."""
    sub = frame[frame["estimator"].isin(estimators)]
    points = np.isfinite(sub["value"].to_numpy(dtype=float))
    bands = np.isfinite(sub["ci_lo"].to_numpy(dtype=float)) & np.isfinite(
        sub["ci_hi"].to_numpy(dtype=float)
    )
    return sub[points | bands]


def _log_scale_if_possible(ax, axis: str, values) -> None:
    """Log-scale one axis when the plotted data has a positive value.

    A sparse summary (say a two-replicate run where one estimator never
    stays in the domain) can leave a curve with no finite point at all;
    autoscaling a log axis over no data raises inside savefig, so such
    a panel falls back to a linear axis and renders empty instead.
    """
    vals = np.asarray(values, dtype=float).ravel()
    if np.any(np.isfinite(vals) & (vals > 0)):
        getattr(ax, f"set_{axis}scale")("log")


def _draw_curves(ax, frame: pd.DataFrame, estimator: str) -> None:
    """One curve per tau with its CI band; NaN rows become curve gaps."""
    sub = frame[frame["estimator"] == estimator]
    for idx, tau in enumerate(_sorted_taus(frame)):
        cell = sub[sub["tau"] == tau].sort_values("lambda")
        if cell.empty:
            continue
        lam = cell["lambda"].to_numpy(dtype=float)
        value = cell["value"].to_numpy(dtype=float)
        lo = cell["ci_lo"].to_numpy(dtype=float)
        hi = cell["ci_hi"].to_numpy(dtype=float)
        color = _TAU_COLORS[idx % len(_TAU_COLORS)]
        label = f"tau={tau:g}"
        ax.plot(lam, value, marker="o", color=color, label=label)
        band = np.isfinite(lo) & np.isfinite(hi)
        ax.fill_between(lam, np.where(band, lo, np.nan),
                        np.where(band, hi, np.nan), color=color, alpha=0.2,
                        linewidth=0)


def _render_mse_vs_mle(frame: pd.DataFrame, out_path: Path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6), sharey=True)
    drawable = _drawable(frame, ("nce", "mcmle"))
    for ax, estimator in zip(axes, ("nce", "mcmle")):
        _draw_curves(ax, frame, estimator)
        _log_scale_if_possible(ax, "x", drawable["lambda"])
        ax.set_xlabel("proposal scale lambda")
        ax.set_title(estimator)
    # sharey couples the panels, so pick the y scale from both at once
    _log_scale_if_possible(axes[0], "y", drawable[["value", "ci_lo", "ci_hi"]])
    axes[0].set_ylabel("MSE relative to exact MLE")
    axes[0].legend()
    fig.tight_layout()
    _save(fig, out_path)


def _render_mcmle_vs_nce(frame: pd.DataFrame, out_path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    _draw_curves(ax, frame, "mcmle-vs-nce")
    ax.axhline(1.0, color="black", linewidth=0.8, linestyle="--")
    drawable = _drawable(frame, ("mcmle-vs-nce",))
    _log_scale_if_possible(ax, "x", drawable["lambda"])
    _log_scale_if_possible(ax, "y", drawable[["value", "ci_lo", "ci_hi"]])
    ax.set_xlabel("proposal scale lambda")
    ax.set_ylabel("MSE ratio mcmle / nce")
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)


def _render_existence(frame: pd.DataFrame, out_path: Path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6), sharey=True)
    drawable = _drawable(frame, ("nce", "mcmle"))
    for ax, estimator in zip(axes, ("nce", "mcmle")):
        _draw_curves(ax, frame, estimator)
        _log_scale_if_possible(ax, "x", drawable["lambda"])
        # fractions live near one; a linear y axis keeps them readable
        ax.set_ylim(-0.02, 1.05)
        ax.set_xlabel("proposal scale lambda")
        ax.set_title(estimator)
    axes[0].set_ylabel("fraction of in-domain fits")
    axes[0].legend(loc="lower right")
    fig.tight_layout()
    _save(fig, out_path)


def _save(fig, out_path: Path) -> None:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    # pin the PNG metadata so repeated renders hash identically
    fig.savefig(out_path, format="png", metadata={"Software": "figures"})
    plt.close(fig)


_RENDERERS = {
    "mse-vs-mle": _render_mse_vs_mle,
    "mcmle-vs-nce": _render_mcmle_vs_nce,
    "existence": _render_existence,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure; returns the output path."""
    frame = load_summary(spec.csv_path)
    with plt.rc_context(_STYLE):
        _RENDERERS[spec.kind](frame, spec.out_path)
    return spec.out_path
