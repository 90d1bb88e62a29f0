"""Convergence plots and their long-form data files.

Input traces are the per-step CSV files written by
:func:`afomrestart.restart.write_steps_csv`.  The distance series is used
when present; otherwise the objective gap, and as a last resort the
objective minus the best value seen across all inputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import InputError  # noqa: E402

__all__ = ["Series", "first_crossing", "load_series", "plot_benchmark", "plot_series",
           "write_series_csv"]

_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "svg.hashsalt": "afomrestart",  # stable element ids across runs
    "svg.fonttype": "none",
}


@dataclass
class Series:
    scheme: str
    iterations: List[int]
    values: List[float]
    quantity: str


def _read_rows(path) -> List[dict]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read trace {path}: {exc.strerror}") from exc
    if not rows or not {"scheme", "iteration", "objective"} <= set(rows[0]):
        raise InputError(f"{path} is not a per-step trace (needs scheme, iteration, objective)")
    return rows


def load_series(paths: Sequence) -> List[Series]:
    """Read step traces and pick the best quantity available in all of them."""
    if not paths:
        raise InputError("no trace files given")
    tables = [_read_rows(p) for p in paths]

    def has(col):
        return all(r.get(col, "") != "" for rows in tables for r in rows)

    if has("rel_distance"):
        quantity = "rel_distance"
    elif has("gap"):
        quantity = "objective_gap"
    else:
        quantity = "objective_minus_best"
    best = min(float(r["objective"]) for rows in tables for r in rows)
    out = []
    for rows in tables:
        its = [int(r["iteration"]) for r in rows]
        if quantity == "rel_distance":
            vals = [float(r["rel_distance"]) for r in rows]
        elif quantity == "objective_gap":
            vals = [float(r["gap"]) for r in rows]
        else:
            vals = [float(r["objective"]) - best for r in rows]
        out.append(Series(rows[0]["scheme"], its, vals, quantity))
    return out


def write_series_csv(series: Sequence[Series], path) -> None:
    """Long form: one row per (scheme, iteration) with a log10 hint column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "iteration", "quantity", "value", "log10_value"])
        for s in series:
            for k, v in zip(s.iterations, s.values):
                lg = repr(math.log10(v)) if v > 0 else ""
                w.writerow([s.scheme, k, s.quantity, repr(float(v)), lg])


def first_crossing(series: Series, level: float) -> Optional[int]:
    for k, v in zip(series.iterations, series.values):
        if v <= level:
            return k
    return None


_LABELS = {
    "rel_distance": "relative distance to optimum",
    "objective_gap": "objective gap",
    "objective_minus_best": "objective minus best observed",
}


def plot_series(series: Sequence[Series], path, title: str = "",
                level: Optional[float] = None) -> None:
    """Log-scale convergence chart, one line per scheme."""
    if not series:
        raise InputError("nothing to plot")
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        floor = math.inf
        for s in series:
            pts = [(k, v) for k, v in zip(s.iterations, s.values) if v > 0]
            if pts:
                ks, vs = zip(*pts)
                floor = min(floor, min(vs))
                ax.plot(ks, vs, label=s.scheme, linewidth=1.2)
        ax.set_yscale("log")
        ax.set_xlabel("iterations")
        ax.set_ylabel(_LABELS[series[0].quantity])
        if level is not None:
            ax.axhline(level, color="0.4", linestyle="--", linewidth=0.8)
        if title:
            ax.set_title(title)
        if math.isfinite(floor):
            ax.legend()
        else:
            ax.text(0.5, 0.5, "every value is zero: nothing to show on a log axis",
                    transform=ax.transAxes, ha="center", va="center")
        fig.tight_layout()
        fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
        plt.close(fig)


def plot_benchmark(stats: Dict[str, object], path, title: str = "") -> None:
    """Average iterations per scheme with min/max whiskers."""
    names = list(stats)
    finite = [n for n in names if stats[n].capped == 0]
    if not finite:
        raise InputError("no scheme finished within the iteration cap")
    avg = [stats[n].average for n in finite]
    lo = [stats[n].average - stats[n].minimum for n in finite]
    hi = [stats[n].maximum - stats[n].average for n in finite]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.bar(finite, avg, yerr=[lo, hi], capsize=4, color="0.55")
        ax.set_ylabel("iterations (average, min to max)")
        if title:
            ax.set_title(title)
        ax.grid(axis="x", visible=False)
        fig.tight_layout()
        fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
        plt.close(fig)
