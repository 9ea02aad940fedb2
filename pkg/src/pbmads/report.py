"""CSV and figure emission for benchmark results.

CSV layouts are part of the package contract:
  perf_profile_<tol>.csv   ratio, <solver>...      fraction solved per solver
  data_profile_<tol>.csv   kappa, <solver>...      fraction solved per solver
  summary.csv              solver, sigma, tau_tol, percent_solved
Re-running with identical seeds must reproduce every file byte for byte, so
solver columns are sorted and floats use a fixed repr.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .bench import ProfileCurve


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_profile_csv(curves: Mapping[str, ProfileCurve], path, x_name: str) -> Path:
    """Wide table: one row per breakpoint, one fraction column per solver."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    solvers = sorted(curves)
    xs = sorted({b for s in solvers for b in curves[s].breakpoints})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([x_name, *solvers])
        for x in xs:
            writer.writerow([_fmt(x), *(_fmt(curves[s].value_at(x)) for s in solvers)])
    return path


def read_profile_csv(path) -> dict[str, ProfileCurve]:
    """Inverse of write_profile_csv; consecutive duplicate fractions collapse."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        solvers = header[1:]
        columns: dict[str, list[tuple[float, float]]] = {s: [] for s in solvers}
        for row in reader:
            x = float(row[0])
            for s, cell in zip(solvers, row[1:]):
                f = float(cell)
                pts = columns[s]
                if not pts or pts[-1][1] != f:
                    pts.append((x, f))
    return {
        s: ProfileCurve(
            tuple(b for b, f in pts if f > 0.0), tuple(f for _, f in pts if f > 0.0)
        )
        for s, pts in columns.items()
    }


def write_summary_csv(rows: Sequence[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["solver", "sigma", "tau_tol", "percent_solved"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) if isinstance(row[k], float) else row[k] for k in fields})
    return path


def render_profile_figure(
    curves: Mapping[str, ProfileCurve], path, xlabel: str, title: str
) -> Path:
    """Step plot of each solver's curve, saved as a PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    x_max = 1.0
    for curve in curves.values():
        if curve.breakpoints:
            x_max = max(x_max, curve.breakpoints[-1])
    for solver in sorted(curves):
        curve = curves[solver]
        if curve.breakpoints:
            xs = [curve.breakpoints[0], *curve.breakpoints, x_max * 1.05]
            ys = [0.0, *curve.fractions, curve.fractions[-1]]
        else:
            xs, ys = [1.0, x_max * 1.05], [0.0, 0.0]
        ax.step(xs, ys, where="post", label=solver)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("fraction of instances solved")
    ax.set_ylim(-0.02, 1.02)
    if x_max > 8.0:
        ax.set_xscale("log", base=2)
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
