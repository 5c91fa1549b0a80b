"""Result rows, CSV emission, and figure rendering.

CSV columns are fixed: family,alpha,method,l2_rel,l1_rel,linf_rel,mae,
wall_clock_s,seed,config_hash. Floats are written with Python's shortest
round-trip repr, so a re-parsed file is bitwise equal to the rows.
"""

import csv
from dataclasses import astuple, dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

from .errors import IoError  # noqa: E402

COLUMNS = (
    "family", "alpha", "method", "l2_rel", "l1_rel", "linf_rel", "mae",
    "wall_clock_s", "seed", "config_hash",
)


@dataclass
class MetricsRow:
    family: str
    alpha: float
    method: str
    l2_rel: float
    l1_rel: float
    linf_rel: float
    mae: float
    wall_clock_s: float
    seed: int
    config_hash: str


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows(rows, path):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(COLUMNS)
            for row in rows:
                writer.writerow([_fmt(v) for v in astuple(row)])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def read_rows(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != COLUMNS:
                raise IoError(f"unexpected header in {path}: {header}")
            rows = []
            for rec in reader:
                rows.append(MetricsRow(
                    family=rec[0], alpha=float(rec[1]), method=rec[2],
                    l2_rel=float(rec[3]), l1_rel=float(rec[4]),
                    linf_rel=float(rec[5]), mae=float(rec[6]),
                    wall_clock_s=float(rec[7]), seed=int(rec[8]),
                    config_hash=rec[9],
                ))
            return rows
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None


def render_error_plot(rows, path, metric="l2_rel", labels=None):
    """Log-scale error-versus-alpha curves, one line per method (seeds are
    averaged). ``labels`` optionally remaps method names in the legend."""
    if not rows:
        raise IoError("no rows to plot")
    fig, ax = plt.subplots(figsize=(6, 4))
    methods = sorted({(r.method, r.config_hash) for r in rows})
    for method, chash in methods:
        pts = {}
        for r in rows:
            if r.method == method and r.config_hash == chash:
                pts.setdefault(r.alpha, []).append(getattr(r, metric))
        alphas = sorted(pts)
        means = [np.mean(pts[a]) for a in alphas]
        label = method
        if labels and (method, chash) in labels:
            label = labels[(method, chash)]
        ax.semilogy(alphas, means, marker="o", markersize=3, label=label)
    ax.set_xlabel("stiffness parameter")
    ax.set_ylabel(metric.replace("_", " "))
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    try:
        fig.savefig(path)
    finally:
        plt.close(fig)


def emit_results(rows, path, format="csv", **plot_kwargs):
    """Write result rows as CSV or render them as an SVG error plot."""
    if format == "csv":
        write_rows(rows, path)
    elif format == "svg":
        render_error_plot(rows, path, **plot_kwargs)
    else:
        raise IoError(f"unknown result format {format!r}")


def write_solution_csv(path, t, values, x=None, header_prefix="u"):
    """Solution grid as CSV: columns t[,x],u1..un. PDE grids are flattened
    row-major over (t, x)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if x is None:
                writer.writerow(["t"] + [f"{header_prefix}{i+1}" for i in range(n)])
                for ti, row in zip(t, values):
                    writer.writerow([repr(float(ti))] + [repr(float(v)) for v in row])
            else:
                writer.writerow(["t", "x"]
                                + [f"{header_prefix}{i+1}" for i in range(n)])
                for ti, plane in zip(t, values):
                    for xi, row in zip(x, plane):
                        writer.writerow(
                            [repr(float(ti)), repr(float(xi))]
                            + [repr(float(v)) for v in row]
                        )
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def render_solution_plot(path, t, values, reference=None, title=None):
    """Component traces of an ODE solution, optionally against a reference."""
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in range(values.shape[-1]):
        ax.plot(t, values[:, i], label=f"u{i+1}")
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        for i in range(reference.shape[-1]):
            ax.plot(t, reference[:, i], "k--", linewidth=0.8,
                    label="reference" if i == 0 else None)
    ax.set_xlabel("t")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    try:
        fig.savefig(path)
    finally:
        plt.close(fig)
