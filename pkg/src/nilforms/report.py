"""Result persistence: CSV tables, a JSON manifest, and report figures.

All floats are written in scientific notation with 17 significant digits so
reruns with an identical config and seed produce byte-identical CSVs.  The
manifest records a sha256 per emitted file; figures are rendered with the
Agg backend next to the delimited output and listed in the same manifest.
"""
from __future__ import annotations

import hashlib
import json
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .config import RunConfig, config_dict

FMT = "%.16e"


def fnum(x) -> str:
    if x is None:
        return "nan"
    x = float(x)
    if np.isnan(x):
        return "nan"
    return FMT % x


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for c in row:
            if isinstance(c, bool):
                cells.append("true" if c else "false")
            elif isinstance(c, float):
                cells.append(fnum(c))
            else:
                cells.append(str(c))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def sha256_of(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: str, cfg: RunConfig, files: list[str],
                   timings_ms: dict) -> str:
    manifest = {
        "config": config_dict(cfg),
        "version": __version__,
        "files": [
            {"name": os.path.basename(f), "sha256": sha256_of(f)}
            for f in sorted(files)
        ],
        "timings_ms": {k: round(v, 3) for k, v in sorted(timings_ms.items())},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _save(fig, path: str) -> str:
    fig.savefig(path, dpi=130, metadata={"Software": None})
    plt.close(fig)
    return path


CLASS_COLORS = {"kernel": "tab:green", "1": "tab:gray", "2": "tab:blue",
                "3": "tab:purple"}


def render_sweep_figures(out_dir: str, records, fits_by_degree, reports_by_degree):
    """Log-log eigenvalue tracks per degree plus the convergence diagnostics."""
    paths = []
    degrees = [r.degree for r in records]
    ncols = max(1, len(records))
    fig, axes = plt.subplots(1, ncols, figsize=(4.0 * ncols, 3.4), squeeze=False)
    for ax, rec in zip(axes[0], records):
        fit_by_id = {f.track_id: f for f in fits_by_degree.get(rec.degree, [])}
        for t in rec.tracks:
            eps = [rec.schedule[j] for j in range(t.first, t.last + 1)]
            lam = [max(rec.eigenvalue(t, j), 1e-18) for j in range(t.first, t.last + 1)]
            f = fit_by_id.get(t.track_id)
            cls = f.class_l if f else "unclassified"
            color = CLASS_COLORS.get(cls, "tab:red")
            ax.loglog(eps, lam, "o-", ms=2.5, lw=0.9, color=color, alpha=0.85)
        ax.set_title(f"degree k={rec.degree}")
        ax.set_xlabel(r"$\varepsilon$")
        ax.set_ylabel(r"$\lambda$")
        ax.invert_xaxis()
    fig.suptitle("Laplacian eigenvalue tracks along the adiabatic schedule")
    fig.tight_layout()
    paths.append(_save(fig, os.path.join(out_dir, "eigenvalues.png")))

    any_rows = any(reports_by_degree.get(k) for k in degrees)
    if any_rows:
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.2, 3.4))
        for k in degrees:
            for rep in reports_by_degree.get(k, []):
                ax1.semilogy(rep.eps, np.maximum(rep.beta_norm, 1e-18), "o-",
                             ms=2.5, lw=0.9, label=rep.track_id)
                ax2.semilogy(rep.eps, np.maximum(rep.rumin_distance, 1e-18), "o-",
                             ms=2.5, lw=0.9)
        ax1.set_xscale("log")
        ax2.set_xscale("log")
        ax1.invert_xaxis()
        ax2.invert_xaxis()
        ax1.set_xlabel(r"$\varepsilon$")
        ax2.set_xlabel(r"$\varepsilon$")
        ax1.set_ylabel(r"$\|\beta_\varepsilon\|$")
        ax2.set_ylabel("distance to the Rumin space")
        if sum(len(v) for v in reports_by_degree.values()) <= 10:
            ax1.legend(fontsize=6)
        fig.suptitle("Convergence of tracked near-harmonic families")
        fig.tight_layout()
        paths.append(_save(fig, os.path.join(out_dir, "convergence.png")))
    return paths


def render_rumin_figure(out_dir: str, fiber_dims: dict[int, int],
                        harmonic_rows: list[tuple[str, int, int]],
                        orders: list[tuple[str, int, float]]):
    """Bar chart of per-degree dimensions and the fitted operator orders."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.2, 3.4))
    ks = sorted(fiber_dims)
    ax1.bar([k - 0.2 for k in ks], [fiber_dims[k] for k in ks], width=0.38,
            label="fiber dim of the constrained space")
    sectors = sorted({s for s, _, _ in harmonic_rows})
    for i, sec in enumerate(sectors):
        vals = {k: d for s, k, d in harmonic_rows if s == sec}
        ax1.bar([k + 0.2 + 0.12 * (i - len(sectors) / 2) for k in sorted(vals)],
                [vals[k] for k in sorted(vals)], width=0.1, label=f"harmonic ({sec})")
    ax1.set_xlabel("degree k")
    ax1.set_ylabel("dimension")
    ax1.legend(fontsize=6)
    if orders:
        names = [f"{op} (k={k})" for op, k, _ in orders]
        ax2.bar(range(len(orders)), [v for _, _, v in orders], width=0.5)
        ax2.set_xticks(range(len(orders)), names, rotation=30, fontsize=6)
        ax2.axhline(1.0, color="gray", lw=0.6, ls="--")
        ax2.axhline(2.0, color="gray", lw=0.6, ls="--")
        ax2.set_ylabel("fitted symbol order")
    fig.suptitle("Rumin complex structure")
    fig.tight_layout()
    return [_save(fig, os.path.join(out_dir, "rumin_summary.png"))]
