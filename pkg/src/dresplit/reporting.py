"""Artifact writers: delimited error tables, JSON reports, and figures.

CSV values are written with 17 significant digits so doubles round-trip
losslessly; identical studies therefore produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .convergence import ConvergenceReport

__all__ = [
    "write_errors_csv",
    "write_report_json",
    "write_orders_txt",
    "render_study_figures",
    "render_norm_history",
]

CSV_HEADER = "# nx,h,nt,tau,err"


def write_errors_csv(report: ConvergenceReport, path) -> Path:
    path = Path(path)
    lines = [CSV_HEADER]
    for e in report.entries:
        lines.append(f"{e.nx},{e.h:.16e},{e.nt},{e.tau:.16e},{e.err:.16e}")
    path.write_text("\n".join(lines) + "\n")
    return path


def report_as_dict(report: ConvergenceReport) -> dict:
    return {
        "metadata": report.metadata,
        "entries": [
            {"nx": e.nx, "h": e.h, "nt": e.nt, "tau": e.tau, "err": e.err}
            for e in report.entries
        ],
        "temporal_orders": {str(k): v for k, v in report.temporal_orders.items()},
        "spatial_orders": dict(report.spatial_orders),
        "plateaus": {str(k): v for k, v in report.plateaus.items()},
    }


def write_report_json(report: ConvergenceReport, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report_as_dict(report), indent=2, sort_keys=True) + "\n")
    return path


def write_orders_txt(report: ConvergenceReport, path) -> Path:
    path = Path(path)
    lines = ["observed convergence orders"]
    for nx in sorted(report.temporal_orders):
        lines.append(f"temporal (nx={nx}, err vs tau): {report.temporal_orders[nx]:.4f}")
    for name, slope in sorted(report.spatial_orders.items()):
        lines.append(f"spatial ({name}, err vs h): {slope:.4f}")
    for nx in sorted(report.plateaus):
        lines.append(f"plateau ratio (nx={nx}, two finest tau): {report.plateaus[nx]:.4f}")
    if len(lines) == 1:
        lines.append("(not enough data points for any fit)")
    path.write_text("\n".join(lines) + "\n")
    return path


def render_study_figures(report: ConvergenceReport, outdir) -> list[Path]:
    """Render error-vs-tau and (when available) error-vs-h log-log figures."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    by_nx: dict[int, list] = {}
    for e in report.entries:
        if e.err > 0:
            by_nx.setdefault(e.nx, []).append(e)

    if any(len(g) >= 2 for g in by_nx.values()):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for nx in sorted(by_nx):
            group = sorted(by_nx[nx], key=lambda e: e.tau)
            if len(group) < 2:
                continue
            ax.loglog([e.tau for e in group], [e.err for e in group], "o-",
                      label=f"h = 1/{nx}")
        taus = sorted({e.tau for g in by_nx.values() for e in g})
        emax = max(e.err for g in by_nx.values() for e in g)
        guide = [emax * t / taus[-1] for t in taus]
        ax.loglog(taus, guide, "k--", linewidth=0.8, label="order 1")
        ax.set_xlabel(r"$\tau$")
        ax.set_ylabel("relative error")
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        path = outdir / "error_vs_tau.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    coupled = [e for e in report.entries if e.err > 0]
    hs = sorted({e.h for e in coupled})
    if report.metadata.get("coupling") == "tau-h2" and len(hs) >= 2:
        coupled = sorted(coupled, key=lambda e: e.h)
        fig, ax = plt.subplots(figsize=(6, 4.5))
        ax.loglog([e.h for e in coupled], [e.err for e in coupled], "o-",
                  label=r"$\tau = h^2$")
        emax = max(e.err for e in coupled)
        ax.loglog(hs, [emax * (h / hs[-1]) ** 2 for h in hs], "k--",
                  linewidth=0.8, label="order 2")
        ax.set_xlabel(r"$h$")
        ax.set_ylabel("relative error")
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        path = outdir / "error_vs_h.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def render_norm_history(times, norms, path) -> Path:
    """Operator-norm history of a single solve."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(times, norms, "-")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\|P(t)\|_{L(H)}$")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
