"""Report files: FROC points, CPM tables, sweep tables, FROC plots."""

from __future__ import annotations

import csv
import os

from .combine import CombinationReport
from .ensemble import EnsembleReport
from .froc import CpmReport, FrocCurve


def write_froc_csv(curve: FrocCurve, path) -> None:
    with open(os.fspath(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("threshold", "fps_per_scan", "sensitivity"))
        for t, f, s in zip(curve.thresholds, curve.fps_per_scan, curve.sensitivity):
            writer.writerow((f"{t:.6f}", f"{f:.6f}", f"{s:.6f}"))


def write_cpm_csv(report: CpmReport, path) -> None:
    with open(os.fspath(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("fps_per_scan", "sensitivity", "ci_low", "ci_high"))
        for i, rate in enumerate(report.rates):
            low = high = ""
            if report.rate_bands is not None:
                low = f"{report.rate_bands[i][0]:.6f}"
                high = f"{report.rate_bands[i][1]:.6f}"
            writer.writerow((f"{rate:g}", f"{report.sensitivities[i]:.6f}", low, high))
        low = high = ""
        if report.cpm_band is not None:
            low, high = (f"{v:.6f}" for v in report.cpm_band)
        writer.writerow(("cpm", f"{report.cpm:.6f}", low, high))


def format_cpm_text(report: CpmReport, title: str = "evaluation") -> str:
    lines = [
        f"CPM report: {title}",
        f"  scans: {report.n_scans}   nodules: {report.n_nodules}",
        "  FPs/scan   sensitivity" + ("   95% CI" if report.rate_bands is not None else ""),
    ]
    for i, rate in enumerate(report.rates):
        row = f"  {rate:>8g}   {report.sensitivities[i]:11.3f}"
        if report.rate_bands is not None:
            row += f"   [{report.rate_bands[i][0]:.3f}, {report.rate_bands[i][1]:.3f}]"
        lines.append(row)
    row = f"  CPM        {report.cpm:11.3f}"
    if report.cpm_band is not None:
        row += f"   [{report.cpm_band[0]:.3f}, {report.cpm_band[1]:.3f}]"
    lines.append(row)
    if report.p_value is not None:
        lines.append(f"  p-value vs reference: {report.p_value:.4f}")
    return "\n".join(lines) + "\n"


def write_combination_csv(reports: list[CombinationReport], path) -> None:
    with open(os.fspath(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            (
                "combination", "sources", "sensitivity", "best_single_sensitivity",
                "sensitivity_difference", "detected", "n_nodules",
                "total_candidates", "average_per_scan",
            )
        )
        for r in reports:
            writer.writerow(
                (
                    r.bitmask,
                    "+".join(r.sources),
                    f"{r.sensitivity:.6f}",
                    "" if r.best_single_sensitivity is None else f"{r.best_single_sensitivity:.6f}",
                    "" if r.sensitivity_difference is None else f"{r.sensitivity_difference:.6f}",
                    r.detected,
                    r.n_nodules,
                    r.total_candidates,
                    f"{r.average_per_scan:.1f}",
                )
            )


def write_ensemble_csv(reports: list[EnsembleReport], rates, path) -> None:
    with open(os.fspath(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ("combination", "systems")
            + tuple(f"sens_at_{r:g}" for r in rates)
            + ("cpm", "p_value", "cpm_difference", "best_single_cpm")
        )
        for r in reports:
            writer.writerow(
                (r.bitmask, "+".join(r.systems))
                + tuple(f"{s:.6f}" for s in r.sensitivities)
                + (
                    f"{r.cpm:.6f}",
                    "" if r.p_value is None else f"{r.p_value:.4f}",
                    "" if r.cpm_difference is None else f"{r.cpm_difference:.6f}",
                    "" if r.best_single_cpm is None else f"{r.best_single_cpm:.6f}",
                )
            )


def plot_froc(
    curves: dict[str, tuple[FrocCurve, CpmReport | None]],
    path,
    fp_range: tuple[float, float] = (0.125, 8.0),
) -> None:
    """Self-contained vector-graphics FROC plot with a log-scale FP axis.

    Bootstrap bands, when present on a report, are drawn as dashed envelopes.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.5, 5))
    for name, (curve, report) in curves.items():
        line, = ax.plot(curve.fps_per_scan, curve.sensitivity, drawstyle="default", label=name)
        if report is not None and report.rate_bands is not None:
            ax.plot(report.rates, report.rate_bands[:, 0], "--", lw=0.8, color=line.get_color())
            ax.plot(report.rates, report.rate_bands[:, 1], "--", lw=0.8, color=line.get_color())
    ax.set_xscale("log", base=2)
    ax.set_xlim(*fp_range)
    ax.set_ylim(0.0, 1.0)
    ax.set_xticks([0.125, 0.25, 0.5, 1, 2, 4, 8])
    ax.set_xticklabels(["1/8", "1/4", "1/2", "1", "2", "4", "8"])
    ax.set_xlabel("Average number of false positives per scan")
    ax.set_ylabel("Sensitivity")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(os.fspath(path), format="svg")
    plt.close(fig)
