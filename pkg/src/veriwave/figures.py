"""Report figures: matplotlib renderings next to their delimited data."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .calibrate import CoverageRiskCurve


def save_coverage_risk(curve: CoverageRiskCurve, out_dir: str, tau_reg: float,
                       stem: str = "coverage_risk") -> tuple[str, str]:
    """Render the coverage/risk/F1 curve and write the same rows as CSV.

    Returns (png_path, csv_path).
    """
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    with open(csv_path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["tau", "coverage", "risk", "macro_f1"])
        for tau, cov, risk, f1 in curve.rows():
            wr.writerow([f"{tau:.6f}", f"{cov:.6f}", f"{risk:.6f}", f"{f1:.6f}"])

    fig, ax1 = plt.subplots(figsize=(7, 4.5))
    ax1.plot(curve.taus, curve.coverage, color="tab:blue", label="coverage")
    ax1.plot(curve.taus, curve.risk, color="tab:red", label="risk")
    ax1.set_xlabel("confidence threshold")
    ax1.set_ylabel("coverage / risk")
    ax1.set_ylim(-0.02, 1.02)
    ax2 = ax1.twinx()
    ax2.plot(curve.taus, curve.f1, color="tab:green", linestyle="--", label="macro F1")
    ax2.set_ylabel("macro F1")
    ax2.set_ylim(-0.02, 1.02)
    ax1.axvline(tau_reg, color="gray", linestyle=":", label="registered floor")
    lines, labels = ax1.get_legend_handles_labels()
    l2, lab2 = ax2.get_legend_handles_labels()
    ax1.legend(lines + l2, labels + lab2, loc="center left", fontsize=8)
    ax1.set_title("Selective operation: coverage and risk vs threshold")
    fig.tight_layout()
    png_path = os.path.join(out_dir, f"{stem}.png")
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path, csv_path


def save_amortization(batch_sizes, per_instance_bytes, out_dir: str,
                      stem: str = "proof_amortization") -> tuple[str, str]:
    """Per-instance proof size versus batch size, as plot plus CSV."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    with open(csv_path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["batch_size", "bytes_per_instance"])
        for b, s in zip(batch_sizes, per_instance_bytes):
            wr.writerow([b, f"{s:.1f}"])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(batch_sizes, per_instance_bytes, marker="o")
    ax.set_xlabel("batch size")
    ax.set_ylabel("proof bytes per window")
    ax.set_title("Proof size amortization")
    fig.tight_layout()
    png_path = os.path.join(out_dir, f"{stem}.png")
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path, csv_path
