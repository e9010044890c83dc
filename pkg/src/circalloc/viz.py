"""Figure rendering for allocation reports.

Companion plots for the delimited outputs; the CSV/JSON artifacts remain the
canonical results and the figures are excluded from determinism guarantees.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import STRATEGIES, STRATEGY_LABELS, MetricSuite
from .model import Flow

_SAVE_OPTS = {"dpi": 130, "bbox_inches": "tight", "metadata": {"Software": None}}


def _ordered(suites: dict[str, MetricSuite]) -> list[tuple[str, MetricSuite]]:
    names = [n for n in STRATEGIES if n in suites]
    names += [n for n in suites if n not in names]
    return [(STRATEGY_LABELS.get(n, n), suites[n]) for n in names]


def render_comparison_figure(suites: dict[str, MetricSuite], path: Path) -> Path:
    """2x2 panel comparing the headline outcomes across strategies."""
    items = _ordered(suites)
    labels = [label for label, _ in items]
    fig, axes = plt.subplots(2, 2, figsize=(11, 7.5))

    ax = axes[0, 0]
    ax.bar(labels, [s.utilisation_termination_pct for _, s in items], color="#4878a8")
    ax.bar(labels, [s.circulated_pct for _, s in items], color="#f0a04b",
           label="circulated share")
    ax.set_ylabel("% of supply")
    ax.set_title("Supply utilisation at termination")
    ax.set_ylim(0, 100)
    ax.legend(frameon=False, fontsize=8)

    ax = axes[0, 1]
    ax.bar(labels, [s.orders_fully_met for _, s in items], color="#4878a8",
           label="fully met orders")
    ax.bar(labels, [s.offers_unmet for _, s in items], color="#b04a4a",
           alpha=0.7, label="unmet offers")
    ax.set_title("Fulfilment counts")
    ax.legend(frameon=False, fontsize=8)

    ax = axes[1, 0]
    ax.bar(labels, [s.orders_dist.distance_total.mean or 0 for _, s in items],
           color="#5a9e6f")
    ax.set_ylabel("km")
    ax.set_title("Mean order total shipping distance")

    ax = axes[1, 1]
    ax.bar(labels, [s.orders_dist.expiry_gap.mean or 0 for _, s in items],
           color="#8064a2")
    ax.set_ylabel("days")
    ax.set_title("Mean order expiry gap")

    for ax in axes.flat:
        ax.tick_params(axis="x", labelrotation=30, labelsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)
    return path


def render_run_figure(flows: Sequence[Flow], path: Path) -> Path:
    """Distance and transaction-price distributions for a single run's flows."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    if flows:
        axes[0].hist([f.distance_km for f in flows], bins=40, color="#5a9e6f")
        axes[1].hist([f.transaction_price for f in flows], bins=40, color="#4878a8")
    axes[0].set_xlabel("flow distance (km)")
    axes[0].set_ylabel("flows")
    axes[0].set_title("Shipping distances")
    axes[1].set_xlabel("transaction price (GBP/t)")
    axes[1].set_title("Transaction prices")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)
    return path
