"""Static SVG figures: scenario tree, service band and cost bars."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bernstein import basis_matrix  # noqa: E402
from .scenario import ScenarioTree  # noqa: E402

# fixed salt and no date keep the SVG output byte-stable
matplotlib.rcParams["svg.hashsalt"] = "ctmsruc"


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_tree(tree: ScenarioTree, path, title: str = "", samples: int = 25) -> None:
    """Edge centroids with a shaded one-epsilon band; line width follows probability."""
    fig, ax = plt.subplots(figsize=(8, 4))
    u = np.linspace(0, 1, samples)
    B = basis_matrix(tree.degree, u)
    for v in tree.edges():
        node = tree.nodes[v]
        t = node.stage - 1 + u
        mid = B @ node.xi.coeffs
        eps = B @ node.eps
        ax.fill_between(t, mid - eps, mid + eps, color="tab:blue", alpha=0.15, linewidth=0)
        ax.plot(t, mid, color="tab:blue", linewidth=0.5 + 2.5 * node.prob)
    ax.set_xlabel("hour")
    ax.set_ylabel("MW")
    ax.set_xlim(0, tree.H)
    ax.set_title(title or f"scenario tree, {len(tree.leaves())} leaves")
    _save(fig, path)


def plot_band(band, samples, path, title: str = "") -> None:
    """Serviceable band against one load trajectory, out-of-band samples marked."""
    band = np.asarray(band)
    samples = np.asarray(samples)
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.fill_between(band[:, 0], band[:, 1], band[:, 2], color="tab:green", alpha=0.3, label="service band")
    ax.plot(samples[:, 0], samples[:, 1], color="black", linewidth=1, label="load")
    out = (samples[:, 1] > band[:, 2] + 1e-6) | (samples[:, 1] < band[:, 1] - 1e-6)
    if out.any():
        ax.plot(samples[out, 0], samples[out, 1], "rx", markersize=4, label="outside band")
    ax.set_xlabel("hour")
    ax.set_ylabel("MW")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(title)
    _save(fig, path)


COST_KEYS = ("expected_day_ahead", "reserve_cost", "mean_testing", "total_testing")


def plot_costs(reports: dict, path, title: str = "cost decomposition") -> None:
    """Grouped bars of the report cost components, one group per label."""
    labels = list(reports)
    x = np.arange(len(COST_KEYS))
    width = 0.8 / max(len(labels), 1)
    fig, ax = plt.subplots(figsize=(8, 4))
    for k, label in enumerate(labels):
        vals = [getattr(reports[label], key) for key in COST_KEYS]
        ax.bar(x + k * width, vals, width, label=label)
    ax.set_xticks(x + width * (len(labels) - 1) / 2)
    ax.set_xticklabels([k.replace("_", " ") for k in COST_KEYS])
    ax.set_ylabel("$")
    ax.legend()
    ax.set_title(title)
    _save(fig, path)
