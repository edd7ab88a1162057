"""Figures for evaluation reports: per-feature F1 bars and precision/recall shifts."""

from __future__ import annotations

from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .featuremap import DIM_GROUP, DIM_NAMES, NONSILENCE_DIMS  # noqa: E402

_SAVE_KW = {"dpi": 150, "metadata": {"Software": None}}


def dim_rates(rep) -> dict[str, tuple]:
    """name -> (precision, recall, f1) from an EvalReport or a parsed report dict."""
    if isinstance(rep, dict):
        return {name: (d["precision"], d["recall"], d["f1"]) for name, d in rep["dims"].items()}
    if rep.rates is None:
        return {DIM_NAMES[i]: (None, None, None) for i in NONSILENCE_DIMS}
    return {DIM_NAMES[i]: (float(rep.rates.precision[i]), float(rep.rates.recall[i]),
                           float(rep.rates.f1[i])) for i in NONSILENCE_DIMS}


def plot_per_feature_f1(reports: Mapping[str, object], path, title: str = "Per-feature F1") -> None:
    names = [DIM_NAMES[i] for i in NONSILENCE_DIMS]
    n_sys = max(1, len(reports))
    width = 0.8 / n_sys
    fig, ax = plt.subplots(figsize=(12, 4))
    for k, (label, rep) in enumerate(reports.items()):
        rates = dim_rates(rep)
        ys = [100 * (rates[n][2] or 0.0) for n in names]
        xs = [i + (k - (n_sys - 1) / 2) * width for i in range(len(names))]
        ax.bar(xs, ys, width=width, label=label)
    # thin separators between feature groups
    groups = [DIM_GROUP[i] for i in NONSILENCE_DIMS]
    for i in range(1, len(groups)):
        if groups[i] != groups[i - 1]:
            ax.axvline(i - 0.5, color="0.6", lw=0.8)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=60, ha="right")
    ax.set_ylabel("F1 (%)")
    ax.set_ylim(0, 100)
    ax.set_title(title)
    if len(reports) > 1:
        ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_precision_recall(baseline, model, path, labels=("baseline", "model")) -> None:
    """One arrow per feature from the baseline's (recall, precision) to the model's."""
    base, new = dim_rates(baseline), dim_rates(model)
    fig, ax = plt.subplots(figsize=(6, 6))
    for name in (DIM_NAMES[i] for i in NONSILENCE_DIMS):
        p0, r0, _ = base[name]
        p1, r1, _ = new[name]
        if None in (p0, r0, p1, r1):
            continue
        ax.annotate("", xy=(100 * r1, 100 * p1), xytext=(100 * r0, 100 * p0),
                    arrowprops={"arrowstyle": "->", "color": "0.4", "lw": 0.8})
        ax.plot(100 * r0, 100 * p0, "o", color="tab:gray", ms=4)
        ax.plot(100 * r1, 100 * p1, "o", color="tab:blue", ms=4)
        ax.annotate(name, (100 * r1, 100 * p1), fontsize=7, xytext=(3, 3),
                    textcoords="offset points")
    ax.plot([], [], "o", color="tab:gray", label=labels[0])
    ax.plot([], [], "o", color="tab:blue", label=labels[1])
    ax.set_xlabel("Recall (%)")
    ax.set_ylabel("Precision (%)")
    ax.set_xlim(0, 102)
    ax.set_ylim(0, 102)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
