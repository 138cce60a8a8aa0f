"""Figure rendering for benchmark runs.

Each figure shows, per labeled series, the median metric as a line and the
interquartile range as a shaded band, plotted against the sweep variable.
Rendering uses the Agg backend so runs work headless; files land next to
the delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def render_quartile_figure(
    series,
    x_label: str,
    y_label: str,
    title: str,
    path,
    logx: bool = False,
    logy: bool = False,
):
    """Render labeled (x, median, q25, q75) series to a PNG.

    series: iterable of (label, aggregates) where aggregates is a list of
    (x, median, q25, q75) tuples sorted by x, as produced by
    bench_io.aggregate_plotdata.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    plotted = False
    for idx, (label, agg) in enumerate(series):
        if not agg:
            continue
        xs = [row[0] for row in agg]
        med = [row[1] for row in agg]
        lo = [row[2] for row in agg]
        hi = [row[3] for row in agg]
        color = _COLORS[idx % len(_COLORS)]
        ax.plot(xs, med, marker="o", color=color, label=label, linewidth=1.6)
        ax.fill_between(xs, lo, hi, color=color, alpha=0.18, linewidth=0)
        plotted = True
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    if plotted:
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return str(path)
