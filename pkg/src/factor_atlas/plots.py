"""Matplotlib rendering of the report figures.

Figures are written to files next to the delimited data they visualize;
nothing here opens a window. Graph layout is out of scope: cosine graphs
go to Pajek-compatible viewers, not through matplotlib.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def save_scree_plot(spectrum, path, n=100, dpi=120):
    """Eigenvalues by rank for the leading part of the spectrum."""
    n = min(n, len(spectrum))
    ranks = range(1, n + 1)
    values = spectrum.eigenvalues[:n]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(ranks, values, marker="o", markersize=3, linewidth=1)
    ax.axhline(1.0, color="grey", linewidth=0.8, linestyle="--")
    ax.set_xlabel("component rank")
    ax.set_ylabel("eigenvalue")
    ax.set_title(f"Scree plot (first {n} of {spectrum.n_vars} components)")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


def save_scatter_plot(series, path, dpi=120, annotate=True, max_labels=60):
    """Two-factor score scatter with point labels when the set is small."""
    fig, ax = plt.subplots(figsize=(7, 7))
    ax.scatter(series.x, series.y, s=18, color="tab:blue", zorder=3)
    ax.axhline(0.0, color="grey", linewidth=0.8)
    ax.axvline(0.0, color="grey", linewidth=0.8)
    if annotate and len(series.ids) <= max_labels:
        for i in range(len(series.ids)):
            ax.annotate(
                series.labels[i],
                (series.x[i], series.y[i]),
                textcoords="offset points",
                xytext=(4, 3),
                fontsize=7,
            )
    kind = "rotated" if series.rotated else "unrotated"
    unit = "signed log10 score" if series.scale == "log" else "factor score"
    ax.set_xlabel(f"factor {series.factor_x} ({unit})")
    ax.set_ylabel(f"factor {series.factor_y} ({unit})")
    title = f"{kind} scores, |score| > {series.min_abs:g} ({series.axis_rule} axes)"
    if series.n_log_excluded:
        title += f"\n{series.n_log_excluded} points in (0,1] excluded by log scale"
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
