"""Figure rendering for benchmark reports.

Takes rows in the bench CSV schema and draws the two standard series:
throughput and energy efficiency against problem size, one line per
variant.  Files are written next to the delimited report output.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_MARKERS = ("o", "s", "^", "v", "D", "x", "*", "+")


def _series(rows, value_key):
    by_variant = {}
    for row in rows:
        label = row["variant"]
        if row.get("threads_fast") or row.get("threads_slow"):
            label = f"{row['variant']} ({row['threads_fast']}+{row['threads_slow']})"
        by_variant.setdefault(label, []).append((int(row["m"]), float(row[value_key])))
    for points in by_variant.values():
        points.sort()
    return by_variant


def _draw(rows, value_key, ylabel, title, path):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for idx, (label, points) in enumerate(sorted(_series(rows, value_key).items())):
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        ax.plot(xs, ys, marker=_MARKERS[idx % len(_MARKERS)], markersize=4,
                linewidth=1.2, label=label)
    ax.set_xlabel("problem size (m = n = k)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, linewidth=0.3, alpha=0.6)
    ax.legend(fontsize=8)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def performance_figure(rows, path):
    """GFLOPS against size, one series per benchmark variant."""
    return _draw(rows, "gflops", "GFLOPS", "Throughput", path)


def efficiency_figure(rows, path):
    """GFLOPS per watt against size, one series per benchmark variant."""
    return _draw(rows, "gflops_per_watt", "GFLOPS/W", "Energy efficiency", path)
