#!/usr/bin/env python3
"""Render the three-panel comparison figure from a metrics.csv file.

Usage:
    python3 scripts/plot_metrics.py results/metrics.csv [out.png]

Requires matplotlib (install the package with the [plot] extra).
"""

import csv
import sys
from collections import defaultdict


def main(argv):
    if len(argv) < 2:
        print(__doc__)
        return 2
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib is required: pip install 'qsdesign[plot]'", file=sys.stderr)
        return 2

    csv_path = argv[1]
    out_path = argv[2] if len(argv) > 2 else "metrics.png"
    series = defaultdict(lambda: defaultdict(list))  # metric -> method -> (budget, value)
    with open(csv_path) as fh:
        for row in csv.DictReader(fh):
            for metric in ("mise", "pfp", "ea"):
                series[metric][row["method"]].append((int(row["budget"]), float(row[metric])))

    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    labels = {"mise": "MISE", "pfp": "peak-count mismatch rate", "ea": "angular error (deg)"}
    for ax, metric in zip(axes, ("mise", "pfp", "ea")):
        for method, pairs in sorted(series[metric].items()):
            pairs.sort()
            ax.plot([b for b, _ in pairs], [v for _, v in pairs], marker="o", label=method)
        ax.set_xlabel("budget")
        ax.set_ylabel(labels[metric])
        if metric == "mise":
            ax.set_yscale("log")
        ax.grid(True, alpha=0.3)
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    print(f"wrote {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
