"""Static rendering of transition-probability curves.

One panel per starting state, each destination as a post-step line. Output is
SVG with hashed ids salted and the date stripped, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

from .errors import EmptyCurve


def render_curves(curve_csv, output_path) -> Path:
    """Plot a long-format curve CSV (t, from, to, probability, ...) to SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series: dict[str, dict[str, list[tuple[float, float]]]] = defaultdict(
        lambda: defaultdict(list)
    )
    with open(curve_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            series[row["from"]][row["to"]].append(
                (float(row["t"]), float(row["probability"]))
            )
    # absorbing states have constant identity rows; give panels only to
    # states whose mass actually moves
    panels = [
        frm
        for frm, by_to in series.items()
        if any(
            any(p != 0.0 for _, p in pts)
            for to, pts in by_to.items()
            if to != frm
        )
    ]
    if not series or not panels:
        raise EmptyCurve(f"{curve_csv}: no transition curves to draw")

    with plt.rc_context({"svg.hashsalt": "semimarkov"}):
        fig, axes = plt.subplots(
            1, len(panels), figsize=(4.2 * len(panels), 3.4), squeeze=False,
            sharey=True,
        )
        for ax, frm in zip(axes[0], panels):
            for to in sorted(series[frm]):
                pts = sorted(series[frm][to])
                ax.step([t for t, _ in pts], [p for _, p in pts], where="post",
                        label=to)
            ax.set_title(f"from {frm}")
            ax.set_xlabel("time")
            ax.set_ylim(-0.02, 1.02)
            ax.legend(fontsize=8)
        axes[0][0].set_ylabel("transition probability")
        fig.tight_layout()
        output_path = Path(output_path)
        fig.savefig(output_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return output_path
