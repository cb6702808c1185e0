"""Deterministic log-log convergence plots rendered from a ConvergenceTable.

The CSV table is the single source of truth; the plot adds nothing beyond a
visual encoding of its rows plus two reference triangles with slopes 1 and 2.
Rendering twice from the same table yields byte-identical SVG output.
"""

from __future__ import annotations

import math

from .convergence import ConvergenceTable
from .errors import TooFewLevels

__all__ = ["emit_plot"]

_NORMS = (
    ("err_u_h1", "velocity H1", "o"),
    ("err_u_l2", "velocity L2", "s"),
    ("err_p_l2", "pressure L2", "^"),
)


def _series(table: ConvergenceTable):
    """Rows grouped by (case, space), each as (h values, errors per norm)."""
    groups: dict[tuple[str, str], list] = {}
    for row in table.rows:
        groups.setdefault((row.case, row.space), []).append(row)
    for key in groups:
        groups[key].sort(key=lambda r: r.level)
    return groups


def _slope_triangle(h_anchor: float, err_anchor: float, slope: int, shrink: float = 2.0):
    """Vertices of a right triangle with the given log-log slope.

    The hypotenuse runs from (h, e) down to (h/shrink, e/shrink**slope); the
    legs meet at the right angle underneath the anchor.  Returns the three
    (x, y) vertices plus the label position at the vertical leg's midpoint.
    """
    x1, y1 = h_anchor, err_anchor
    x0 = h_anchor / shrink
    y0 = err_anchor / shrink**slope
    corner = (x1, y0)
    label = (x1 * 1.08, math.sqrt(y0 * y1))
    return [(x0, y0), (x1, y1), corner], label


def emit_plot(table: ConvergenceTable, out_path) -> None:
    """Render the convergence history of ``table`` as a self-contained SVG."""
    groups = _series(table)
    if not groups or any(len(rows) < 2 for rows in groups.values()):
        raise TooFewLevels("plotting needs at least two levels per (case, space) series")

    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    # pin every source of nondeterminism in the SVG backend
    with plt.rc_context({"svg.hashsalt": "ks3d", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        try:
            for (case, space), rows in sorted(groups.items()):
                h = [r.h_max for r in rows]
                for column, label, marker in _NORMS:
                    errs = [getattr(r, column) for r in rows]
                    if min(errs) <= 0.0:
                        continue  # identically-zero exact field; nothing to show
                    ax.loglog(h, errs, marker=marker, label=f"{case} {space} {label}")
            h_ref = min(r.h_max for rows in groups.values() for r in rows)
            e_ref = min(
                getattr(r, c)
                for rows in groups.values()
                for r in rows
                for c, _, _ in _NORMS
                if getattr(r, c) > 0.0
            )
            for slope in (1, 2):
                vertices, label_at = _slope_triangle(2.0 * h_ref, e_ref / 2.0**slope, slope)
                xs = [v[0] for v in vertices] + [vertices[0][0]]
                ys = [v[1] for v in vertices] + [vertices[0][1]]
                ax.loglog(xs, ys, color="0.4", linewidth=0.8)
                ax.annotate(str(slope), label_at, fontsize=8, color="0.4")
            ax.set_xlabel("h_max")
            ax.set_ylabel("error")
            ax.grid(True, which="both", linewidth=0.3, alpha=0.5)
            ax.legend(fontsize=7)
            fig.savefig(out_path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
