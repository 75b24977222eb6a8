"""Static SVG figures.  Output bytes depend only on the plotted data."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .leaf import LeafCurve  # noqa: E402

_RC = {
    "svg.hashsalt": "stableleaf",
    "svg.fonttype": "none",
    "path.simplify": False,
    "figure.figsize": (6.0, 4.5),
    "font.size": 9,
}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def phase_portrait(path, leaves: list[LeafCurve], limit: LeafCurve | None, p,
                   cloud: np.ndarray | None = None, title: str = "") -> None:
    """Leaves in graded colour, the limit leaf on top, ``p`` marked."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        if cloud is not None and len(cloud):
            ax.plot(cloud[:, 0], cloud[:, 1], ",", color="0.55", label="global preimages")
        finite = sorted((lf for lf in leaves if not math.isinf(lf.k)), key=lambda lf: lf.k)
        cmap = plt.get_cmap("viridis")
        for i, lf in enumerate(finite):
            pts = lf.points()
            ax.plot(pts[:, 0], pts[:, 1], lw=0.8, color=cmap(i / max(1, len(finite) - 1)),
                    label=f"k={lf.label}" if i in (0, len(finite) - 1) else None)
        if limit is not None:
            pts = limit.points()
            ax.plot(pts[:, 0], pts[:, 1], lw=1.8, color="crimson", label="limit leaf")
        ax.plot([p[0]], [p[1]], "k+", ms=9, label="fixed point")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_title(title)
        ax.legend(loc="best", fontsize=7)
        _save(fig, path)


def semilog_series(path, ks, series: dict[str, list[float]], title: str = "", ylabel: str = "") -> None:
    """One log-scale line per series; nonpositive values are skipped."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for name, vals in series.items():
            k = np.asarray(ks, dtype=float)
            v = np.asarray(vals, dtype=float)
            ok = v > 0
            if ok.any():
                ax.semilogy(k[ok], v[ok], "o-", ms=3, lw=1, label=name)
        ax.set_xlabel("k")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend(loc="best", fontsize=7)
        _save(fig, path)


def escape_plot(path, offsets, times, expected_slope: float, title: str = "") -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        x = np.log(1.0 / np.asarray(offsets, dtype=float))
        t = np.asarray(times, dtype=float)
        ok = t >= 0
        ax.plot(x[ok], t[ok], "o", ms=3, label="exit time")
        if ok.any() and math.isfinite(expected_slope):
            xs = np.linspace(x[ok].min(), x[ok].max(), 2)
            c = float(np.mean(t[ok] - expected_slope * x[ok]))
            ax.plot(xs, c + expected_slope * xs, "--", lw=1, label="slope 1/log|lambda_u|")
        ax.set_xlabel("log(1/d)")
        ax.set_ylabel("first exit step")
        ax.set_title(title)
        ax.legend(loc="best", fontsize=7)
        _save(fig, path)
