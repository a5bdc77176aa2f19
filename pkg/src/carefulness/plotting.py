"""Report figures written straight to files (Agg backend, no display)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)


def confusion_figure(report, path, title="Confusion matrix"):
    """Counts with row-normalized shading; bottom-right cell is accuracy."""
    cm = report.confusion()
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.8))
        rows = cm.sum(axis=1, keepdims=True)
        frac = np.divide(cm, rows, out=np.zeros(cm.shape), where=rows > 0)
        grid = np.zeros((3, 3))
        grid[:2, :2] = frac
        ax.imshow(grid, cmap="Blues", vmin=0, vmax=1)
        for i in range(2):
            for j in range(2):
                ax.text(j, i, f"{cm[i, j]}\n{100 * frac[i, j]:.1f}%", ha="center", va="center",
                        color="white" if frac[i, j] > 0.6 else "black")
        ax.text(2, 0, "P\n" + _pct(report.precision), ha="center", va="center")
        ax.text(2, 1, "NPV\n" + _pct(_ratio(report.TN, report.TN + report.FN)), ha="center", va="center")
        ax.text(0, 2, "R\n" + _pct(report.recall), ha="center", va="center")
        ax.text(1, 2, "TNR\n" + _pct(_ratio(report.TN, report.TN + report.FP)), ha="center", va="center")
        ax.add_patch(plt.Rectangle((1.5, 1.5), 1, 1, color="0.6"))
        ax.text(2, 2, "Acc\n" + _pct(report.accuracy), ha="center", va="center")
        ax.set_xticks(range(3), ["C", "NC", ""])
        ax.set_yticks(range(3), ["C", "NC", ""])
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(title)
        _save(fig, path)


def _ratio(a, b):
    return a / b if b else None


def _pct(x):
    return "n/a" if x is None else f"{100 * x:.1f}%"


def box_figure(c_values, nc_values, path, ylabel, p_value=None, title=None):
    """C vs NC box plot; a star marks p < .05."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.2, 3.6))
        ax.boxplot([np.asarray(c_values), np.asarray(nc_values)],
                   medianprops={"color": "red"}, boxprops={"color": "tab:blue"})
        ax.set_xticks([1, 2], ["C", "NC"])
        ax.set_ylabel(ylabel)
        if p_value is not None and p_value < 0.05:
            top = max(np.max(c_values), np.max(nc_values))
            ax.plot([1, 2], [top * 1.05] * 2, color="k", lw=0.8)
            ax.text(1.5, top * 1.06, "*", ha="center", va="bottom", fontsize=14)
            ax.set_ylim(top=top * 1.15)
        if title:
            ax.set_title(title)
        _save(fig, path)


def velocity_figure(series, segments, path, tau=None, events=None):
    """Velocity trace with detected segments shaded by predicted label."""
    t = series.times
    v = series.values
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8, 2.8))
        ax.plot(t, v, lw=0.8, color="k")
        if tau is not None:
            ax.axhline(tau, color="0.5", ls="--", lw=0.8)
        labels = [e.prediction.label for e in events] if events is not None else [None] * len(segments)
        for seg, lab in zip(segments, labels):
            color = {"C": "tab:green", "NC": "tab:orange"}.get(lab, "tab:blue")
            ax.axvspan(seg.t_start, seg.t_end, color=color, alpha=0.25, lw=0)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("V [px/s]")
        _save(fig, path)
