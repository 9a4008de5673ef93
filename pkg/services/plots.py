"""Evaluation and training charts"""
from pathlib import Path
from typing import List, Sequence

from models.reports import EvalReport
from models.training import EpochRecord

# Matplotlib imports for charts (optional)
MATPLOTLIB_AVAILABLE = False
try:
    import matplotlib
    matplotlib.use('Agg')
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure
    MATPLOTLIB_AVAILABLE = True
except ImportError:
    pass  # Charts will be disabled

COLORS = ['#1A5276', '#e74c3c', '#27ae60', '#9b59b6', '#f39c12', '#95a5a6']


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(fig)
    fig.tight_layout(pad=0.8)
    fig.savefig(path, metadata={'Software': None})
    return path


def plot_reports(reports: Sequence[EvalReport], path) -> Path:
    """Visibility precision-recall (left) and PCK curve (right), one line per k"""
    if not MATPLOTLIB_AVAILABLE:
        raise RuntimeError("matplotlib is not installed")
    fig = Figure(figsize=(9, 4), dpi=100)
    fig.patch.set_facecolor('white')
    ax_pr, ax_pck = fig.add_subplot(121), fig.add_subplot(122)

    for i, report in enumerate(reports):
        color = COLORS[i % len(COLORS)]
        label = f"QP{report.k}"
        if report.pr_curve:
            ax_pr.plot([p.recall for p in report.pr_curve], [p.precision for p in report.pr_curve],
                       color=color, label=f"{label} (R@P80 {report.recall_at_p80:.2f})")
        if report.pck_curve:
            alphas, values = zip(*report.pck_curve)
            ax_pck.plot(alphas, values, color=color, label=label)

    ax_pr.axhline(0.8, color='gray', linestyle=':', linewidth=1)
    ax_pr.set(xlabel="recall", ylabel="precision", title="Keypoint visibility", xlim=(0, 1), ylim=(0, 1.02))
    ax_pck.set(xlabel="alpha (fraction of image size)", ylabel="PCK", title="Localization", ylim=(0, 1.02))
    for ax in (ax_pr, ax_pck):
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8, loc='lower right')
    return _save(fig, path)


def plot_loss(history: List[EpochRecord], path) -> Path:
    if not MATPLOTLIB_AVAILABLE:
        raise RuntimeError("matplotlib is not installed")
    fig = Figure(figsize=(5, 3.5), dpi=100)
    ax = fig.add_subplot(111)
    for stage in sorted({r.stage for r in history}):
        xs = [i + 1 for i, r in enumerate(history) if r.stage == stage]
        ys = [r.loss for r in history if r.stage == stage]
        ax.plot(xs, ys, marker='o', markersize=3, color=COLORS[stage % len(COLORS)], label=f"stage {stage}")
    ax.set(xlabel="epoch", ylabel="loss", title="Training loss")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)
