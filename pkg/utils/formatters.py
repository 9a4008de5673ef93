"""Formatting utilities for command output"""
import math
from typing import List


def format_fraction(value: float, digits: int = 4) -> str:
    """
    Fixed-point fraction, 'n/a' for nan

    Example: 0.12345 -> 0.1235
    """
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    return f"{value:.{digits}f}"


def format_percent(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    return f"{100 * value:.1f}%"


def format_table(headers: List[str], rows: List[List[str]]) -> str:
    """Left-aligned plain-text table"""
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(str(c))) for w, c in zip(widths, row)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(headers, widths)),
             "  ".join("-" * w for w in widths)]
    for row in rows:
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)


def format_eval_report(report) -> str:
    """Summary of an EvalReport: PCK per alpha and keypoint, errors, recall at 80% precision"""
    alphas = sorted(report.pck)
    ids = sorted((key for key in report.pck[alphas[0]] if key != 'all'), key=int) if alphas else []
    rows = [[f"{a:g}", format_fraction(report.pck[a]['all'])] + [format_fraction(report.pck[a][m]) for m in ids]
            for a in alphas]
    lines = [
        f"k={report.k}  samples={report.n_samples}",
        format_table(["alpha", "PCK"] + [f"kp{m}" for m in ids], rows),
        f"mean normalized error: visible {format_fraction(report.mean_error_visible)}, "
        f"all {format_fraction(report.mean_error_all)}",
        f"visibility recall at 80% precision: {format_percent(report.recall_at_p80)}",
    ]
    point = report.operating_point
    if point is not None:
        lines.append(f"visibility at threshold {point.threshold:g}: precision {format_percent(point.precision)}, "
                     f"recall {format_percent(point.recall)}")
    return "\n".join(lines)
