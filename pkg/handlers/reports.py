"""
Report rendering for CLI commands
Aligned text tables printed to stdout
"""

import math
from typing import Iterable, List, Sequence, Tuple

from core.bounds import AssumptionConstants, BoundReport, ErrorRates

Row = Tuple[str, object]


def _format_value(value: object) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "unbounded"
        return f"{value:.6g}"
    if value is None:
        return "-"
    return str(value)


def format_table(title: str, rows: Sequence[Row]) -> str:
    """
    Render (label, value) rows as a two-column table

    Args:
        title: Table heading
        rows: Label and value pairs

    Returns:
        Multi-line string
    """
    cells = [(label, _format_value(value)) for label, value in rows]
    label_width = max((len(label) for label, _ in cells), default=0)
    value_width = max((len(value) for _, value in cells), default=0)
    width = max(len(title), label_width + value_width + 3)

    lines = [title, "-" * width]
    lines += [f"{label:<{label_width}}   {value:>{value_width}}" for label, value in cells]
    return "\n".join(lines)


def format_frame(title: str, header: List[str], records: Iterable[Sequence[object]]) -> str:
    """Render a multi-column table with right-aligned columns"""
    body = [[_format_value(v) for v in record] for record in records]
    widths = [max([len(h)] + [len(row[i]) for row in body]) for i, h in enumerate(header)]
    lines = [title, "  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines.append("-" * len(lines[1]))
    lines += ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in body]
    return "\n".join(lines)


def constants_rows(constants: AssumptionConstants) -> List[Row]:
    return [
        ("kappa1", constants.kappa1),
        ("kappa2", constants.kappa2),
        ("kappa*", constants.kappa_star),
        ("Gamma", constants.gamma),
        ("p*", constants.p_star),
        ("x*", constants.x_star),
        ("y*", constants.y_star),
        ("P*", constants.script_p_star),
        ("r", constants.r),
        ("d", constants.d),
        ("||P||", constants.spectral_norm),
        ("eigengap", constants.eigengap),
    ]


def bound_rows(report: BoundReport) -> List[Row]:
    return [
        ("hoeffding term", report.term_hoeffding),
        ("labeled term", report.term_labeled),
        ("unlabeled term", report.term_unlabeled),
        ("cross term", report.term_cross),
        ("total", report.total),
        ("M threshold", report.m_condition_threshold),
        ("M condition met", report.m_condition_met),
        ("delta", report.delta),
        ("appendix form", report.appendix_form),
    ]


def rates_rows(rates: ErrorRates) -> List[Row]:
    return [("unlabeled rate", rates.unlabeled_rate), ("labeled rate", rates.labeled_rate)]
