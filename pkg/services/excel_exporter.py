"""Excel export of evaluation reports using openpyxl"""
import math
from datetime import date
from pathlib import Path
from typing import Dict, List

from models.reports import EvalReport

# Optional openpyxl import
OPENPYXL_AVAILABLE = False
try:
    from openpyxl import Workbook
    from openpyxl.styles import Font, Alignment, Border, Side, PatternFill
    from openpyxl.utils import get_column_letter
    OPENPYXL_AVAILABLE = True
except ImportError:
    Workbook = None
    Font = Alignment = Border = Side = PatternFill = None
    get_column_letter = None


class ExcelExporter:
    """Writes one or more EvalReports (one per k) to a workbook"""

    @staticmethod
    def is_available() -> bool:
        return OPENPYXL_AVAILABLE

    def __init__(self):
        self.fraction_format = '0.0000'
        if not OPENPYXL_AVAILABLE:
            self.header_font = self.header_fill = self.header_alignment = None
            self.title_font = self.thin_border = None
            return

        edge = Side(style="thin", color="7F8C8D")
        self.thin_border = Border(left=edge, right=edge, top=edge, bottom=edge)
        self.header_font = Font(bold=True, color="FFFFFF")
        self.header_fill = PatternFill("solid", fgColor="2E4053")
        self.header_alignment = Alignment(horizontal="center")
        self.title_font = Font(bold=True, size=13)

    def _style_header(self, ws, row: int, n_cols: int):
        for cell in ws[row][:n_cols]:
            cell.font = self.header_font
            cell.fill = self.header_fill
            cell.alignment = self.header_alignment
            cell.border = self.thin_border

    def _fit_columns(self, ws):
        for index, column in enumerate(ws.iter_cols(values_only=True), start=1):
            width = max((len(str(v)) for v in column if v is not None), default=0)
            ws.column_dimensions[get_column_letter(index)].width = min(width + 2, 40)

    def _write_table(self, ws, start_row: int, headers: List[str], rows: List[list]) -> int:
        for col, title in enumerate(headers, start=1):
            ws.cell(row=start_row, column=col, value=title)
        self._style_header(ws, start_row, len(headers))
        row = start_row + 1
        for values in rows:
            for col, value in enumerate(values, start=1):
                if isinstance(value, float) and math.isnan(value):
                    value = None
                cell = ws.cell(row=row, column=col, value=value)
                cell.border = self.thin_border
                if isinstance(value, float):
                    cell.number_format = self.fraction_format
            row += 1
        return row

    def export_reports(self, reports: List[EvalReport], output_path: str, title: str = "Keypoint evaluation") -> Dict:
        """
        Summary, per-keypoint PCK, PR curve and PCK curve sheets

        Returns:
            Dict with success status and the output path or error
        """
        if not OPENPYXL_AVAILABLE:
            return {'success': False, 'error': 'openpyxl is not installed'}
        if not reports:
            return {'success': False, 'error': 'no reports to export'}
        try:
            wb = Workbook()

            ws = wb.active
            ws.title = "Summary"
            ws['A1'] = title
            ws['A1'].font = self.title_font
            ws['A2'] = f"Date: {date.today()}"
            alphas = sorted(reports[0].pck)
            headers = ["k", "samples"] + [f"PCK@{a:g}" for a in alphas] + [
                "recall@P80", "mean err (visible)", "mean err (all)"]
            rows = [[r.k, r.n_samples] + [r.pck[a]['all'] for a in alphas]
                    + [r.recall_at_p80, r.mean_error_visible, r.mean_error_all] for r in reports]
            self._write_table(ws, 4, headers, rows)
            self._fit_columns(ws)

            ws = wb.create_sheet("PCK per keypoint")
            ids = sorted((key for key in reports[0].pck[alphas[0]] if key != 'all'), key=int) if alphas else []
            rows = [[r.k, a] + [r.pck[a][m] for m in ids] for r in reports for a in alphas]
            self._write_table(ws, 1, ["k", "alpha"] + [f"kp {m}" for m in ids], rows)
            self._fit_columns(ws)

            ws = wb.create_sheet("Visibility PR")
            rows = [[r.k, p.threshold, p.precision, p.recall, p.tp, p.fp, p.fn]
                    for r in reports for p in r.pr_curve]
            self._write_table(ws, 1, ["k", "threshold", "precision", "recall", "TP", "FP", "FN"], rows)
            self._fit_columns(ws)

            ws = wb.create_sheet("PCK curve")
            rows = [[r.k, a, v] for r in reports for a, v in r.pck_curve]
            self._write_table(ws, 1, ["k", "alpha", "PCK"], rows)
            self._fit_columns(ws)

            path = Path(output_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            wb.save(path)
            return {'success': True, 'path': str(path)}
        except Exception as e:
            return {'success': False, 'error': str(e)}
