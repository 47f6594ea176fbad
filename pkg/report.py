"""
Word (.docx) run reports for reconstructions
"""

import io
import logging
from pathlib import Path
from typing import Dict, Optional, Union

from docx import Document
from docx.enum.table import WD_TABLE_ALIGNMENT
from docx.enum.text import WD_ALIGN_PARAGRAPH
from docx.shared import Inches, Pt
from PIL import Image

from config import APP_NAME, APP_VERSION, REPORT_SETTINGS
from data_term import EnergyReport
from solver_engine import ReconstructionResult
from utils import angle_to_gray8, angle_to_hue_rgb, preview_plane

logger = logging.getLogger(__name__)


class RunReportGenerator:
    """Generate a Word report describing one reconstruction run"""

    def __init__(self):
        self.doc = Document()
        self._setup_styles()

    def _setup_styles(self):
        normal = self.doc.styles['Normal']
        normal.font.name = REPORT_SETTINGS['default_font']
        normal.font.size = Pt(REPORT_SETTINGS['default_font_size'])

    def add_header(self, title: str = "Cyclic Reconstruction Report"):
        title_para = self.doc.add_heading(title, 0)
        title_para.alignment = WD_ALIGN_PARAGRAPH.CENTER
        subtitle = self.doc.add_paragraph(f"{APP_NAME} v{APP_VERSION}")
        subtitle.alignment = WD_ALIGN_PARAGRAPH.CENTER

    def _add_table(self, rows, bold_header: bool = True):
        if not rows:
            return
        n_cols = max(len(row) for row in rows)
        table = self.doc.add_table(rows=len(rows), cols=n_cols)
        table.style = 'Table Grid'
        table.alignment = WD_TABLE_ALIGNMENT.CENTER
        for row_idx, row_data in enumerate(rows):
            cells = table.rows[row_idx].cells
            for col_idx, value in enumerate(row_data):
                cells[col_idx].text = str(value)
                if bold_header and row_idx == 0:
                    for paragraph in cells[col_idx].paragraphs:
                        for run in paragraph.runs:
                            run.font.bold = True
        self.doc.add_paragraph()

    def add_parameters(self, parameters: Dict):
        """Two-column table of run parameters"""
        self.doc.add_heading('Run Parameters', level=1)
        self._add_table([('Parameter', 'Value')] + [(key, value) for key, value in parameters.items()])

    def add_convergence(self, result: ReconstructionResult):
        """Last rows of the convergence trace"""
        self.doc.add_heading('Convergence', level=1)
        status = "converged" if result.converged else "stopped at the iteration limit"
        self.doc.add_paragraph(f"Solver '{result.config_echo.solver}' {status} after {result.iterations} iterations.")
        frame = result.trace.to_frame().tail(REPORT_SETTINGS['trace_rows'])
        rows = [tuple(frame.columns)]
        for record in frame.itertuples(index=False):
            rows.append((int(record[0]),) + tuple(f"{value:.6g}" for value in record[1:]))
        self._add_table(rows)

    def add_energy(self, report: EnergyReport):
        self.doc.add_heading('Energy of the Hard Labeling', level=1)
        self._add_table([
            ('Term', 'Value'),
            ('Data', f"{report.data_energy:.6g}"),
            ('Smoothness', f"{report.smoothness_energy:.6g}"),
            ('Total', f"{report.total:.6g}"),
        ])

    def add_label_preview(self, result: ReconstructionResult, hue_wheel: bool = False):
        """Embed the label map as an 8-bit image"""
        plane = preview_plane(result.labels.values)
        pixels = angle_to_hue_rgb(plane) if hue_wheel else angle_to_gray8(plane)
        buffer = io.BytesIO()
        Image.fromarray(pixels).save(buffer, 'PNG')
        buffer.seek(0)

        self.doc.add_heading('Label Map', level=1)
        paragraph = self.doc.add_paragraph()
        paragraph.alignment = WD_ALIGN_PARAGRAPH.CENTER
        paragraph.add_run().add_picture(buffer, width=Inches(REPORT_SETTINGS['image_width_inches']))
        caption = "Hue wheel, red = 0 rad" if hue_wheel else "Gray levels 0..255 span [-pi, pi); the seam wraps"
        self.doc.add_paragraph(caption).alignment = WD_ALIGN_PARAGRAPH.CENTER

    def save_document(self) -> bytes:
        buffer = io.BytesIO()
        self.doc.save(buffer)
        return buffer.getvalue()

    def create_complete_report(self,
                               result: ReconstructionResult,
                               parameters: Dict,
                               energy_report: Optional[EnergyReport] = None,
                               hue_wheel: bool = False) -> bytes:
        self.add_header()
        self.add_parameters(parameters)
        self.add_convergence(result)
        if energy_report is not None:
            self.add_energy(energy_report)
        self.add_label_preview(result, hue_wheel=hue_wheel)
        return self.save_document()


def write_run_report(path: Union[str, Path], result: ReconstructionResult, parameters: Dict,
                     energy_report: Optional[EnergyReport] = None, hue_wheel: bool = False) -> Path:
    path = Path(path)
    path.write_bytes(RunReportGenerator().create_complete_report(result, parameters, energy_report, hue_wheel))
    logger.debug("Wrote report %s", path)
    return path
