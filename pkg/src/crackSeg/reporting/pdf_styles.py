import os

from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle
from reportlab.lib.units import inch
from reportlab.platypus import SimpleDocTemplate


def generate_doc_template(title: str, pdf_location: str) -> SimpleDocTemplate:
    """
    SimpleDocTemplate for an evaluation report.

    Args:
        title (str): Document title, also used as PDF metadata.
        pdf_location (str): Destination path.

    Returns:
        SimpleDocTemplate: The document template.
    """
    os.makedirs(os.path.dirname(os.path.abspath(pdf_location)), exist_ok=True)
    return SimpleDocTemplate(
        pdf_location,
        pagesize=A4,
        showBoundary=0,
        leftMargin=0.5 * inch,
        rightMargin=0.5 * inch,
        topMargin=0.5 * inch,
        bottomMargin=0.5 * inch,
        title=title,
        author="crackseg",
    )


PAGE_WIDTH, PAGE_HEIGHT = A4
FULL_COLUMN_WIDTH = PAGE_WIDTH - 1 * inch
METRIC_COLUMNS = ["Image", "TP(Pr)", "FP", "TP(Re)", "FN", "Pr", "Re", "F1"]
COLUMN_WIDTHS = [FULL_COLUMN_WIDTH * 0.30] + [FULL_COLUMN_WIDTH * 0.10] * 7

PARAGRAPH_STYLES = {
    "title": ParagraphStyle(
        name="title_paragraph",
        fontName="Helvetica-Bold",
        fontSize=14,
        alignment=TA_CENTER,
        leading=18,
        spaceAfter=8,
    ),
    "normal": ParagraphStyle(
        name="normal_paragraph",
        fontName="Helvetica",
        fontSize=10,
        leading=12,
        spaceAfter=6,
    ),
}

TABLE_STYLE = [
    ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
    ("FONTNAME", (0, 1), (-1, -1), "Helvetica"),
    ("FONTSIZE", (0, 0), (-1, -1), 8),
    ("ALIGN", (1, 0), (-1, -1), "RIGHT"),
    ("LINEBELOW", (0, 0), (-1, 0), 0.5, colors.black),
    ("TOPPADDING", (0, 0), (-1, -1), 1),
    ("BOTTOMPADDING", (0, 0), (-1, -1), 1),
]
MEAN_ROW_STYLE = [
    ("FONTNAME", (0, 1), (-1, 1), "Helvetica-Bold"),
    ("LINEBELOW", (0, 1), (-1, 1), 0.1, colors.black),
    ("BACKGROUND", (0, 1), (-1, 1), colors.whitesmoke),
]
