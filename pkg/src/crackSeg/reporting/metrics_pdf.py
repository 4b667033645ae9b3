from typing import List

from reportlab.platypus import Paragraph, Table, TableStyle

from crackSeg.config import config
from crackSeg.models.records import MetricsReport
from crackSeg.reporting import pdf_styles


class MetricsPDFGenerator:
    """Renders a MetricsReport as a one-table PDF: header, dataset means, then one row per image."""

    def _rows(self, report: MetricsReport) -> List[list]:
        label = "Mean" if report.aggregate == "image" else "Pooled"
        rows = [
            pdf_styles.METRIC_COLUMNS,
            [
                label,
                sum(r.tp_pr for r in report.per_image),
                sum(r.fp for r in report.per_image),
                sum(r.tp_re for r in report.per_image),
                sum(r.fn for r in report.per_image),
                f"{report.mean_precision:.4f}",
                f"{report.mean_recall:.4f}",
                f"{report.mean_f1:.4f}",
            ],
        ]
        for row in report.per_image:
            rows.append(
                [
                    row.image,
                    row.tp_pr,
                    row.fp,
                    row.tp_re,
                    row.fn,
                    f"{row.precision:.4f}",
                    f"{row.recall:.4f}",
                    f"{row.f1:.4f}",
                ]
            )
        return rows

    def generate(self, report: MetricsReport, pdf_location: str, title: str = "Crack segmentation evaluation") -> str:
        """
        Build the PDF.

        Args:
            report (MetricsReport): Evaluation result.
            pdf_location (str): Destination path.
            title (str): Heading and document title.

        Returns:
            str: `pdf_location`.
        """
        doc = pdf_styles.generate_doc_template(title, pdf_location)
        table = Table(self._rows(report), colWidths=pdf_styles.COLUMN_WIDTHS, repeatRows=1)
        table.setStyle(TableStyle(pdf_styles.TABLE_STYLE + pdf_styles.MEAN_ROW_STYLE))
        story = [
            Paragraph(title, pdf_styles.PARAGRAPH_STYLES["title"]),
            Paragraph(
                f"{len(report.per_image)} images, tolerance radius {report.tolerance_radius} px, "
                f"{report.aggregate} aggregation. {report.summary_line()}",
                pdf_styles.PARAGRAPH_STYLES["normal"],
            ),
            table,
        ]
        try:
            doc.build(story)
        except Exception as e:
            config.logger.error(f"Failed to generate PDF: {e}")
            raise e
        config.logger.info(f"Wrote evaluation PDF {pdf_location}")
        return pdf_location
