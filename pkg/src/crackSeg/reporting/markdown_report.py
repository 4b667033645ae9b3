import os
from typing import Optional

from jinja2 import Environment, FileSystemLoader

from crackSeg.config import config
from crackSeg.models.records import AblationReport

ABLATION_TEMPLATE = "ablation_report.md.j2"


def _environment() -> Environment:
    return Environment(
        trim_blocks=True,
        lstrip_blocks=True,
        autoescape=False,
        loader=FileSystemLoader(str(config.TEMPLATES_PATH)),
        keep_trailing_newline=True,
    )


def render_ablation_report(report: AblationReport) -> str:
    """
    Side-by-side Pr / Re / F1 table of the arms of an ablation, 4 decimals per cell.

    Args:
        report (AblationReport): Trained-and-evaluated arms.

    Returns:
        str: Markdown document.
    """
    rows = [
        {
            "label": arm.label,
            "precision": arm.report.mean_precision,
            "recall": arm.report.mean_recall,
            "f1": arm.report.mean_f1,
        }
        for arm in report.arms
    ]
    best = max(rows, key=lambda row: row["f1"])["label"] if rows else None
    first = report.arms[0].report if report.arms else None
    template = _environment().get_template(ABLATION_TEMPLATE)
    return template.render(
        name=report.name,
        columns=report.columns,
        rows=rows,
        best=best,
        radius=first.tolerance_radius if first else config.DEFAULT_TOLERANCE_RADIUS,
        aggregate=first.aggregate if first else "image",
    )


def write_ablation_report(report: AblationReport, filename: str) -> Optional[str]:
    try:
        os.makedirs(os.path.dirname(os.path.abspath(filename)), exist_ok=True)
        with open(filename, "w") as stream:
            stream.write(render_ablation_report(report))
    except OSError as e:
        config.logger.error(f"The {filename} could not be written.")
        raise e
    return filename
