from crackSeg.reporting.markdown_report import *
from crackSeg.reporting.metrics_pdf import *
