# cadsi/ui/__init__.py
from .report_renderer import ReportRenderer

__all__ = ["ReportRenderer"]
