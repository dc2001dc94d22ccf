# cadsi/ui/report_renderer.py
"""
报告渲染器
把各阶段的结果渲染成控制台表格。只负责展示，数据文件由各阶段自己写出。
"""
import sys
from typing import Optional, TextIO

import pandas as pd

from cadsi.data.synth import SkewReport
from cadsi.evaluation.ablation import AblationTable
from cadsi.evaluation.metrics import MetricReport

FLOAT_DIGITS = 4  # 控制台显示精度；文件里保持完整精度


class ReportRenderer:
    """
    控制台表格渲染器。
    """

    def __init__(self, stream: Optional[TextIO] = None):
        self.stream = stream if stream is not None else sys.stdout

    def _write(self, text: str) -> None:
        self.stream.write(text + "\n")

    def draw_title(self, title: str) -> None:
        self._write(title)
        self._write("-" * len(title))

    def draw_table(self, frame: pd.DataFrame, title: Optional[str] = None) -> None:
        """
        Args:
            frame (pd.DataFrame): 要显示的表格。
            title (str, optional): 表头上方的标题。
        """
        if title:
            self.draw_title(title)
        if frame.empty:
            self._write("(empty)")
            return
        self._write(frame.to_string(index=False, float_format=lambda v: f"{v:.{FLOAT_DIGITS}f}"))

    def draw_metrics(self, report: MetricReport, title: str = "Metrics") -> None:
        self.draw_table(report.to_frame(), title)

    def draw_skew(self, report: SkewReport) -> None:
        self.draw_table(report.to_frame(), "Attribute skew")
        if report.most_missing:
            self._write(f"most-missing aspect: {report.most_missing}")

    def draw_ablation(self, table: AblationTable) -> None:
        self.draw_table(table.frame, f"Ablation over {table.axis}")

    def draw_message(self, message: str) -> None:
        self._write(message)
