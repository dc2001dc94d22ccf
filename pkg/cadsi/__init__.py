# cadsi/__init__.py
"""CaDSI: 异构图上的意图解耦推荐流水线。"""
from cadsi.utils.logger import logger

__version__ = "0.1.0"

logger.debug("CaDSI package initialized.")
