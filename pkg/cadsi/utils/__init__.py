# cadsi/utils/__init__.py
from .logger import logger

__all__ = ["logger"]
