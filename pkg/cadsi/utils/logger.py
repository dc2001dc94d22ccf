# cadsi/utils/logger.py
"""
基础日志模块
提供一个配置好的logger实例，方便在流水线各处使用。

环境变量:
    CADSI_LOG_LEVEL  日志级别 (DEBUG, INFO, WARNING, ERROR, CRITICAL)，默认 INFO
    CADSI_LOG_FILE   日志文件路径，默认 cadsi.log；设为空字符串则关闭文件日志
"""
import logging
import os
import sys
from logging.handlers import RotatingFileHandler  # 用于日志文件轮转

# --- 配置常量 ---
LOG_LEVEL = getattr(logging, os.environ.get("CADSI_LOG_LEVEL", "INFO").upper(), logging.INFO)
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - [%(filename)s:%(lineno)d] - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
LOG_FILE_PATH = os.environ.get("CADSI_LOG_FILE", "cadsi.log")
ENABLE_FILE_LOGGING = bool(LOG_FILE_PATH)
ENABLE_CONSOLE_LOGGING = True

# 整个包共享一个logger，子模块不再单独配置handler
logger = logging.getLogger("CaDSI")
logger.setLevel(LOG_LEVEL)

# --- 防止重复添加handler ---
if not logger.handlers:
    # 日志走 stdout，CLI 的机器可读错误行单独写 stderr
    if ENABLE_CONSOLE_LOGGING:
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(LOG_LEVEL)
        console_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(console_handler)

    if ENABLE_FILE_LOGGING:
        file_handler = RotatingFileHandler(
            LOG_FILE_PATH,
            maxBytes=5 * 1024 * 1024,  # 5 MB
            backupCount=3,
            encoding="utf-8",
            delay=True,  # 第一次写日志时才创建文件
        )
        file_handler.setLevel(LOG_LEVEL)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(file_handler)


def set_level(level: str) -> None:
    """运行时调整日志级别 (CLI 的 --log-level 使用)。"""
    numeric = getattr(logging, level.upper(), None)
    if not isinstance(numeric, int):
        logger.warning(f"Unknown log level '{level}', keeping {logging.getLevelName(logger.level)}.")
        return
    logger.setLevel(numeric)
    for handler in logger.handlers:
        handler.setLevel(numeric)
