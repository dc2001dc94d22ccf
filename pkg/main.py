# /main.py
"""
命令行主入口点。
"""
import sys
from typing import Optional, Sequence

from cadsi.utils.logger import logger  # 确保日志在最早被初始化和使用
from cadsi.ui import cli


def main(argv: Optional[Sequence[str]] = None) -> int:
    """主函数，解析命令并运行对应的流水线阶段，返回退出码。"""
    logger.info("Application starting...")
    try:
        return cli.main(argv)
    finally:
        logger.info("Application shutting down.")


if __name__ == "__main__":
    sys.exit(main())
