"""
项目安装脚本
"""
from setuptools import setup, find_packages

setup(
    name="cadsi",
    version="0.1.0",
    description="基于异构信息网络的因果解耦意图推荐流水线",
    author="开发者",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    py_modules=["main"],
    install_requires=[
        "numpy>=1.26",
        "scipy>=1.11",
        "pandas>=2.1",
    ],
    extras_require={
        "test": ["pytest>=7.4"],
    },
    python_requires=">=3.10",
    entry_points={
        "console_scripts": [
            "cadsi=main:main",
        ],
    },
)
