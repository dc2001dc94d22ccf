# cadsi/utils/helpers.py
"""
辅助函数：随机数流、稀疏分段求和、内容哈希等。
"""
import hashlib
import os
from typing import Iterable

import numpy as np
import scipy.sparse as sp


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """
    按 (seed, *key) 派生一个独立的随机数流。

    同一个 key 在任何线程、任何调度顺序下都得到同一条流，
    游走生成和数据划分靠它保证可复现。
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


def incidence_matrix(index: np.ndarray, n_rows: int) -> sp.csr_matrix:
    """返回 (n_rows, len(index)) 的 0/1 关联矩阵，第 j 列在 index[j] 行为 1。"""
    index = np.asarray(index, dtype=np.int64)
    n_cols = index.shape[0]
    return sp.csr_matrix(
        (np.ones(n_cols, dtype=np.float64), (index, np.arange(n_cols))),
        shape=(n_rows, n_cols),
    )


def scatter_rows(index: np.ndarray, values: np.ndarray, n_rows: int) -> np.ndarray:
    """
    按行下标累加: out[index[j]] += values[j]。

    与 np.add.at 等价，但走稀疏矩阵乘法，累加顺序固定。
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] == 0:
        return np.zeros((n_rows,) + values.shape[1:], dtype=np.float64)
    flat = values.reshape(values.shape[0], -1)
    out = incidence_matrix(index, n_rows) @ flat
    return np.asarray(out).reshape((n_rows,) + values.shape[1:])


def content_hash(paths: Iterable[str]) -> str:
    """对一组文件 (或目录下的所有文件) 计算 sha256，用于运行清单。"""
    digest = hashlib.sha256()
    files = []
    for path in paths:
        if os.path.isdir(path):
            for root, _, names in os.walk(path):
                files.extend(os.path.join(root, name) for name in names)
        elif os.path.exists(path):
            files.append(path)
    for file_path in sorted(files):
        digest.update(os.path.basename(file_path).encode("utf-8"))
        with open(file_path, "rb") as handle:
            for block in iter(lambda: handle.read(1 << 16), b""):
                digest.update(block)
    return digest.hexdigest()


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """‖a − n‖ / max(‖a‖, ‖n‖, 1e-12)。"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denom)
