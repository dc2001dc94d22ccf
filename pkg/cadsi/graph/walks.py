# cadsi/graph/walks.py
"""
元路径约束的随机游走
每一步在当前节点的、类型符合元路径要求的邻居中均匀采样；无合格邻居时游走截断。
生成的语料按起点类型分成 n(U)、n(I)、n(A) 三组。
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from cadsi.graph.hin import Hin, MetaPath, TypeLike, validate_metapaths
from cadsi.utils import constants as C
from cadsi.utils.errors import WalkError
from cadsi.utils.helpers import stream_rng
from cadsi.utils.logger import logger


@dataclass(frozen=True)
class WalkConfig:
    walks_per_node: int = C.DEFAULT_WALKS_PER_NODE
    walk_length: int = C.DEFAULT_WALK_LENGTH  # 节点数，含起点
    seed: int = C.DEFAULT_SEED
    threads: int = C.DEFAULT_THREADS

    def __post_init__(self):
        if self.walks_per_node < 1:
            raise WalkError(f"walks_per_node must be >= 1, got {self.walks_per_node}.")
        if self.walk_length < 2:
            raise WalkError(f"walk_length must be >= 2, got {self.walk_length}.")
        if self.threads < 1:
            raise WalkError(f"threads must be >= 1, got {self.threads}.")


@dataclass(frozen=True)
class Walk:
    meta_path: MetaPath
    nodes: Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.nodes)

    def type_at(self, position: int) -> str:
        return self.meta_path.type_at(position)


@dataclass
class WalkCorpus:
    """按起点类型归档的游走集合。字典顺序即元路径的给定顺序。"""
    by_start_type: Dict[str, List[Walk]] = field(default_factory=dict)

    @property
    def n_walks(self) -> int:
        return sum(len(walks) for walks in self.by_start_type.values())

    def is_empty(self) -> bool:
        return self.n_walks == 0

    def walks(self) -> Iterator[Walk]:
        for walks in self.by_start_type.values():
            yield from walks

    def by_path(self) -> Dict[MetaPath, List[Walk]]:
        grouped: Dict[MetaPath, List[Walk]] = {}
        for walk in self.walks():
            grouped.setdefault(walk.meta_path, []).append(walk)
        return grouped

    def add(self, walk: Walk) -> None:
        self.by_start_type.setdefault(walk.meta_path.start_type, []).append(walk)

    def dump(self, path: str) -> None:
        """每行一条游走: <元路径名> id id ..."""
        with open(path, "w", encoding="utf-8") as handle:
            for walk in self.walks():
                handle.write(walk.meta_path.name + " " + " ".join(walk.nodes) + "\n")

    def dumps(self) -> str:
        return "".join(walk.meta_path.name + " " + " ".join(walk.nodes) + "\n" for walk in self.walks())

    @classmethod
    def load(cls, path: str, meta_paths: Sequence[MetaPath]) -> "WalkCorpus":
        lookup = {meta_path.name: meta_path for meta_path in meta_paths}
        corpus = cls()
        with open(path, encoding="utf-8") as handle:
            for line_no, raw in enumerate(handle, start=1):
                tokens = raw.split()
                if not tokens:
                    continue
                if tokens[0] not in lookup:
                    raise WalkError(f"{path}:{line_no}: unknown meta path '{tokens[0]}'.")
                corpus.add(Walk(lookup[tokens[0]], tuple(tokens[1:])))
        return corpus


def next_step_distribution(hin: Hin, current: str, required_type: TypeLike) -> Dict[str, float]:
    """当前节点在 required_type 类型邻居上的均匀分布；死路返回空字典。"""
    neighbors = hin.neighbor_indices(hin.index(current), required_type)
    if neighbors.size == 0:
        return {}
    probability = 1.0 / neighbors.size
    return {hin.node_ids[n]: probability for n in sorted(neighbors, key=lambda n: hin.node_ids[n])}


def _walk_indices(hin: Hin, start: int, path: MetaPath, walk_length: int, rng: np.random.Generator) -> List[int]:
    nodes = [int(start)]
    for position in range(1, walk_length):
        required = path.type_at(position)
        if required is None:
            break
        neighbors = hin.neighbor_indices(nodes[-1], required)
        if neighbors.size == 0:
            break
        nodes.append(int(neighbors[rng.integers(neighbors.size)]))
    return nodes


def generate_walk(hin: Hin, start: str, path: MetaPath, cfg: WalkConfig, rng: np.random.Generator) -> Walk:
    """
    从 start 出发沿元路径游走，最多 cfg.walk_length 个节点。

    Raises:
        WalkError: start 的类型与元路径首类型不一致。
    """
    start_idx = hin.index(start)
    if hin.type_of(start_idx) != path.start_type:
        raise WalkError(f"Start node '{start}' has type {hin.type_of(start_idx)}, meta path {path.name} starts with {path.start_type}.")
    nodes = _walk_indices(hin, start_idx, path, cfg.walk_length, rng)
    return Walk(path, tuple(hin.node_ids[n] for n in nodes))


def generate_corpus(hin: Hin, paths: Sequence[MetaPath], cfg: WalkConfig) -> WalkCorpus:
    """
    为每条元路径、每个起点类型合格的节点生成 walks_per_node 条游走。

    第 w 条游走使用 (seed, 路径序号, 节点下标, w) 派生的随机数流，
    因而结果与线程数和调度顺序无关；合并时按 (路径, 节点) 顺序拼接。
    """
    for check in validate_metapaths(hin.schema, paths):
        if not check.valid:
            raise WalkError(f"Meta path '{check.path.name}' is invalid at step {check.step}.", code="metapath_invalid")
    for path in paths:
        if len(path.node_types) > cfg.walk_length:
            raise WalkError(f"walk_length {cfg.walk_length} is shorter than meta path {path.name}.")

    tasks = [(path_idx, int(node)) for path_idx, path in enumerate(paths) for node in hin.nodes_of_type(path.start_type)]

    def run(task: Tuple[int, int]) -> List[Walk]:
        path_idx, node = task
        path = paths[path_idx]
        walks = []
        for walk_idx in range(cfg.walks_per_node):
            rng = stream_rng(cfg.seed, path_idx, node, walk_idx)
            nodes = _walk_indices(hin, node, path, cfg.walk_length, rng)
            walks.append(Walk(path, tuple(hin.node_ids[n] for n in nodes)))
        return walks

    corpus = WalkCorpus({path.start_type: [] for path in paths})
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(task) for task in tasks]
    for walks in results:
        for walk in walks:
            corpus.add(walk)

    truncated = sum(1 for walk in corpus.walks() if len(walk) == 1)
    if truncated:
        logger.warning(f"{truncated} walk(s) stopped at their start node (no eligible neighbor).")
    sizes = {t: len(w) for t, w in corpus.by_start_type.items()}
    logger.info(f"Generated {corpus.n_walks} walks over {len(paths)} meta path(s): {sizes}")
    return corpus
