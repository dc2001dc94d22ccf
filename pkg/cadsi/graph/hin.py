# cadsi/graph/hin.py
"""
异构信息网络 (HIN) 数据模型
负责 schema 定义、TSV 文件读写、5-core 过滤、元路径校验以及交互矩阵的导出。

文件格式:
    节点文件   <type>\t<id>
    边文件     <src_id>\t<dst_id>\t<edge_kind>
    schema     nodetype <name> / edgekind <name> <src_type> <dst_type> / role user|item <type>
    元路径     每行一条，类型名以空格分隔
"""
import csv
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from cadsi.utils import constants as C
from cadsi.utils.errors import HinError
from cadsi.utils.logger import logger


@dataclass(frozen=True)
class NodeType:
    """节点类型，例如 "U"、"M"、"A"。"""
    name: str

    def __str__(self) -> str:
        return self.name


TypeLike = Union[str, NodeType]


def _type_name(node_type: TypeLike) -> str:
    return node_type.name if isinstance(node_type, NodeType) else str(node_type)


@dataclass(frozen=True)
class TypedEdgeKind:
    """一种无向关系，只连接声明的两种节点类型。"""
    name: str
    source_type: str
    target_type: str

    def connects(self, type_a: str, type_b: str) -> bool:
        return (type_a, type_b) in ((self.source_type, self.target_type), (self.target_type, self.source_type))


@dataclass(frozen=True)
class MetaPath:
    """
    元路径：节点类型的有序序列 (长度 o+1 ≥ 2)。

    对称 (回文) 元路径在游走时循环展开，UMU → UMUMU…；
    非对称元路径走到最后一个类型就结束。
    """
    node_types: Tuple[str, ...]

    def __post_init__(self):
        if len(self.node_types) < 2:
            raise HinError(f"Meta path needs at least two node types, got {self.node_types}.", code="metapath_invalid")

    @classmethod
    def parse(cls, text: str) -> "MetaPath":
        return cls(tuple(token for token in text.split() if token))

    @property
    def name(self) -> str:
        return "".join(self.node_types)

    @property
    def start_type(self) -> str:
        return self.node_types[0]

    @property
    def is_symmetric(self) -> bool:
        return self.node_types == tuple(reversed(self.node_types))

    def type_at(self, position: int) -> Optional[str]:
        """游走第 position 个节点应有的类型；非对称路径越界时返回 None。"""
        order = len(self.node_types) - 1
        if position <= order:
            return self.node_types[position]
        if not self.is_symmetric:
            return None
        return self.node_types[1 + (position - 1) % order]

    def rotated_to(self, index: int) -> "MetaPath":
        """把对称路径的循环体旋转到第 index 个类型开头，例如 MAM → AMA。"""
        cycle = list(self.node_types[:-1])
        rotated = cycle[index:] + cycle[:index]
        return MetaPath(tuple(rotated + [rotated[0]]))

    def __str__(self) -> str:
        return " ".join(self.node_types)


@dataclass(frozen=True)
class Schema:
    """网络 schema：节点类型集合 𝒜、关系集合 ℛ 以及用户/物品类型的角色。"""
    node_types: Tuple[NodeType, ...]
    edge_kinds: Tuple[TypedEdgeKind, ...]
    user_type: str = C.DEFAULT_USER_TYPE
    item_type: str = ""

    def __post_init__(self):
        names = [t.name for t in self.node_types]
        if len(set(names)) != len(names):
            raise HinError(f"Duplicate node types in schema: {names}", code="schema_invalid")
        if len(names) < 2 or len(names) + len(self.edge_kinds) <= 2:
            raise HinError("A HIN schema needs at least two node types and |A|+|R| > 2.", code="schema_invalid")
        kind_names = [k.name for k in self.edge_kinds]
        if len(set(kind_names)) != len(kind_names):
            raise HinError(f"Duplicate edge kinds in schema: {kind_names}", code="schema_invalid")
        for kind in self.edge_kinds:
            if kind.source_type not in names or kind.target_type not in names:
                raise HinError(f"Edge kind '{kind.name}' references an undeclared node type.", code="schema_invalid")
        item_type = self.item_type or next((n for n in names if n != self.user_type), "")
        object.__setattr__(self, "item_type", item_type)
        if self.user_type not in names or item_type not in names:
            raise HinError(f"User type '{self.user_type}' / item type '{item_type}' not declared.", code="schema_invalid")
        if self.kind_between(self.user_type, item_type) is None:
            raise HinError(f"Schema has no {self.user_type}-{item_type} interaction kind.", code="schema_invalid")

    @property
    def type_names(self) -> Tuple[str, ...]:
        return tuple(t.name for t in self.node_types)

    def has_type(self, node_type: TypeLike) -> bool:
        return _type_name(node_type) in self.type_names

    def kind(self, name: str) -> Optional[TypedEdgeKind]:
        return next((k for k in self.edge_kinds if k.name == name), None)

    def kind_between(self, type_a: TypeLike, type_b: TypeLike) -> Optional[TypedEdgeKind]:
        a, b = _type_name(type_a), _type_name(type_b)
        return next((k for k in self.edge_kinds if k.connects(a, b)), None)

    @property
    def interaction_kind(self) -> TypedEdgeKind:
        return self.kind_between(self.user_type, self.item_type)

    @property
    def friend_kind(self) -> Optional[TypedEdgeKind]:
        return self.kind_between(self.user_type, self.user_type)

    @property
    def aspect_types(self) -> Tuple[str, ...]:
        """与物品类型相连的其他类型，即作为上下文 (混杂因子) 的方面。"""
        return tuple(
            name for name in self.type_names
            if name not in (self.user_type, self.item_type) and self.kind_between(self.item_type, name) is not None
        )

    @classmethod
    def load(cls, path: str) -> "Schema":
        node_types: List[NodeType] = []
        kinds: List[TypedEdgeKind] = []
        roles: Dict[str, str] = {}
        with open(path, encoding="utf-8") as handle:
            for line_no, raw in enumerate(handle, start=1):
                tokens = raw.split("#", 1)[0].split()
                if not tokens:
                    continue
                if tokens[0] == "nodetype" and len(tokens) == 2:
                    node_types.append(NodeType(tokens[1]))
                elif tokens[0] == "edgekind" and len(tokens) == 4:
                    kinds.append(TypedEdgeKind(tokens[1], tokens[2], tokens[3]))
                elif tokens[0] == "role" and len(tokens) == 3 and tokens[1] in ("user", "item"):
                    roles[tokens[1]] = tokens[2]
                else:
                    raise HinError(f"{path}:{line_no}: cannot parse schema line '{raw.strip()}'", code="schema_invalid")
        return cls(tuple(node_types), tuple(kinds), roles.get("user", C.DEFAULT_USER_TYPE), roles.get("item", ""))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for node_type in self.node_types:
                handle.write(f"nodetype {node_type.name}\n")
            for kind in self.edge_kinds:
                handle.write(f"edgekind {kind.name} {kind.source_type} {kind.target_type}\n")
            handle.write(f"role user {self.user_type}\n")
            handle.write(f"role item {self.item_type}\n")


@dataclass(frozen=True)
class InteractionMatrix:
    """
    二值交互矩阵 y ∈ {0,1}^{m×n}，以稀疏 (u, i) 对保存。

    users/items 是节点 id；pairs 是按 (u, i) 字典序排好的本地下标。
    划分后的训练/验证/测试集共享同一组 users/items。
    """
    users: Tuple[str, ...]
    items: Tuple[str, ...]
    pairs: np.ndarray = field(repr=False)

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs[:, 0].max() >= len(self.users) or pairs[:, 1].max() >= len(self.items)):
            raise HinError("Interaction pairs reference users/items outside the matrix.", code="interaction_invalid")
        pairs = np.unique(pairs, axis=0) if pairs.size else pairs
        pairs.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_interactions(self) -> int:
        return int(self.pairs.shape[0])

    @cached_property
    def user_index(self) -> Dict[str, int]:
        return {node_id: idx for idx, node_id in enumerate(self.users)}

    @cached_property
    def item_index(self) -> Dict[str, int]:
        return {node_id: idx for idx, node_id in enumerate(self.items)}

    @cached_property
    def item_lists(self) -> Tuple[np.ndarray, ...]:
        """每个用户的物品下标 (升序)。"""
        bounds = np.searchsorted(self.pairs[:, 0], np.arange(self.n_users + 1))
        return tuple(self.pairs[bounds[u]:bounds[u + 1], 1] for u in range(self.n_users))

    def items_of(self, user: int) -> np.ndarray:
        return self.item_lists[user]

    def user_degrees(self) -> np.ndarray:
        return np.bincount(self.pairs[:, 0], minlength=self.n_users)

    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.pairs[:, 1], minlength=self.n_items)

    def to_csr(self) -> sp.csr_matrix:
        data = np.ones(self.n_interactions, dtype=np.float64)
        return sp.csr_matrix((data, (self.pairs[:, 0], self.pairs[:, 1])), shape=(self.n_users, self.n_items))

    def with_pairs(self, pairs: np.ndarray) -> "InteractionMatrix":
        """同一用户/物品全集上的另一组交互。"""
        return InteractionMatrix(self.users, self.items, pairs)

    def save(self, path: str) -> None:
        frame = pd.DataFrame({
            "user": [self.users[u] for u in self.pairs[:, 0]],
            "item": [self.items[i] for i in self.pairs[:, 1]],
        })
        frame.to_csv(path, sep="\t", header=False, index=False)

    def load_pairs(self, path: str) -> "InteractionMatrix":
        """读取 <user>\t<item> 文件，映射到本矩阵的用户/物品全集。"""
        frame = _read_tsv(path, 2)
        try:
            pairs = np.array(
                [(self.user_index[u], self.item_index[i]) for u, i in zip(frame[0], frame[1])],
                dtype=np.int64,
            )
        except KeyError as exc:
            raise HinError(f"{path}: unknown user/item {exc}", code="missing_node") from exc
        return self.with_pairs(pairs)


class Hin:
    """
    异构信息网络 𝒢 = (𝒱, ℰ, 𝒜, ℛ, φ, ψ)。

    节点 id 为字符串，内部映射为稠密下标；边无向存储，邻接表按
    (节点, 邻居类型) 索引并去重。构造完成后只读，可被多个线程并发读取。
    """

    def __init__(self, schema: Schema, node_ids: Sequence[str], node_types: Sequence[str],
                 edges: Iterable[Tuple[int, int, str]]):
        self.schema = schema
        self._node_ids: Tuple[str, ...] = tuple(node_ids)
        type_names = schema.type_names
        self._type_to_code = {name: code for code, name in enumerate(type_names)}
        try:
            codes = np.array([self._type_to_code[t] for t in node_types], dtype=np.int64)
        except KeyError as exc:
            raise HinError(f"Unknown node type {exc} (schema declares {list(type_names)}).", code="unknown_node_type") from exc
        codes.setflags(write=False)
        self._type_codes = codes
        self._index = {node_id: idx for idx, node_id in enumerate(self._node_ids)}
        if len(self._index) != len(self._node_ids):
            raise HinError("Duplicate node ids in node list.", code="duplicate_node")

        canonical = set()
        for src, dst, kind_name in edges:
            kind = schema.kind(kind_name)
            if kind is None:
                raise HinError(f"Edge kind '{kind_name}' not declared in schema.", code="schema_violation")
            src_type, dst_type = type_names[codes[src]], type_names[codes[dst]]
            if not kind.connects(src_type, dst_type):
                raise HinError(
                    f"Edge {self._node_ids[src]}-{self._node_ids[dst]} ({src_type}-{dst_type}) violates kind "
                    f"'{kind.name}' ({kind.source_type}-{kind.target_type}).",
                    code="schema_violation",
                )
            if src == dst:
                raise HinError(f"Self loop on node {self._node_ids[src]}.", code="schema_violation")
            if src_type != kind.source_type or (src_type == dst_type and src > dst):
                src, dst = dst, src
            canonical.add((src, dst, kind.name))
        self._edges: Tuple[Tuple[int, int, str], ...] = tuple(sorted(canonical))

        buckets: Dict[Tuple[int, int], set] = {}
        for src, dst, _ in self._edges:
            buckets.setdefault((src, int(codes[dst])), set()).add(dst)
            buckets.setdefault((dst, int(codes[src])), set()).add(src)
        self._adjacency: Dict[Tuple[int, int], np.ndarray] = {}
        for key, neighbors in buckets.items():
            array = np.array(sorted(neighbors), dtype=np.int64)
            array.setflags(write=False)
            self._adjacency[key] = array
        self._empty = np.zeros(0, dtype=np.int64)
        self._empty.setflags(write=False)
        logger.debug(f"Hin built: {self.n_nodes} nodes, {self.n_edges} edges, types {list(type_names)}.")

    # --- 基本查询 ---
    @property
    def n_nodes(self) -> int:
        return len(self._node_ids)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    @property
    def node_ids(self) -> Tuple[str, ...]:
        return self._node_ids

    @property
    def edges(self) -> Tuple[Tuple[int, int, str], ...]:
        return self._edges

    @property
    def type_codes(self) -> np.ndarray:
        return self._type_codes

    def has_node(self, node_id: str) -> bool:
        return node_id in self._index

    def index(self, node_id: str) -> int:
        try:
            return self._index[node_id]
        except KeyError as exc:
            raise HinError(f"Unknown node '{node_id}'.", code="unknown_node") from exc

    def type_of(self, idx: int) -> str:
        return self.schema.type_names[self._type_codes[idx]]

    def type_code(self, node_type: TypeLike) -> int:
        name = _type_name(node_type)
        if name not in self._type_to_code:
            raise HinError(f"Unknown node type '{name}'.", code="unknown_node_type")
        return self._type_to_code[name]

    def nodes_of_type(self, node_type: TypeLike) -> np.ndarray:
        return np.flatnonzero(self._type_codes == self.type_code(node_type))

    def neighbor_indices(self, idx: int, node_type: TypeLike) -> np.ndarray:
        """𝒩_v^(t)，按内部下标升序。"""
        return self._adjacency.get((int(idx), self.type_code(node_type)), self._empty)

    def edge_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {kind.name: 0 for kind in self.schema.edge_kinds}
        for _, _, kind_name in self._edges:
            counts[kind_name] += 1
        return counts

    def interaction_matrix(self) -> InteractionMatrix:
        """由 user–item 关系的边精确导出交互矩阵。"""
        users = self.nodes_of_type(self.schema.user_type)
        items = self.nodes_of_type(self.schema.item_type)
        user_pos = {int(node): pos for pos, node in enumerate(users)}
        item_pos = {int(node): pos for pos, node in enumerate(items)}
        kind = self.schema.interaction_kind.name
        pairs = [(user_pos[s], item_pos[d]) for s, d, k in self._edges if k == kind]
        return InteractionMatrix(
            tuple(self._node_ids[u] for u in users),
            tuple(self._node_ids[i] for i in items),
            np.array(pairs, dtype=np.int64).reshape(-1, 2),
        )

    def save(self, out_dir: str) -> None:
        """写出 nodes.tsv / edges.tsv / schema.txt，load_hin_dir 可原样读回。"""
        os.makedirs(out_dir, exist_ok=True)
        self.schema.save(os.path.join(out_dir, C.SCHEMA_FILE))
        pd.DataFrame({
            "type": [self.type_of(i) for i in range(self.n_nodes)],
            "id": list(self._node_ids),
        }).to_csv(os.path.join(out_dir, C.NODE_FILE), sep="\t", header=False, index=False)
        pd.DataFrame({
            "src": [self._node_ids[s] for s, _, _ in self._edges],
            "dst": [self._node_ids[d] for _, d, _ in self._edges],
            "kind": [k for _, _, k in self._edges],
        }).to_csv(os.path.join(out_dir, C.EDGE_FILE), sep="\t", header=False, index=False)

    def __repr__(self) -> str:
        return f"Hin(nodes={self.n_nodes}, edges={self.n_edges}, types={list(self.schema.type_names)})"


@dataclass(frozen=True)
class MetaPathCheck:
    """单条元路径的校验结果；step 为第一对不合法类型的位置 (从 1 开始)。"""
    path: MetaPath
    valid: bool
    step: Optional[int] = None
    pair: Optional[Tuple[str, str]] = None


def _read_tsv(path: str, n_columns: int) -> pd.DataFrame:
    if not os.path.exists(path):
        raise HinError(f"File not found: {path}", code="file_missing")
    try:
        frame = pd.read_csv(path, sep="\t", header=None, dtype=str, keep_default_na=False,
                            quoting=csv.QUOTE_NONE, comment=None)
    except pd.errors.EmptyDataError:
        return pd.DataFrame({col: pd.Series(dtype=str) for col in range(n_columns)})
    if frame.shape[1] != n_columns:
        raise HinError(f"{path}: expected {n_columns} tab-separated columns, found {frame.shape[1]}.", code="format_invalid")
    return frame


def _core_filter(schema: Schema, node_types: List[str], edges: List[Tuple[int, int, str]],
                 min_interactions: int, min_friends: int) -> np.ndarray:
    """迭代删除交互数 (以及好友数，若存在 U–U 关系) 不足的用户/物品，直到不动点。返回保留掩码。"""
    n_nodes = len(node_types)
    keep = np.ones(n_nodes, dtype=bool)
    is_user = np.array([t == schema.user_type for t in node_types])
    is_item = np.array([t == schema.item_type for t in node_types])
    interaction_kind = schema.interaction_kind.name
    friend_kind = schema.friend_kind.name if schema.friend_kind is not None else None
    inter = np.array([(s, d) for s, d, k in edges if k == interaction_kind], dtype=np.int64).reshape(-1, 2)
    friends = np.array([(s, d) for s, d, k in edges if k == friend_kind], dtype=np.int64).reshape(-1, 2)

    rounds = 0
    while True:
        rounds += 1
        live = inter[keep[inter[:, 0]] & keep[inter[:, 1]]]
        degree = np.bincount(live.ravel(), minlength=n_nodes)
        drop = (is_user | is_item) & keep & (degree < min_interactions)
        if friend_kind is not None:
            live_friends = friends[keep[friends[:, 0]] & keep[friends[:, 1]]]
            friend_degree = np.bincount(live_friends.ravel(), minlength=n_nodes)
            drop |= is_user & keep & (friend_degree < min_friends)
        if not drop.any():
            break
        keep &= ~drop
    logger.info(f"Core filtering reached fixpoint after {rounds} round(s); kept {int(keep.sum())}/{n_nodes} nodes.")
    return keep


def load_hin(node_file: str, edge_files: Sequence[str], schema: Schema, core_filter: bool = False,
             min_interactions: int = C.DEFAULT_MIN_INTERACTIONS,
             min_friends: int = C.DEFAULT_MIN_FRIENDS) -> Hin:
    """
    从 TSV 文件读入并校验 HIN。

    Args:
        node_file: <type>\t<id> 节点文件。
        edge_files: 一个或多个 <src>\t<dst>\t<kind> 边文件。
        schema: 网络 schema。
        core_filter: 是否执行 5-core 过滤 (用户/物品交互数 ≥ min_interactions，
            存在 U–U 关系时用户好友数 ≥ min_friends)。

    Raises:
        HinError: 未知节点类型、边引用缺失节点、边违反 schema、过滤后为空。
    """
    nodes = _read_tsv(node_file, 2)
    node_types = list(nodes[0])
    node_ids = list(nodes[1])
    for node_type in set(node_types):
        if not schema.has_type(node_type):
            raise HinError(f"{node_file}: unknown node type '{node_type}'.", code="unknown_node_type")
    index = {node_id: idx for idx, node_id in enumerate(node_ids)}
    if len(index) != len(node_ids):
        raise HinError(f"{node_file}: duplicate node ids.", code="duplicate_node")

    edges: List[Tuple[int, int, str]] = []
    for edge_file in edge_files:
        frame = _read_tsv(edge_file, 3)
        for src, dst, kind in zip(frame[0], frame[1], frame[2]):
            if src not in index or dst not in index:
                missing = src if src not in index else dst
                raise HinError(f"{edge_file}: edge references missing node '{missing}'.", code="missing_node")
            edges.append((index[src], index[dst], kind))

    if core_filter:
        # 先做一次 schema 校验，再过滤
        Hin(schema, node_ids, node_types, edges)
        keep = _core_filter(schema, node_types, edges, min_interactions, min_friends)
        remap = -np.ones(len(node_ids), dtype=np.int64)
        remap[keep] = np.arange(int(keep.sum()))
        node_ids = [n for n, k in zip(node_ids, keep) if k]
        node_types = [t for t, k in zip(node_types, keep) if k]
        edges = [(int(remap[s]), int(remap[d]), kind) for s, d, kind in edges if keep[s] and keep[d]]

    hin = Hin(schema, node_ids, node_types, edges)
    if hin.interaction_matrix().n_interactions == 0:
        raise HinError("Graph has no user-item interactions after loading/filtering.", code="empty_graph")
    logger.info(f"Loaded {hin!r} from {node_file} ({len(edge_files)} edge file(s)).")
    return hin


def load_hin_dir(data_dir: str, core_filter: bool = False,
                 min_interactions: int = C.DEFAULT_MIN_INTERACTIONS,
                 min_friends: int = C.DEFAULT_MIN_FRIENDS) -> Hin:
    """读取 save() 或 synth 写出的数据目录。"""
    schema = Schema.load(os.path.join(data_dir, C.SCHEMA_FILE))
    return load_hin(os.path.join(data_dir, C.NODE_FILE), [os.path.join(data_dir, C.EDGE_FILE)], schema,
                    core_filter=core_filter, min_interactions=min_interactions, min_friends=min_friends)


def neighbors_of_type(hin: Hin, v: str, node_type: TypeLike) -> List[str]:
    """返回节点 v 的类型为 node_type 的一阶邻居 id，按 id 排序；可能为空。"""
    idx = hin.index(v)
    return sorted(hin.node_ids[n] for n in hin.neighbor_indices(idx, node_type))


def validate_metapaths(schema: Union[Schema, Hin], paths: Sequence[MetaPath]) -> List[MetaPathCheck]:
    """逐条检查元路径的相邻类型对是否都有声明的关系；不抛异常。"""
    if isinstance(schema, Hin):
        schema = schema.schema
    report = []
    for path in paths:
        check = MetaPathCheck(path, True)
        for step, (type_a, type_b) in enumerate(zip(path.node_types, path.node_types[1:]), start=1):
            if not (schema.has_type(type_a) and schema.has_type(type_b)) or schema.kind_between(type_a, type_b) is None:
                check = MetaPathCheck(path, False, step, (type_a, type_b))
                logger.warning(f"Meta path '{path.name}' invalid at step {step}: no {type_a}-{type_b} relation.")
                break
        report.append(check)
    return report


def load_metapaths(path: str) -> List[MetaPath]:
    paths = []
    with open(path, encoding="utf-8") as handle:
        for raw in handle:
            line = raw.split("#", 1)[0].strip()
            if line:
                paths.append(MetaPath.parse(line))
    return paths


def save_metapaths(paths: Sequence[MetaPath], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for meta_path in paths:
            handle.write(f"{meta_path}\n")


def aspect_start_paths(paths: Sequence[MetaPath], schema: Schema) -> List[MetaPath]:
    """
    由物品起始的对称元路径旋转出方面起始的元路径 (MAM → AMA)，
    用于生成 n(A) 序列。已存在的路径不会重复加入。
    """
    aspects = set(schema.aspect_types)
    existing = {p.node_types for p in paths}
    rotated: List[MetaPath] = []
    for path in paths:
        if path.start_type != schema.item_type or not path.is_symmetric:
            continue
        position = next((i for i, t in enumerate(path.node_types[:-1]) if t in aspects), None)
        if position is None:
            continue
        candidate = path.rotated_to(position)
        if candidate.node_types not in existing:
            existing.add(candidate.node_types)
            rotated.append(candidate)
    return rotated
