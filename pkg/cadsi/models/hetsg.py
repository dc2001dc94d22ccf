# cadsi/models/hetsg.py
"""
异构 skip-gram 预训练与多元路径嵌入融合

每条元路径各有一张 (target, context) 嵌入表；负样本按上下文节点的类型，
从该路径语料中同类型节点的 unigram^0.75 分布采样。
融合: c = (1/J) Σ_j (M c^j + b)，M、b 按节点类型各一套。
"""
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit, log_expit

from cadsi.graph.hin import Hin, MetaPath
from cadsi.graph.walks import Walk, WalkCorpus
from cadsi.utils import constants as C
from cadsi.utils.errors import DimensionError, EmbeddingError
from cadsi.utils.helpers import scatter_rows, stream_rng
from cadsi.utils.logger import logger


@dataclass(frozen=True)
class SkipGramConfig:
    dim: int = C.DEFAULT_DIM
    window: int = C.DEFAULT_WINDOW
    negatives: int = C.DEFAULT_NEGATIVES
    lr: float = C.DEFAULT_SKIPGRAM_LR
    epochs: int = C.DEFAULT_SKIPGRAM_EPOCHS
    seed: int = C.DEFAULT_SEED
    batch_size: int = C.DEFAULT_SKIPGRAM_BATCH

    def __post_init__(self):
        if self.dim < 2:
            raise DimensionError(f"Embedding dim must be >= 2, got {self.dim}.")
        if self.window < 1 or self.negatives < 1:
            raise EmbeddingError(f"window and negatives must be >= 1 (got {self.window}, {self.negatives}).")
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0:
            raise EmbeddingError("epochs >= 0, batch_size >= 1 and lr >= 0 are required.")


# ---------------------------------------------------------------------------
# 嵌入表
# ---------------------------------------------------------------------------
@dataclass
class PathTable:
    """一条元路径的词表与 target/context 嵌入。"""
    meta_path: MetaPath
    node_ids: Tuple[str, ...]
    node_types: Tuple[str, ...]
    target: np.ndarray
    context: np.ndarray
    index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {node_id: row for row, node_id in enumerate(self.node_ids)}
        if self.target.shape != self.context.shape or self.target.shape[0] != len(self.node_ids):
            raise DimensionError(f"Table {self.meta_path.name}: target/context shapes disagree with vocabulary.")

    @property
    def name(self) -> str:
        return self.meta_path.name

    @property
    def dim(self) -> int:
        return int(self.target.shape[1])

    def rows_of_type(self, node_type: str) -> np.ndarray:
        return np.array([row for row, t in enumerate(self.node_types) if t == node_type], dtype=np.int64)

    def copy(self) -> "PathTable":
        return PathTable(self.meta_path, self.node_ids, self.node_types, self.target.copy(), self.context.copy())


@dataclass
class MetaPathEmbeddings:
    """所有元路径的嵌入表，按路径给定顺序保存。"""
    tables: Dict[str, PathTable]
    loss_history: List[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return next(iter(self.tables.values())).dim

    def paths_starting_with(self, node_type: str) -> List[PathTable]:
        return [table for table in self.tables.values() if table.meta_path.start_type == node_type]

    def check_finite(self) -> None:
        for table in self.tables.values():
            if not (np.isfinite(table.target).all() and np.isfinite(table.context).all()):
                raise EmbeddingError(f"Non-finite entries in embedding table {table.name}.")

    def save(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        for table in self.tables.values():
            write_embedding_tsv(os.path.join(out_dir, f"{table.name}.target.tsv"), table.node_types, table.node_ids, table.target)
            write_embedding_tsv(os.path.join(out_dir, f"{table.name}.context.tsv"), table.node_types, table.node_ids, table.context)

    @classmethod
    def load(cls, in_dir: str, meta_paths: Sequence[MetaPath]) -> "MetaPathEmbeddings":
        tables = {}
        for meta_path in meta_paths:
            target_file = os.path.join(in_dir, f"{meta_path.name}.target.tsv")
            if not os.path.exists(target_file):
                continue
            types, ids, target = read_embedding_tsv(target_file)
            _, _, context = read_embedding_tsv(os.path.join(in_dir, f"{meta_path.name}.context.tsv"))
            tables[meta_path.name] = PathTable(meta_path, tuple(ids), tuple(types), target, context)
        if not tables:
            raise EmbeddingError(f"No path tables found in {in_dir}.")
        return cls(tables)


def write_embedding_tsv(path: str, node_types: Sequence[str], node_ids: Sequence[str], matrix: np.ndarray) -> None:
    """写出 <node_type>\t<node_id>\t<v_1>…<v_d>。"""
    frame = pd.DataFrame(np.asarray(matrix, dtype=np.float64))
    frame.insert(0, "id", list(node_ids))
    frame.insert(0, "type", list(node_types))
    frame.to_csv(path, sep="\t", header=False, index=False, float_format=C.FLOAT_FORMAT)


def read_embedding_tsv(path: str) -> Tuple[List[str], List[str], np.ndarray]:
    if not os.path.exists(path):
        raise EmbeddingError(f"Embedding file not found: {path}", code="checkpoint_missing")
    frame = pd.read_csv(path, sep="\t", header=None, dtype={0: str, 1: str}, keep_default_na=False)
    matrix = frame.iloc[:, 2:].to_numpy(dtype=np.float64)
    return list(frame[0]), list(frame[1]), matrix


# ---------------------------------------------------------------------------
# 负采样目标函数
# ---------------------------------------------------------------------------
def skipgram_loss(center: np.ndarray, context: np.ndarray, negatives: np.ndarray) -> float:
    """−log σ(t·c) − Σ_w log σ(−t·c_w)，negatives 形状 (W, d)。"""
    return float(-log_expit(center @ context) - log_expit(-(np.atleast_2d(negatives) @ center)).sum())


def skipgram_batch(target: np.ndarray, context: np.ndarray, centers: np.ndarray, contexts: np.ndarray,
                   negatives: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    一个批次的负采样损失 (求和) 以及对 target/context 整表的梯度。

    Args:
        centers, contexts: (B,) 行下标。
        negatives: (B, W) 行下标。
    """
    tc = target[centers]
    cp = context[contexts]
    cn = context[negatives]
    s_pos = np.einsum("bd,bd->b", tc, cp)
    s_neg = np.einsum("bd,bwd->bw", tc, cn)
    loss = float(-log_expit(s_pos).sum() - log_expit(-s_neg).sum())

    g_pos = expit(s_pos) - 1.0
    g_neg = expit(s_neg)
    d_center = g_pos[:, None] * cp + np.einsum("bw,bwd->bd", g_neg, cn)
    d_pos = g_pos[:, None] * tc
    d_neg = g_neg[:, :, None] * tc[:, None, :]

    n_rows, dim = target.shape
    grad_target = scatter_rows(centers, d_center, n_rows)
    grad_context = scatter_rows(
        np.concatenate([contexts, negatives.ravel()]),
        np.concatenate([d_pos, d_neg.reshape(-1, dim)]),
        n_rows,
    )
    return loss, grad_target, grad_context


def skipgram_step(table: PathTable, center: str, context: str, negatives: Sequence[str], cfg: SkipGramConfig) -> float:
    """
    对单个 (中心, 上下文, 负样本) 做一步 SGD，原地更新 table，返回更新前的损失。
    中心与上下文相同时跳过，返回 0。
    """
    if center == context:
        return 0.0
    try:
        c_row, x_row = table.index[center], table.index[context]
        n_rows = np.array([table.index[n] for n in negatives], dtype=np.int64)
    except KeyError as exc:
        raise EmbeddingError(f"Node {exc} not in table {table.name}.") from exc
    context_type = table.node_types[x_row]
    if any(table.node_types[r] != context_type for r in n_rows):
        raise EmbeddingError(f"Negatives must share the context type {context_type}.")
    loss, grad_target, grad_context = skipgram_batch(
        table.target, table.context, np.array([c_row]), np.array([x_row]), n_rows[None, :]
    )
    table.target -= cfg.lr * grad_target
    table.context -= cfg.lr * grad_context
    return loss


# ---------------------------------------------------------------------------
# 训练数据
# ---------------------------------------------------------------------------
class NegativeSampler:
    """按节点类型的 unigram^0.75 负采样器 (单条元路径)。"""

    def __init__(self, table: PathTable, counts: np.ndarray, power: float = C.UNIGRAM_POWER):
        self._type_of_row = np.array([self._code(table, t) for t in table.node_types], dtype=np.int64)
        self._candidates: Dict[int, np.ndarray] = {}
        self._probabilities: Dict[int, np.ndarray] = {}
        for code in np.unique(self._type_of_row):
            rows = np.flatnonzero(self._type_of_row == code)
            weights = np.power(counts[rows].astype(np.float64), power)
            self._candidates[int(code)] = rows
            self._probabilities[int(code)] = weights / weights.sum()

    @staticmethod
    def _code(table: PathTable, node_type: str) -> int:
        return table.meta_path.node_types.index(node_type)

    def sample(self, contexts: np.ndarray, n_negatives: int, rng: np.random.Generator) -> np.ndarray:
        """为每个上下文行采 n_negatives 个同类型负样本，返回 (B, W)。"""
        out = np.empty((contexts.shape[0], n_negatives), dtype=np.int64)
        codes = self._type_of_row[contexts]
        for code in np.unique(codes):
            mask = codes == code
            out[mask] = rng.choice(self._candidates[int(code)], size=(int(mask.sum()), n_negatives),
                                   p=self._probabilities[int(code)])
        return out

    def type_code(self, rows: np.ndarray) -> np.ndarray:
        return self._type_of_row[rows]


@dataclass
class SkipGramPairs:
    """一条元路径语料展开后的 (中心, 上下文) 对与负采样器。"""
    centers: np.ndarray
    contexts: np.ndarray
    sampler: NegativeSampler

    @property
    def n_pairs(self) -> int:
        return int(self.centers.shape[0])


def build_vocabulary(meta_path: MetaPath, walks: Sequence[Walk]) -> Tuple[Tuple[str, ...], Tuple[str, ...], np.ndarray]:
    """返回 (节点 id, 节点类型, 出现次数)，词表按 (类型在路径中的位置, id) 排序。"""
    counts: Dict[Tuple[str, str], int] = {}
    for walk in walks:
        for position, node_id in enumerate(walk.nodes):
            key = (walk.type_at(position), node_id)
            counts[key] = counts.get(key, 0) + 1
    keys = sorted(counts, key=lambda key: (meta_path.node_types.index(key[0]), key[1]))
    return (tuple(k[1] for k in keys), tuple(k[0] for k in keys),
            np.array([counts[k] for k in keys], dtype=np.int64))


def build_pairs(table: PathTable, walks: Sequence[Walk], window: int, counts: np.ndarray) -> SkipGramPairs:
    """窗口内所有节点 (不限类型) 都是上下文；中心等于上下文的对被丢弃。"""
    centers: List[int] = []
    contexts: List[int] = []
    for walk in walks:
        rows = [table.index[node_id] for node_id in walk.nodes]
        for j, center in enumerate(rows):
            for k in range(max(0, j - window), min(len(rows), j + window + 1)):
                if k != j and rows[k] != center:
                    centers.append(center)
                    contexts.append(rows[k])
    return SkipGramPairs(np.array(centers, dtype=np.int64), np.array(contexts, dtype=np.int64), NegativeSampler(table, counts))


def prepare_tables(corpus: WalkCorpus, cfg: SkipGramConfig) -> Tuple[MetaPathEmbeddings, Dict[str, SkipGramPairs]]:
    """建立每条元路径的词表、随机初始化的嵌入表以及训练对。"""
    if corpus.is_empty():
        raise EmbeddingError("Cannot train skip-gram on an empty corpus.", code="corpus_empty")
    tables: Dict[str, PathTable] = {}
    pairs: Dict[str, SkipGramPairs] = {}
    for path_idx, (meta_path, walks) in enumerate(corpus.by_path().items()):
        node_ids, node_types, counts = build_vocabulary(meta_path, walks)
        rng = stream_rng(cfg.seed, 1, path_idx)
        bound = 0.5 / cfg.dim
        target = rng.uniform(-bound, bound, size=(len(node_ids), cfg.dim))
        context = np.zeros((len(node_ids), cfg.dim))
        table = PathTable(meta_path, node_ids, node_types, target, context)
        tables[meta_path.name] = table
        pairs[meta_path.name] = build_pairs(table, walks, cfg.window, counts)
    return MetaPathEmbeddings(tables), pairs


def pairs_for_tables(emb: MetaPathEmbeddings, corpus: WalkCorpus, window: int) -> Dict[str, SkipGramPairs]:
    """按已有 (例如从检查点读回的) 嵌入表的行序重建训练对，供联合训练的 L_θ 使用。"""
    out: Dict[str, SkipGramPairs] = {}
    for meta_path, walks in corpus.by_path().items():
        table = emb.tables.get(meta_path.name)
        if table is None:
            continue
        node_ids, _, counts = build_vocabulary(meta_path, walks)
        aligned = np.zeros(len(table.node_ids), dtype=np.int64)
        for node_id, count in zip(node_ids, counts):
            if node_id in table.index:
                aligned[table.index[node_id]] = count
        out[meta_path.name] = build_pairs(table, walks, window, aligned)
    return out


def _row_counts(rows: np.ndarray, n_rows: int) -> np.ndarray:
    return np.maximum(np.bincount(rows, minlength=n_rows), 1)[:, None]


def train_skipgram(corpus: WalkCorpus, cfg: SkipGramConfig) -> MetaPathEmbeddings:
    """
    小批量 SGD 训练每条元路径的嵌入表。

    同一批次中一个节点出现多次时，其梯度按出现次数取平均后再乘学习率，
    使批量更新的步长与逐对 SGD 同量级。loss_history 记录每轮的平均单对损失。
    """
    emb, all_pairs = prepare_tables(corpus, cfg)
    for epoch in range(cfg.epochs):
        total, n_pairs = 0.0, 0
        for path_idx, (name, pairs) in enumerate(all_pairs.items()):
            table = emb.tables[name]
            rng = stream_rng(cfg.seed, 2, path_idx, epoch)
            order = rng.permutation(pairs.n_pairs)
            n_rows = table.target.shape[0]
            for start in range(0, pairs.n_pairs, cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                centers, contexts = pairs.centers[batch], pairs.contexts[batch]
                negatives = pairs.sampler.sample(contexts, cfg.negatives, rng)
                loss, grad_target, grad_context = skipgram_batch(table.target, table.context, centers, contexts, negatives)
                table.target -= cfg.lr * grad_target / _row_counts(centers, n_rows)
                table.context -= cfg.lr * grad_context / _row_counts(np.concatenate([contexts, negatives.ravel()]), n_rows)
                total += loss
                n_pairs += batch.shape[0]
        emb.check_finite()
        average = total / max(n_pairs, 1)
        emb.loss_history.append(average)
        logger.info(f"Skip-gram epoch {epoch + 1}/{cfg.epochs}: mean loss {average:.6f} over {n_pairs} pairs.")
    return emb


# ---------------------------------------------------------------------------
# 融合
# ---------------------------------------------------------------------------
@dataclass
class FusionParams:
    """每个节点类型一套 (M, b)。"""
    matrices: Dict[str, np.ndarray]
    biases: Dict[str, np.ndarray]

    @classmethod
    def near_identity(cls, node_types: Sequence[str], dim: int, seed: int,
                      noise: float = C.FUSION_INIT_NOISE) -> "FusionParams":
        matrices, biases = {}, {}
        for code, node_type in enumerate(node_types):
            rng = stream_rng(seed, 3, code)
            matrices[node_type] = np.eye(dim) + noise * rng.standard_normal((dim, dim))
            biases[node_type] = np.zeros(dim)
        return cls(matrices, biases)

    def get(self, node_type: str) -> Tuple[np.ndarray, np.ndarray]:
        if node_type not in self.matrices:
            raise EmbeddingError(f"No fusion parameters for node type '{node_type}'.")
        return self.matrices[node_type], self.biases[node_type]

    def save(self, path: str) -> None:
        arrays = {}
        for node_type in self.matrices:
            arrays[f"M:{node_type}"] = self.matrices[node_type]
            arrays[f"b:{node_type}"] = self.biases[node_type]
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str) -> "FusionParams":
        if not os.path.exists(path):
            raise EmbeddingError(f"Fusion file not found: {path}", code="checkpoint_missing")
        with np.load(path) as data:
            matrices = {key[2:]: data[key] for key in data.files if key.startswith("M:")}
            biases = {key[2:]: data[key] for key in data.files if key.startswith("b:")}
        return cls(matrices, biases)


def fuse_vectors(vectors: Sequence[np.ndarray], M: np.ndarray, b: np.ndarray) -> Optional[np.ndarray]:
    """(1/J) Σ_j (M v_j + b)；J = 0 时返回 None。"""
    if len(vectors) == 0:
        return None
    stacked = np.vstack([np.asarray(v, dtype=np.float64) for v in vectors])
    if stacked.shape[1] != M.shape[1]:
        raise DimensionError(f"Vector width {stacked.shape[1]} does not match fusion matrix {M.shape}.")
    return stacked.mean(axis=0) @ M.T + b


@dataclass(frozen=True)
class FusionRows:
    """
    节点列表在各元路径表中的行号 (缺失为 -1) 及有效路径数 J。
    训练时用它把路径表的 target 向量平均成 T̄，再做仿射变换。
    """
    node_ids: Tuple[str, ...]
    rows: Dict[str, np.ndarray]
    counts: np.ndarray

    def mean_vectors(self, targets: Dict[str, np.ndarray], dim: int) -> np.ndarray:
        total = np.zeros((len(self.node_ids), dim))
        for name, rows in self.rows.items():
            present = rows >= 0
            total[present] += targets[name][rows[present]]
        return total / np.maximum(self.counts, 1)[:, None]

    def scatter_mean_grad(self, grad_mean: np.ndarray, shapes: Dict[str, Tuple[int, int]]) -> Dict[str, np.ndarray]:
        """把对 T̄ 的梯度分回各路径表的 target。"""
        scaled = grad_mean / np.maximum(self.counts, 1)[:, None]
        grads = {}
        for name, rows in self.rows.items():
            present = rows >= 0
            grads[name] = scatter_rows(rows[present], scaled[present], shapes[name][0])
        return grads

    @property
    def missing(self) -> np.ndarray:
        return self.counts == 0


def fusion_rows(emb: MetaPathEmbeddings, node_ids: Sequence[str], node_type: str) -> FusionRows:
    """以 node_type 开头的元路径为该类型节点的 c^j 来源。"""
    rows: Dict[str, np.ndarray] = {}
    counts = np.zeros(len(node_ids), dtype=np.int64)
    for table in emb.paths_starting_with(node_type):
        column = np.array([
            table.index[n] if n in table.index and table.node_types[table.index[n]] == node_type else -1
            for n in node_ids
        ], dtype=np.int64)
        rows[table.name] = column
        counts += column >= 0
    return FusionRows(tuple(node_ids), rows, counts)


def fuse_nodes(emb: MetaPathEmbeddings, node_ids: Sequence[str], node_type: str,
               params: FusionParams) -> Tuple[np.ndarray, List[str]]:
    """融合一组同类型节点；没有任何路径向量的节点得到零向量并被列入返回的标记列表。"""
    fr = fusion_rows(emb, node_ids, node_type)
    M, b = params.get(node_type)
    fused = fr.mean_vectors({name: t.target for name, t in emb.tables.items()}, emb.dim) @ M.T + b
    fused[fr.missing] = 0.0
    flagged = [node_ids[i] for i in np.flatnonzero(fr.missing)]
    if flagged:
        logger.warning(f"{len(flagged)} {node_type} node(s) have no per-path vector; assigned zero vectors.")
    return fused, flagged


@dataclass
class ContextBank:
    """上下文嵌入集合: 每个用户 c_u、每个物品 c_i、每个方面类型一个 c_a。"""
    user_ids: Tuple[str, ...]
    item_ids: Tuple[str, ...]
    users: np.ndarray
    items: np.ndarray
    aspect_types: Tuple[str, ...]
    aspects: np.ndarray
    user_type: str = C.DEFAULT_USER_TYPE
    item_type: str = ""
    flagged: List[str] = field(default_factory=list)

    @property
    def aspect_count(self) -> int:
        return len(self.aspect_types)

    @property
    def dim(self) -> int:
        return int(self.users.shape[1])

    def save(self, path: str) -> None:
        types = [self.user_type] * len(self.user_ids) + [self.item_type] * len(self.item_ids) \
            + [C.ASPECT_ROW_TYPE] * len(self.aspect_types)
        ids = list(self.user_ids) + list(self.item_ids) + list(self.aspect_types)
        write_embedding_tsv(path, types, ids, np.vstack([self.users, self.items, self.aspects.reshape(-1, self.dim)]))

    @classmethod
    def load(cls, path: str, user_type: str, item_type: str) -> "ContextBank":
        types, ids, matrix = read_embedding_tsv(path)
        types = np.array(types)
        ids = np.array(ids, dtype=object)
        pick = {kind: types == kind for kind in (user_type, item_type, C.ASPECT_ROW_TYPE)}
        return cls(
            tuple(ids[pick[user_type]]), tuple(ids[pick[item_type]]),
            matrix[pick[user_type]], matrix[pick[item_type]],
            tuple(ids[pick[C.ASPECT_ROW_TYPE]]), matrix[pick[C.ASPECT_ROW_TYPE]],
            user_type, item_type,
        )


def fuse_embeddings(hin: Hin, emb: MetaPathEmbeddings, params: FusionParams) -> ContextBank:
    """
    融合所有节点的路径向量得到 ContextBank。
    方面类型向量是该类型下有路径向量的节点的无权平均；一个都没有时为零向量。
    """
    schema = hin.schema
    user_ids = tuple(hin.node_ids[n] for n in hin.nodes_of_type(schema.user_type))
    item_ids = tuple(hin.node_ids[n] for n in hin.nodes_of_type(schema.item_type))
    users, flagged_users = fuse_nodes(emb, user_ids, schema.user_type, params)
    items, flagged_items = fuse_nodes(emb, item_ids, schema.item_type, params)
    flagged = flagged_users + flagged_items
    aspect_vectors = []
    for aspect_type in schema.aspect_types:
        aspect_ids = [hin.node_ids[n] for n in hin.nodes_of_type(aspect_type)]
        fused, flagged_aspects = fuse_nodes(emb, aspect_ids, aspect_type, params)
        flagged += flagged_aspects
        visited = ~np.isin(aspect_ids, flagged_aspects)
        aspect_vectors.append(fused[visited].mean(axis=0) if visited.any() else np.zeros(emb.dim))
    aspects = np.vstack(aspect_vectors) if aspect_vectors else np.zeros((0, emb.dim))
    bank = ContextBank(user_ids, item_ids, users, items, schema.aspect_types, aspects,
                       schema.user_type, schema.item_type, flagged)
    if not (np.isfinite(bank.users).all() and np.isfinite(bank.items).all() and np.isfinite(bank.aspects).all()):
        raise EmbeddingError("Fused context embeddings contain non-finite values.")
    logger.info(f"Context bank: {len(user_ids)} users, {len(item_ids)} items, {bank.aspect_count} aspect types "
                f"({len(flagged)} zero-vector node(s)).")
    return bank
