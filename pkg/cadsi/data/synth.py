# cadsi/data/synth.py
"""
带混杂因子的合成 HIN 生成器

- 每个方面类型的属性流行度服从 Zipf 分布 (按秩)，skew_exponent = 0 时均匀；
- 每个方面类型恰有 round(missing_rate · n_items) 个物品缺失该属性；
- 每个用户有一个真实意图，意图按主方面 (第一个方面类型) 属性的流行度秩轮流分配偏好属性，
  最热门的属性 (秩 0) 不分给任何意图；
- 每次交互以 confound_strength 的概率由混杂因子驱动 (从带最热门主属性的物品中取)，
  否则由意图驱动 (从带偏好属性的物品中取)，驱动来源逐条记录。
"""
import math
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from cadsi.graph.hin import Hin, MetaPath, NodeType, Schema, TypedEdgeKind, save_metapaths
from cadsi.utils import constants as C
from cadsi.utils.errors import HinError, SynthConfigError
from cadsi.utils.logger import logger

DRIVER_INTENT = "intent"
DRIVER_CONFOUNDER = "confounder"
DRIVER_FALLBACK = "fallback"


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = C.DEFAULT_SYNTH_USERS
    n_items: int = C.DEFAULT_SYNTH_ITEMS
    user_type: str = C.DEFAULT_USER_TYPE
    item_type: str = C.DEFAULT_SYNTH_ITEM_TYPE
    aspect_types: Tuple[Tuple[str, int], ...] = C.DEFAULT_SYNTH_ASPECTS
    skew_exponent: float = C.DEFAULT_SYNTH_SKEW
    missing_rate: Dict[str, float] = field(default_factory=lambda: dict(C.DEFAULT_SYNTH_MISSING))
    true_intents: int = C.DEFAULT_SYNTH_INTENTS
    interactions_per_user: int = C.DEFAULT_SYNTH_INTERACTIONS
    confound_strength: float = C.DEFAULT_SYNTH_CONFOUND
    friends_per_user: int = 0
    seed: int = C.DEFAULT_SEED

    def __post_init__(self):
        if min(self.n_users, self.n_items, self.true_intents, self.interactions_per_user) < 1:
            raise SynthConfigError("n_users, n_items, true_intents and interactions_per_user must be >= 1.")
        if not self.aspect_types or any(card < 1 for _, card in self.aspect_types):
            raise SynthConfigError("At least one aspect type with cardinality >= 1 is required.")
        if self.skew_exponent < 0:
            raise SynthConfigError(f"skew_exponent must be >= 0, got {self.skew_exponent}.")
        if not 0.0 <= self.confound_strength <= 1.0:
            raise SynthConfigError(f"confound_strength must lie in [0, 1], got {self.confound_strength}.")
        for name, rate in self.missing_rate.items():
            if not 0.0 <= rate <= 1.0:
                raise SynthConfigError(f"missing_rate[{name}] must lie in [0, 1], got {rate}.")
        if self.true_intents > self.aspect_types[0][1] - 1:
            raise SynthConfigError(f"{self.true_intents} intents exceed the {self.aspect_types[0][1] - 1} non-majority "
                                   f"values of the primary aspect {self.aspect_types[0][0]}.")
        if self.interactions_per_user > self.n_items:
            raise SynthConfigError("interactions_per_user cannot exceed n_items.")
        if self.friends_per_user < 0 or self.friends_per_user >= self.n_users:
            raise SynthConfigError("friends_per_user must lie in [0, n_users).")
        prefixes = [t.lower() for t in self.type_names]
        if len(set(prefixes)) != len(prefixes):
            raise SynthConfigError(f"Node type names must differ case-insensitively: {self.type_names}.")

    @property
    def type_names(self) -> Tuple[str, ...]:
        return (self.user_type, self.item_type) + tuple(name for name, _ in self.aspect_types)

    @property
    def primary_aspect(self) -> str:
        return self.aspect_types[0][0]


PRESETS: Dict[str, SynthConfig] = {
    "default": SynthConfig(),
    "douban-book": SynthConfig(
        item_type="Bo",
        aspect_types=(("Au", 60), ("P", 30), ("Y", 15)),
        missing_rate={"Au": 0.25, "P": 0.1, "Y": 0.05},
        friends_per_user=6,
    ),
}


def preset(name: str, **overrides) -> SynthConfig:
    if name not in PRESETS:
        raise SynthConfigError(f"Unknown synth preset '{name}' (available: {sorted(PRESETS)}).")
    return replace(PRESETS[name], **overrides)


def node_id(node_type: str, index: int) -> str:
    return f"{node_type.lower()}{index}"


def zipf_weights(cardinality: int, exponent: float) -> np.ndarray:
    weights = 1.0 / np.power(np.arange(1, cardinality + 1, dtype=np.float64), exponent)
    return weights / weights.sum()


# ---------------------------------------------------------------------------
# 真值
# ---------------------------------------------------------------------------
# ground_truth.tsv 的各段表头
TRUTH_HEADER_PREFIX = "# "
TRUTH_USER_INTENT = ("user", "intent")
TRUTH_ITEM_ATTRIBUTE = ("item", "aspect_type", "attr_id")
TRUTH_INTENT_ATTRIBUTE = ("intent", "aspect_type", "attr_id")
TRUTH_ATTRIBUTE_RANK = ("aspect_type", "attr_id", "rank")
TRUTH_DRIVER = ("user", "item", "driver")


def read_truth_sections(path: str) -> Dict[Tuple[str, ...], pd.DataFrame]:
    """把 ground_truth.tsv 切成 {表头: DataFrame}，所有值按字符串读入。"""
    sections: Dict[Tuple[str, ...], List[List[str]]] = {}
    current: Optional[Tuple[str, ...]] = None
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith(TRUTH_HEADER_PREFIX):
                current = tuple(line[len(TRUTH_HEADER_PREFIX):].split("\t"))
                sections.setdefault(current, [])
                continue
            fields = line.split("\t")
            if current is None or len(fields) != len(current):
                raise HinError(f"{path}:{line_no}: row does not match its section header.", code="ground_truth_invalid")
            sections[current].append(fields)
    return {header: pd.DataFrame(rows, columns=list(header), dtype=str) for header, rows in sections.items()}


@dataclass
class GroundTruth:
    user_intent: Dict[str, int]
    item_attributes: Dict[str, Dict[str, Optional[str]]]
    intent_attributes: Dict[int, List[str]]
    attribute_rank: Dict[str, Dict[str, int]]
    drivers: List[Tuple[str, str, str]]
    primary_aspect: str

    def sections(self) -> Dict[Tuple[str, ...], List[Tuple[str, ...]]]:
        """按表头分段的行；前两段是必需的，其余段可被只认前两段的读取方跳过。"""
        return {
            TRUTH_USER_INTENT: [(user, str(intent)) for user, intent in self.user_intent.items()],
            TRUTH_ITEM_ATTRIBUTE: [(item, aspect, attr if attr is not None else C.MISSING_TOKEN)
                                   for item, attrs in self.item_attributes.items() for aspect, attr in attrs.items()],
            TRUTH_INTENT_ATTRIBUTE: [(str(intent), self.primary_aspect, attr)
                                     for intent, attrs in self.intent_attributes.items() for attr in attrs],
            TRUTH_ATTRIBUTE_RANK: [(aspect, attr, str(rank))
                                   for aspect, ranks in self.attribute_rank.items() for attr, rank in ranks.items()],
            TRUTH_DRIVER: list(self.drivers),
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            for header, rows in self.sections().items():
                handle.write(TRUTH_HEADER_PREFIX + "\t".join(header) + "\n")
                if rows:
                    pd.DataFrame(rows, columns=list(header)).to_csv(handle, sep="\t", header=False, index=False,
                                                                    lineterminator="\n")

    @classmethod
    def load(cls, path: str) -> "GroundTruth":
        """不认识的段被忽略；缺少 user/intent 或 item/aspect_type/attr_id 段时报错。"""
        frames = read_truth_sections(path)
        for header in (TRUTH_USER_INTENT, TRUTH_ITEM_ATTRIBUTE):
            if header not in frames:
                raise HinError(f"{path}: missing section '{' '.join(header)}'.", code="ground_truth_invalid")
        truth = cls({}, {}, {}, {}, [], "")
        for user, intent in frames[TRUTH_USER_INTENT].itertuples(index=False):
            truth.user_intent[user] = int(intent)
        for item, aspect, attr in frames[TRUTH_ITEM_ATTRIBUTE].itertuples(index=False):
            truth.item_attributes.setdefault(item, {})[aspect] = None if attr == C.MISSING_TOKEN else attr
        if TRUTH_INTENT_ATTRIBUTE in frames:
            for intent, aspect, attr in frames[TRUTH_INTENT_ATTRIBUTE].itertuples(index=False):
                truth.intent_attributes.setdefault(int(intent), []).append(attr)
                truth.primary_aspect = aspect
        if TRUTH_ATTRIBUTE_RANK in frames:
            for aspect, attr, rank in frames[TRUTH_ATTRIBUTE_RANK].itertuples(index=False):
                truth.attribute_rank.setdefault(aspect, {})[attr] = int(rank)
        if TRUTH_DRIVER in frames:
            truth.drivers = [tuple(row) for row in frames[TRUTH_DRIVER].itertuples(index=False)]
        return truth

    def intent_consistent(self, user: str, item: str) -> bool:
        attr = self.item_attributes.get(item, {}).get(self.primary_aspect)
        return attr is not None and attr in self.intent_attributes.get(self.user_intent[user], [])

    def minority_mask(self, item_ids: Sequence[str]) -> np.ndarray:
        """主属性缺失或位于流行度后 50% 的物品。"""
        ranks = self.attribute_rank.get(self.primary_aspect, {})
        head = math.ceil(len(ranks) / 2)
        mask = np.zeros(len(item_ids), dtype=bool)
        for idx, item in enumerate(item_ids):
            attr = self.item_attributes.get(item, {}).get(self.primary_aspect)
            mask[idx] = attr is None or ranks.get(attr, head) >= head
        return mask


# ---------------------------------------------------------------------------
# 偏斜报告
# ---------------------------------------------------------------------------
@dataclass
class AspectSkew:
    aspect_type: str
    n_attributes: int
    n_items: int
    missing_items: int
    connection_counts: Dict[str, int]
    head_mass: float

    @property
    def missing_fraction(self) -> float:
        return self.missing_items / self.n_items if self.n_items else 0.0

    @property
    def tail_mass(self) -> float:
        return 1.0 - self.head_mass if sum(self.connection_counts.values()) else 0.0

    def histogram(self) -> Dict[int, int]:
        """连接数 → 具有该连接数的属性个数。"""
        values, counts = np.unique(np.array(list(self.connection_counts.values()), dtype=np.int64), return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


@dataclass
class SkewReport:
    aspects: List[AspectSkew]

    @property
    def most_missing(self) -> Optional[str]:
        if not self.aspects:
            return None
        return max(self.aspects, key=lambda a: a.missing_fraction).aspect_type

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "aspect_type": a.aspect_type,
            "n_attributes": a.n_attributes,
            "n_items": a.n_items,
            "missing_items": a.missing_items,
            "missing_fraction": a.missing_fraction,
            "head_mass": a.head_mass,
            "tail_mass": a.tail_mass,
            "histogram": " ".join(f"{k}:{v}" for k, v in a.histogram().items()),
            "most_missing": a.aspect_type == self.most_missing,
        } for a in self.aspects])

    def save(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format=C.FLOAT_FORMAT)


def skew_report(hin: Hin) -> SkewReport:
    """每个方面类型的缺失数、连接数直方图以及按 50% 流行度分位切开的头/尾质量。不抛异常。"""
    schema = hin.schema
    items = hin.nodes_of_type(schema.item_type)
    aspects = []
    for aspect_type in schema.aspect_types:
        attrs = hin.nodes_of_type(aspect_type)
        counts = {hin.node_ids[a]: int(hin.neighbor_indices(a, schema.item_type).size) for a in attrs}
        missing = int(sum(1 for i in items if hin.neighbor_indices(i, aspect_type).size == 0))
        ordered = sorted(counts.values(), reverse=True)
        total = sum(ordered)
        head = sum(ordered[:math.ceil(len(ordered) / 2)])
        aspects.append(AspectSkew(aspect_type, len(attrs), int(items.size), missing, counts,
                                  head / total if total else 0.0))
        if total == 0:
            logger.warning(f"Aspect type {aspect_type} has no item connections.")
    return SkewReport(aspects)


# ---------------------------------------------------------------------------
# 生成
# ---------------------------------------------------------------------------
@dataclass
class SynthResult:
    hin: Hin
    truth: GroundTruth
    report: SkewReport
    metapaths: List[MetaPath]


def default_metapaths(cfg: SynthConfig) -> List[MetaPath]:
    """用户起始与物品起始的对称元路径；方面起始的路径在预训练时旋转得到。"""
    u, m = cfg.user_type, cfg.item_type
    paths = [MetaPath((u, m, u))]
    paths += [MetaPath((u, m, a, m, u)) for a, _ in cfg.aspect_types]
    if cfg.friends_per_user:
        paths.append(MetaPath((u, u)))
    paths.append(MetaPath((m, u, m)))
    paths += [MetaPath((m, a, m)) for a, _ in cfg.aspect_types]
    return paths


def _schema(cfg: SynthConfig) -> Schema:
    u, m = cfg.user_type, cfg.item_type
    kinds = [TypedEdgeKind(u + m, u, m)] + [TypedEdgeKind(m + a, m, a) for a, _ in cfg.aspect_types]
    if cfg.friends_per_user:
        kinds.append(TypedEdgeKind(u + u, u, u))
    return Schema(tuple(NodeType(t) for t in cfg.type_names), tuple(kinds), u, m)


def _draw(pool: np.ndarray, taken: set, rng: np.random.Generator) -> Optional[int]:
    free = [int(i) for i in pool if int(i) not in taken]
    if not free:
        return None
    return free[int(rng.integers(len(free)))]


def generate(cfg: SynthConfig, out_dir: Optional[str] = None) -> SynthResult:
    """
    生成数据集；out_dir 给出时写出 nodes.tsv、edges.tsv、schema.txt、metapaths.txt、
    interactions.tsv、ground_truth.tsv 与 skew_report.csv。
    """
    rng = np.random.default_rng(cfg.seed)
    users = [node_id(cfg.user_type, u) for u in range(cfg.n_users)]
    items = [node_id(cfg.item_type, i) for i in range(cfg.n_items)]

    # 属性分配
    item_attr: Dict[str, np.ndarray] = {}  # 每个物品的属性秩，-1 为缺失
    for aspect, card in cfg.aspect_types:
        attrs = rng.choice(card, size=cfg.n_items, p=zipf_weights(card, cfg.skew_exponent))
        n_missing = int(round(cfg.missing_rate.get(aspect, 0.0) * cfg.n_items))
        attrs[rng.choice(cfg.n_items, size=n_missing, replace=False)] = -1
        item_attr[aspect] = attrs

    primary, primary_card = cfg.aspect_types[0]
    # 秩 0 只属于混杂因子
    intent_prefs = {t: [j for j in range(1, primary_card) if (j - 1) % cfg.true_intents == t]
                    for t in range(cfg.true_intents)}
    intent_pool = {t: np.flatnonzero(np.isin(item_attr[primary], intent_prefs[t])) for t in intent_prefs}
    majority_pool = np.flatnonzero(item_attr[primary] == 0)
    for t, pool in intent_pool.items():
        if pool.size < cfg.interactions_per_user:
            logger.warning(f"Intent {t} has only {pool.size} matching items (< {cfg.interactions_per_user}); "
                           f"some interactions will fall back to random items.")

    # 交互
    user_intent = rng.integers(cfg.true_intents, size=cfg.n_users)
    interactions: List[Tuple[int, int]] = []
    drivers: List[Tuple[str, str, str]] = []
    for u in range(cfg.n_users):
        taken: set = set()
        for _ in range(cfg.interactions_per_user):
            confounded = rng.random() < cfg.confound_strength
            driver = DRIVER_CONFOUNDER if confounded else DRIVER_INTENT
            first, second = (majority_pool, intent_pool[user_intent[u]]) if confounded else (intent_pool[user_intent[u]], majority_pool)
            item = _draw(first, taken, rng)
            if item is None:
                item = _draw(second, taken, rng)
                driver = DRIVER_FALLBACK
            if item is None:
                item = _draw(np.arange(cfg.n_items), taken, rng)
            taken.add(item)
            interactions.append((u, item))
            drivers.append((users[u], items[item], driver))

    # 好友关系 (同意图优先)
    friend_edges = set()
    for u in range(cfg.n_users):
        same = np.flatnonzero((user_intent == user_intent[u]) & (np.arange(cfg.n_users) != u))
        others = np.flatnonzero(np.arange(cfg.n_users) != u)
        for _ in range(cfg.friends_per_user):
            pool = same if same.size and rng.random() < 0.8 else others
            v = int(pool[rng.integers(pool.size)])
            friend_edges.add((min(u, v), max(u, v)))

    # 组装 HIN
    schema = _schema(cfg)
    node_ids = list(users) + list(items)
    node_types = [cfg.user_type] * cfg.n_users + [cfg.item_type] * cfg.n_items
    for aspect, card in cfg.aspect_types:
        node_ids += [node_id(aspect, j) for j in range(card)]
        node_types += [aspect] * card
    index = {nid: idx for idx, nid in enumerate(node_ids)}
    edges = [(index[users[u]], index[items[i]], cfg.user_type + cfg.item_type) for u, i in interactions]
    for aspect, _ in cfg.aspect_types:
        edges += [(index[items[i]], index[node_id(aspect, int(a))], cfg.item_type + aspect)
                  for i, a in enumerate(item_attr[aspect]) if a >= 0]
    edges += [(index[users[u]], index[users[v]], cfg.user_type * 2) for u, v in sorted(friend_edges)]
    hin = Hin(schema, node_ids, node_types, edges)

    truth = GroundTruth(
        {users[u]: int(user_intent[u]) for u in range(cfg.n_users)},
        {items[i]: {a: (node_id(a, int(item_attr[a][i])) if item_attr[a][i] >= 0 else None) for a, _ in cfg.aspect_types}
         for i in range(cfg.n_items)},
        {t: [node_id(primary, j) for j in prefs] for t, prefs in intent_prefs.items()},
        {a: {node_id(a, j): j for j in range(card)} for a, card in cfg.aspect_types},
        drivers,
        primary,
    )
    report = skew_report(hin)
    metapaths = default_metapaths(cfg)

    counts = pd.Series([d for _, _, d in drivers]).value_counts().to_dict()
    logger.info(f"Synthesized {cfg.n_users} users, {cfg.n_items} items, {len(interactions)} interactions "
                f"(drivers {counts}); most-missing aspect {report.most_missing}.")

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        hin.save(out_dir)
        hin.interaction_matrix().save(os.path.join(out_dir, C.INTERACTION_FILE))
        save_metapaths(metapaths, os.path.join(out_dir, C.METAPATH_FILE))
        truth.save(os.path.join(out_dir, C.GROUND_TRUTH_FILE))
        report.save(os.path.join(out_dir, C.SKEW_REPORT_FILE))
        logger.info(f"Synthetic dataset written to {out_dir}")
    return SynthResult(hin, truth, report, metapaths)
