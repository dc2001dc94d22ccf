# cadsi/core/checkpoint.py
"""
检查点读写
所有阶段产物都是普通文件 (TSV/CSV/npz + key=value 清单)，便于检查与比对。

预训练目录:
    node_index.tsv, interactions.tsv, metapaths.txt, corpus.txt,
    path_tables/, fusion.npz, context_bank.tsv, hyperparameters.txt, manifest.txt
模型目录 (train / intervene):
    params.npz, user_id.tsv, item_id.tsv, user_intent.tsv, item_intent.tsv,
    split/, loss_trace.csv, hyperparameters.txt, manifest.txt,
    以及干预阶段的 intervention_trace.csv、intervention_curve.csv
"""
import datetime
import hashlib
import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from cadsi.evaluation.split import DataSplit
from cadsi.graph.hin import Hin, InteractionMatrix, MetaPath, load_metapaths, save_metapaths
from cadsi.graph.walks import WalkCorpus
from cadsi.models.hetsg import ContextBank, FusionParams, MetaPathEmbeddings, write_embedding_tsv
from cadsi.models.model import ITEM_ID, USER_ID, Representations
from cadsi.utils import constants as C
from cadsi.utils.errors import CheckpointError
from cadsi.utils.helpers import content_hash
from cadsi.utils.logger import logger

# 清单中的时间戳行不参与幂等比较
TIMESTAMP_KEY = "created"


# ---------------------------------------------------------------------------
# 清单
# ---------------------------------------------------------------------------
def write_manifest(out_dir: str, command: str, config_snapshot: str, inputs: Iterable[str],
                   extra: Optional[Dict[str, str]] = None, name: str = C.MANIFEST_FILE) -> str:
    """写出 key=value 清单: 命令、种子、输入内容哈希、配置快照哈希与额外字段。"""
    os.makedirs(out_dir, exist_ok=True)
    inputs = [path for path in inputs if path]
    seed = next((line.split("=", 1)[1] for line in config_snapshot.splitlines() if line.startswith("seed=")), "")
    fields = {
        "command": command,
        "seed": seed,
        "input_hash": content_hash(inputs),
        "config_hash": hashlib.sha256(config_snapshot.encode("utf-8")).hexdigest(),
        "inputs": ",".join(inputs),
    }
    fields.update(extra or {})
    fields[TIMESTAMP_KEY] = datetime.datetime.now().isoformat(timespec="seconds")
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as handle:
        for key, value in fields.items():
            handle.write(f"{key}={value}\n")
    logger.debug(f"Manifest written to {path}")
    return path


def read_manifest(ckpt_dir: str, name: str = C.MANIFEST_FILE) -> Dict[str, str]:
    path = os.path.join(ckpt_dir, name)
    if not os.path.exists(path):
        raise CheckpointError(f"No checkpoint manifest at {path}.")
    fields: Dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for raw in handle:
            line = raw.rstrip("\n")
            if "=" in line:
                key, value = line.split("=", 1)
                fields[key] = value
    return fields


def require_files(ckpt_dir: str, names: Iterable[str]) -> None:
    missing = [name for name in names if not os.path.exists(os.path.join(ckpt_dir, name))]
    if missing:
        raise CheckpointError(f"Checkpoint {ckpt_dir} is incomplete; missing {', '.join(missing)}.")


# ---------------------------------------------------------------------------
# 预训练
# ---------------------------------------------------------------------------
@dataclass
class PretrainArtifacts:
    meta_paths: List[MetaPath]
    corpus: WalkCorpus
    embeddings: MetaPathEmbeddings
    fusion: FusionParams
    bank: ContextBank
    interactions: InteractionMatrix


PRETRAIN_FILES = (C.NODE_INDEX_FILE, C.INTERACTION_FILE, C.METAPATH_FILE, C.CORPUS_FILE, C.PATH_TABLE_DIR,
                  C.FUSION_FILE, C.CONTEXT_BANK_FILE, C.HYPERPARAMS_FILE, C.MANIFEST_FILE)


def save_pretrain(out_dir: str, artifacts: PretrainArtifacts, hin: Hin) -> None:
    os.makedirs(out_dir, exist_ok=True)
    pd.DataFrame({
        "index": np.arange(hin.n_nodes),
        "id": list(hin.node_ids),
        "type": [hin.type_of(i) for i in range(hin.n_nodes)],
    }).to_csv(os.path.join(out_dir, C.NODE_INDEX_FILE), sep="\t", header=False, index=False)
    artifacts.interactions.save(os.path.join(out_dir, C.INTERACTION_FILE))
    save_metapaths(artifacts.meta_paths, os.path.join(out_dir, C.METAPATH_FILE))
    artifacts.corpus.dump(os.path.join(out_dir, C.CORPUS_FILE))
    artifacts.embeddings.save(os.path.join(out_dir, C.PATH_TABLE_DIR))
    artifacts.fusion.save(os.path.join(out_dir, C.FUSION_FILE))
    artifacts.bank.save(os.path.join(out_dir, C.CONTEXT_BANK_FILE))
    logger.info(f"Pretraining artifacts written to {out_dir}")


def load_pretrain(ckpt_dir: str) -> PretrainArtifacts:
    if not os.path.isdir(ckpt_dir):
        raise CheckpointError(f"Pretraining checkpoint directory not found: {ckpt_dir}")
    require_files(ckpt_dir, PRETRAIN_FILES)
    manifest = read_manifest(ckpt_dir)
    meta_paths = load_metapaths(os.path.join(ckpt_dir, C.METAPATH_FILE))
    bank = ContextBank.load(os.path.join(ckpt_dir, C.CONTEXT_BANK_FILE), manifest.get("user_type", C.DEFAULT_USER_TYPE),
                            manifest.get("item_type", ""))
    universe = InteractionMatrix(bank.user_ids, bank.item_ids, np.zeros((0, 2), dtype=np.int64))
    artifacts = PretrainArtifacts(
        meta_paths,
        WalkCorpus.load(os.path.join(ckpt_dir, C.CORPUS_FILE), meta_paths),
        MetaPathEmbeddings.load(os.path.join(ckpt_dir, C.PATH_TABLE_DIR), meta_paths),
        FusionParams.load(os.path.join(ckpt_dir, C.FUSION_FILE)),
        bank,
        universe.load_pairs(os.path.join(ckpt_dir, C.INTERACTION_FILE)),
    )
    logger.info(f"Loaded pretraining checkpoint {ckpt_dir}: {len(meta_paths)} meta path(s), "
                f"{artifacts.interactions.n_interactions} interactions.")
    return artifacts


# ---------------------------------------------------------------------------
# 模型
# ---------------------------------------------------------------------------
@dataclass
class ModelCheckpoint:
    directory: str
    params: Dict[str, np.ndarray]
    manifest: Dict[str, str]

    @property
    def score_mode(self) -> str:
        return self.manifest.get("score_mode", "semantic")

    @property
    def pretrain_dir(self) -> str:
        return self.manifest.get("pretrain_dir", "")

    @property
    def data_dir(self) -> str:
        return self.manifest.get("data_dir", "")

    @property
    def hyperparameters(self) -> str:
        return os.path.join(self.directory, C.HYPERPARAMS_FILE)

    def load_split(self, universe: InteractionMatrix) -> DataSplit:
        return DataSplit.load(os.path.join(self.directory, C.SPLIT_DIR), universe)


def save_params(path: str, params: Dict[str, np.ndarray]) -> None:
    np.savez(path, **{name: params[name] for name in sorted(params)})


def load_params(path: str) -> Dict[str, np.ndarray]:
    if not os.path.exists(path):
        raise CheckpointError(f"Parameter file not found: {path}")
    with np.load(path) as data:
        return {name: data[name].copy() for name in data.files}


def export_embeddings(out_dir: str, reps: Representations, train: InteractionMatrix, bank: ContextBank) -> None:
    """ID 嵌入与意图表示导出为与 path_tables 相同格式的 TSV。"""
    user_types = [bank.user_type] * train.n_users
    item_types = [bank.item_type] * train.n_items
    write_embedding_tsv(os.path.join(out_dir, f"{USER_ID}.tsv"), user_types, train.users, reps.user_id)
    write_embedding_tsv(os.path.join(out_dir, f"{ITEM_ID}.tsv"), item_types, train.items, reps.item_id)
    write_embedding_tsv(os.path.join(out_dir, "user_intent.tsv"), user_types, train.users, reps.user_intent)
    write_embedding_tsv(os.path.join(out_dir, "item_intent.tsv"), item_types, train.items, reps.item_intent)


def save_model(out_dir: str, params: Dict[str, np.ndarray], data_split: DataSplit, loss_trace: pd.DataFrame,
               reps: Optional[Representations] = None, bank: Optional[ContextBank] = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_params(os.path.join(out_dir, C.PARAMS_FILE), params)
    data_split.save(os.path.join(out_dir, C.SPLIT_DIR))
    loss_trace.to_csv(os.path.join(out_dir, C.LOSS_TRACE_FILE), index=False, float_format=C.FLOAT_FORMAT)
    if reps is not None and bank is not None:
        export_embeddings(out_dir, reps, data_split.train, bank)
    logger.info(f"Model checkpoint written to {out_dir}")


def load_model(ckpt_dir: str) -> ModelCheckpoint:
    if not os.path.isdir(ckpt_dir):
        raise CheckpointError(f"Model checkpoint directory not found: {ckpt_dir}")
    require_files(ckpt_dir, (C.PARAMS_FILE, C.SPLIT_DIR, C.HYPERPARAMS_FILE, C.MANIFEST_FILE))
    manifest = read_manifest(ckpt_dir)
    if not manifest.get("pretrain_dir"):
        raise CheckpointError(f"Manifest of {ckpt_dir} does not name its pretraining checkpoint.")
    return ModelCheckpoint(ckpt_dir, load_params(os.path.join(ckpt_dir, C.PARAMS_FILE)), manifest)
