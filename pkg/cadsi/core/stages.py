# cadsi/core/stages.py
"""
流水线阶段
synth → pretrain → train → intervene → eval，另有 recommend / explain / ablate。
每个阶段读前一阶段的检查点目录，写出自己的目录与清单。

模块级函数 (run_pretrain、new_session、train_session ...) 是阶段的实际实现，
消融扫描与测试直接调用它们，不经过 CLI。
"""
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from cadsi.core.checkpoint import (ModelCheckpoint, PretrainArtifacts, load_model, load_pretrain, read_manifest,
                                   save_model, save_pretrain, write_manifest)
from cadsi.core.config_loader import RunConfig
from cadsi.core.stage_manager import BaseStage
from cadsi.data.synth import GroundTruth, SynthResult, generate
from cadsi.evaluation.ablation import AblationTable, ablation_sweep
from cadsi.evaluation.metrics import MetricReport, evaluate, rank_items
from cadsi.evaluation.split import DataSplit, split
from cadsi.graph.hin import Hin, aspect_start_paths, load_hin_dir, load_metapaths
from cadsi.graph.walks import generate_corpus
from cadsi.models.hetsg import FusionParams, fuse_embeddings, pairs_for_tables, train_skipgram
from cadsi.models.model import CadsiModel, Representations, build_model, initialize_params
from cadsi.systems.training_system import InterventionResult, TrainingSystem, TrainResult
from cadsi.utils import constants as C
from cadsi.utils.errors import CheckpointError, EvaluationError
from cadsi.utils.logger import logger

# 决定参数形状的键，恢复检查点时总以检查点里的值为准
STRUCTURAL_KEYS = ("dim", "intents.k", "intents.layers")


# ---------------------------------------------------------------------------
# 预训练
# ---------------------------------------------------------------------------
def run_pretrain(config: RunConfig, data_dir: str) -> Tuple[PretrainArtifacts, Hin]:
    """游走 → 每条元路径的 skip-gram → 融合得到 ContextBank。"""
    hin = load_hin_dir(data_dir, core_filter=config["data.core_filter"],
                       min_interactions=config["data.min_interactions"], min_friends=config["data.min_friends"])
    metapath_file = os.path.join(data_dir, C.METAPATH_FILE)
    if not os.path.exists(metapath_file):
        raise CheckpointError(f"Data directory {data_dir} has no {C.METAPATH_FILE}.")
    meta_paths = load_metapaths(metapath_file)
    meta_paths = meta_paths + aspect_start_paths(meta_paths, hin.schema)
    corpus = generate_corpus(hin, meta_paths, config.walk_config())
    embeddings = train_skipgram(corpus, config.skipgram_config())
    fusion = FusionParams.near_identity(hin.schema.type_names, config["dim"], config["seed"])
    bank = fuse_embeddings(hin, embeddings, fusion)
    return PretrainArtifacts(meta_paths, corpus, embeddings, fusion, bank, hin.interaction_matrix()), hin


# ---------------------------------------------------------------------------
# 模型会话
# ---------------------------------------------------------------------------
@dataclass
class ModelSession:
    """一个可训练/可评估的模型: 配置、预训练产物、数据划分、模型与参数。"""
    config: RunConfig
    pre: PretrainArtifacts
    data_split: DataSplit
    model: CadsiModel
    params: Dict[str, np.ndarray]
    score_mode: str = "semantic"
    pretrain_dir: str = ""
    data_dir: str = ""

    def representations(self) -> Representations:
        return self.model.representations(self.params)

    def scores(self, users: np.ndarray, reps: Optional[Representations] = None) -> np.ndarray:
        reps = reps if reps is not None else self.representations()
        return self.model.score_users(self.params, reps, users, self.score_mode)


def new_session(config: RunConfig, pre: PretrainArtifacts, pretrain_dir: str = "", data_dir: str = "") -> ModelSession:
    data_split = split(pre.interactions, config.split_config())
    model = build_model(data_split.train, pre.embeddings, pre.bank, config.disentangle_config(),
                        config.predictor_params(), freeze_aspects=not config["intervention.unfreeze_aspects"])
    params = initialize_params(data_split.train, pre.embeddings, pre.fusion, pre.bank, config.disentangle_config(),
                               config["seed"])
    return ModelSession(config, pre, data_split, model, params, "semantic", pretrain_dir, data_dir)


def restore_session(config: RunConfig, ckpt: ModelCheckpoint) -> ModelSession:
    saved = RunConfig.load(base=ckpt.hyperparameters)
    pinned = {key: saved[key] for key in STRUCTURAL_KEYS if config[key] != saved[key]}
    if pinned:
        logger.warning(f"Keeping checkpoint values for {sorted(pinned)}; they fix the parameter shapes.")
        config = config.with_overrides(pinned)
    pre = load_pretrain(ckpt.pretrain_dir)
    data_split = ckpt.load_split(pre.interactions)
    model = build_model(data_split.train, pre.embeddings, pre.bank, config.disentangle_config(),
                        config.predictor_params(), freeze_aspects=not config["intervention.unfreeze_aspects"])
    return ModelSession(config, pre, data_split, model, ckpt.params, ckpt.score_mode, ckpt.pretrain_dir, ckpt.data_dir)


def training_system(session: ModelSession, dump_dir: Optional[str] = None) -> TrainingSystem:
    config = session.config
    pairs = pairs_for_tables(session.pre.embeddings, session.pre.corpus, config["skipgram.window"])
    return TrainingSystem(session.model, session.params, session.data_split.train, session.data_split.validation,
                          config.objective_config(), config.train_config(), pairs, dump_dir)


def train_session(session: ModelSession, system: TrainingSystem) -> TrainResult:
    result = system.train()
    session.params = result.params
    session.score_mode = "semantic"
    return result


def intervene_session(session: ModelSession, system: TrainingSystem) -> Optional[InterventionResult]:
    """iterations_n = 0 时不做干预，模型保持语义打分。"""
    if session.config["intervention.iterations_n"] == 0:
        logger.warning("intervention.iterations_n=0; skipping the intervention stage.")
        return None
    result = system.intervene(session.config.intervention_config())
    session.params = result.params
    session.score_mode = "refined"
    return result


def save_session(session: ModelSession, out_dir: str, trace: pd.DataFrame, command: str,
                 intervention: Optional[InterventionResult] = None) -> None:
    save_model(out_dir, session.params, session.data_split, trace, session.representations(), session.pre.bank)
    if intervention is not None:
        intervention.intervention_trace.to_csv(os.path.join(out_dir, C.INTERVENTION_TRACE_FILE), index=False,
                                               float_format=C.FLOAT_FORMAT)
        intervention.curve.to_csv(os.path.join(out_dir, C.INTERVENTION_CURVE_FILE), index=False,
                                  float_format=C.FLOAT_FORMAT)
    session.config.save(os.path.join(out_dir, C.HYPERPARAMS_FILE))
    write_manifest(out_dir, command, session.config.snapshot(), [session.pretrain_dir], {
        "data_dir": session.data_dir,
        "pretrain_dir": session.pretrain_dir,
        "score_mode": session.score_mode,
    })


def minority_filter(session: ModelSession) -> Optional[np.ndarray]:
    truth_file = os.path.join(session.data_dir, C.GROUND_TRUTH_FILE) if session.data_dir else ""
    if not truth_file or not os.path.exists(truth_file):
        return None
    return GroundTruth.load(truth_file).minority_mask(session.data_split.train.items)


def evaluate_session(session: ModelSession, ks: Optional[Sequence[int]] = None,
                     item_filter: Optional[np.ndarray] = None, keep_per_user: bool = False) -> MetricReport:
    reps = session.representations()
    ks = tuple(ks) if ks is not None else session.config["eval.ks"]
    return evaluate(lambda users: session.scores(users, reps), session.data_split.train, session.data_split.test, ks,
                    item_filter=item_filter, keep_per_user=keep_per_user)


def recommend(session: ModelSession, user: str, top: int) -> pd.DataFrame:
    """返回 user 的前 top 个非训练物品 (rank,item,score)。"""
    train = session.data_split.train
    if user not in train.user_index:
        raise EvaluationError(f"Unknown user '{user}'.", code="missing_node")
    if top < 1:
        raise EvaluationError(f"--top must be >= 1, got {top}.")
    u = train.user_index[user]
    scores = session.scores(np.array([u]))[0]
    ranked = rank_items(scores, train.items_of(u))[:top]
    if np.isin(ranked, train.items_of(u)).any():
        raise EvaluationError(f"Training items of user {user} leaked into the recommendation.",
                              code="evaluation_leakage")
    return pd.DataFrame({
        "rank": np.arange(1, ranked.shape[0] + 1),
        "item": [train.items[i] for i in ranked],
        "score": scores[ranked],
    })


def explain(session: ModelSession, user: str) -> pd.DataFrame:
    """用户每个训练物品的第一层归一化意图权重，以及权重最大的意图。"""
    train = session.data_split.train
    if user not in train.user_index:
        raise EvaluationError(f"Unknown user '{user}'.", code="missing_node")
    readout = session.representations().intents.routing_readout()
    rows = np.flatnonzero(train.pairs[:, 0] == train.user_index[user])
    frame = pd.DataFrame(readout[rows], columns=[f"intent_{t}" for t in range(readout.shape[1])])
    frame.insert(0, "item", [train.items[i] for i in train.pairs[rows, 1]])
    frame["argmax"] = readout[rows].argmax(axis=1)
    return frame


# ---------------------------------------------------------------------------
# 阶段
# ---------------------------------------------------------------------------
class PipelineStage(BaseStage):
    """带配置解析的阶段基类；配置来源由引擎放在 manager.context 里。"""

    def resolve_config(self, base: Optional[str] = None) -> RunConfig:
        context = self.manager.context
        return RunConfig.load(context.get("config_path"), context.get("overrides", ()), base=base)

    def restore(self, ckpt_dir: str) -> ModelSession:
        ckpt = load_model(ckpt_dir)
        return restore_session(self.resolve_config(base=ckpt.hyperparameters), ckpt)


class SynthStage(PipelineStage):
    name = "synth"

    def run(self, out_dir: str) -> SynthResult:
        config = self.resolve_config()
        result = generate(config.synth_config(), out_dir)
        config.save(os.path.join(out_dir, C.HYPERPARAMS_FILE))
        write_manifest(out_dir, self.name, config.snapshot(), [], {"preset": config["synth.preset"]})
        return result


class PretrainStage(PipelineStage):
    name = "pretrain"

    def run(self, data_dir: str, out_dir: str) -> PretrainArtifacts:
        config = self.resolve_config()
        artifacts, hin = run_pretrain(config, data_dir)
        save_pretrain(out_dir, artifacts, hin)
        config.save(os.path.join(out_dir, C.HYPERPARAMS_FILE))
        write_manifest(out_dir, self.name, config.snapshot(), [data_dir], {
            "data_dir": data_dir,
            "user_type": hin.schema.user_type,
            "item_type": hin.schema.item_type,
        })
        return artifacts


class TrainStage(PipelineStage):
    """第二阶段；joint=True 时在同一次运行里接着做第三阶段。"""
    name = "train"

    def run(self, pretrain_dir: str, out_dir: str, joint: bool = False) -> ModelSession:
        config = self.resolve_config()
        pre = load_pretrain(pretrain_dir)
        data_dir = read_manifest(pretrain_dir).get("data_dir", "")
        session = new_session(config, pre, pretrain_dir, data_dir)
        system = training_system(session, out_dir)
        train_session(session, system)
        intervention = intervene_session(session, system) if joint else None
        save_session(session, out_dir, system.trace.to_frame(), "train --joint" if joint else self.name, intervention)
        return session


class InterveneStage(PipelineStage):
    name = "intervene"

    def run(self, train_dir: str, out_dir: str) -> ModelSession:
        session = self.restore(train_dir)
        if session.score_mode == "refined":
            logger.warning(f"Checkpoint {train_dir} was already fine-tuned by intervention; continuing from it.")
        system = training_system(session, out_dir)
        result = intervene_session(session, system)
        save_session(session, out_dir, system.trace.to_frame(), self.name, result)
        return session


class EvalStage(PipelineStage):
    name = "eval"

    def run(self, ckpt_dir: str, out_dir: Optional[str] = None) -> Tuple[MetricReport, Optional[MetricReport]]:
        session = self.restore(ckpt_dir)
        out_dir = out_dir or ckpt_dir
        os.makedirs(out_dir, exist_ok=True)
        report = evaluate_session(session)
        report.save(os.path.join(out_dir, C.METRICS_FILE))
        minority = None
        mask = minority_filter(session)
        if mask is not None:
            logger.info(f"Evaluating on {int(mask.sum())} minority-attribute item(s).")
            minority = evaluate_session(session, item_filter=mask)
            minority.save(os.path.join(out_dir, C.MINORITY_METRICS_FILE))
        write_manifest(out_dir, self.name, session.config.snapshot(), [ckpt_dir],
                       {"checkpoint": ckpt_dir, "score_mode": session.score_mode}, name=f"manifest_{self.name}.txt")
        return report, minority


class RecommendStage(PipelineStage):
    name = "recommend"

    def run(self, ckpt_dir: str, user: str, top: int = 10) -> pd.DataFrame:
        return recommend(self.restore(ckpt_dir), user, top)


class ExplainStage(PipelineStage):
    name = "explain"

    def run(self, ckpt_dir: str, user: str, out_dir: Optional[str] = None) -> pd.DataFrame:
        frame = explain(self.restore(ckpt_dir), user)
        out_dir = out_dir or ckpt_dir
        os.makedirs(out_dir, exist_ok=True)
        frame.to_csv(os.path.join(out_dir, f"explain_{user}.csv"), index=False, float_format=C.FLOAT_FORMAT)
        return frame


class AblateStage(PipelineStage):
    """对每个取值在 out_dir/<axis>=<value>/ 下训练 (+干预) 并在测试集上评估。"""
    name = "ablate"

    def run(self, pretrain_dir: str, out_dir: str, axis: str, values: List[int]) -> AblationTable:
        base = self.resolve_config()
        pre = load_pretrain(pretrain_dir)
        data_dir = read_manifest(pretrain_dir).get("data_dir", "")

        def runner(config: RunConfig, label: str) -> MetricReport:
            run_dir = os.path.join(out_dir, label)
            session = new_session(config, pre, pretrain_dir, data_dir)
            system = training_system(session, run_dir)
            train_session(session, system)
            intervention = intervene_session(session, system)
            save_session(session, run_dir, system.trace.to_frame(), f"{self.name} {label}", intervention)
            report = evaluate_session(session)
            report.save(os.path.join(run_dir, C.METRICS_FILE))
            return report

        table = ablation_sweep(axis, values, base, runner)
        table.save(os.path.join(out_dir, C.ABLATION_FILE))
        write_manifest(out_dir, self.name, base.snapshot(), [pretrain_dir],
                       {"axis": axis, "values": ",".join(str(v) for v in values)})
        return table


ALL_STAGES = (SynthStage, PretrainStage, TrainStage, InterveneStage, EvalStage, RecommendStage, ExplainStage,
              AblateStage)
