# cadsi/systems/training_system.py
"""
训练系统 (TrainingSystem)

第二阶段: 以 λ_z L_BPR + λ_θ L_θ + ℛ(Ω) 训练，按验证集 Recall@K 早停。
第三阶段: 以完整目标 (含 λ_d L_d) 做 iterations_n 轮干预微调，
记录每个方面的纳入比例、平均效应与验证曲线。
"""
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from cadsi.evaluation.metrics import evaluate
from cadsi.graph.hin import InteractionMatrix
from cadsi.models.hetsg import SkipGramPairs
from cadsi.models.intervention import InterventionConfig, intervention_summary
from cadsi.models.model import ASPECT_BANK, CadsiModel, LossComponents, ObjectiveConfig, SkipGramBatch, TripleBatch
from cadsi.models.optim import Adam
from cadsi.systems.epoch_system import EpochSystem
from cadsi.systems.trace_system import LossComponent, TraceSystem
from cadsi.utils import constants as C
from cadsi.utils.errors import ConfigError
from cadsi.utils.helpers import stream_rng
from cadsi.utils.logger import logger

MAX_RESAMPLE_ROUNDS = 8


@dataclass(frozen=True)
class TrainConfig:
    lr: float = C.DEFAULT_LR
    batch_size: int = C.DEFAULT_BATCH_SIZE
    max_epochs: int = C.DEFAULT_MAX_EPOCHS
    eval_every: int = C.DEFAULT_EVAL_EVERY
    patience: int = C.DEFAULT_PATIENCE
    skipgram_pairs_per_step: int = C.DEFAULT_SKIPGRAM_PAIRS_PER_STEP
    skipgram_negatives: int = C.DEFAULT_NEGATIVES
    early_stop_k: int = C.DEFAULT_EARLY_STOP_K
    seed: int = C.DEFAULT_SEED

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.max_epochs < 0:
            raise ConfigError("train.lr >= 0, train.batch_size >= 1 and train.max_epochs >= 0 are required.")
        if self.eval_every < 1 or self.patience < 1 or self.early_stop_k < 1:
            raise ConfigError("train.eval_every, train.patience and train.early_stop_k must be >= 1.")
        if self.skipgram_pairs_per_step < 0 or self.skipgram_negatives < 1:
            raise ConfigError("train.skipgram_pairs_per_step >= 0 and train.skipgram_negatives >= 1 are required.")


@dataclass
class TrainResult:
    params: Dict[str, np.ndarray]
    trace: TraceSystem
    epochs_run: int
    best_epoch: int
    best_metric: float
    stop_reason: str


@dataclass
class InterventionResult:
    params: Dict[str, np.ndarray]
    trace: TraceSystem
    intervention_trace: pd.DataFrame
    curve: pd.DataFrame = field(default_factory=pd.DataFrame)


def copy_params(params: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {name: value.copy() for name, value in params.items()}


class TrainingSystem:
    """
    持有参数、优化器与轨迹，驱动两个训练阶段。
    """

    def __init__(self, model: CadsiModel, params: Dict[str, np.ndarray], train: InteractionMatrix,
                 validation: InteractionMatrix, objective: ObjectiveConfig, cfg: TrainConfig,
                 skipgram_pairs: Optional[Dict[str, SkipGramPairs]] = None, dump_dir: Optional[str] = None):
        self.model = model
        self.params = params
        self.train_set = train
        self.validation = validation
        self.objective = objective
        self.cfg = cfg
        self.skipgram_pairs = skipgram_pairs or {}
        self.dump_dir = dump_dir
        self.trace = TraceSystem()
        self._train_csr = train.to_csr()
        self._saturated = train.user_degrees() >= train.n_items
        if self._saturated.any():
            logger.warning(f"{int(self._saturated.sum())} training user(s) interacted with every item; "
                           f"they get no BPR triples.")
        logger.info(f"TrainingSystem initialized: {train.n_interactions} training interactions, "
                    f"{len(self.skipgram_pairs)} skip-gram path(s), objective {objective}.")

    # --- 采样 ---
    def sample_batches(self, rng: np.random.Generator) -> List[TripleBatch]:
        """每个观测交互配一个均匀采样的未观测物品；交互过全部物品的用户不参与。"""
        pairs = self.train_set.pairs[rng.permutation(self.train_set.n_interactions)]
        pairs = pairs[~self._saturated[pairs[:, 0]]]
        if pairs.shape[0] == 0:
            return []
        users, pos = pairs[:, 0], pairs[:, 1]
        n_items = self.train_set.n_items
        neg = rng.integers(n_items, size=users.shape[0])
        clash = np.asarray(self._train_csr[users, neg]).ravel() > 0
        for _ in range(MAX_RESAMPLE_ROUNDS):
            if not clash.any():
                break
            neg[clash] = rng.integers(n_items, size=int(clash.sum()))
            clash = np.asarray(self._train_csr[users, neg]).ravel() > 0
        # 剩下的直接从补集里取
        for row in np.flatnonzero(clash):
            complement = np.setdiff1d(np.arange(n_items), self.train_set.items_of(int(users[row])))
            neg[row] = complement[rng.integers(complement.size)]
        size = self.cfg.batch_size
        return [TripleBatch(users[s:s + size], pos[s:s + size], neg[s:s + size]) for s in range(0, users.shape[0], size)]

    def sample_skipgram(self, rng: np.random.Generator) -> Optional[SkipGramBatch]:
        if self.objective.lambda_theta == 0 or self.cfg.skipgram_pairs_per_step == 0 or not self.skipgram_pairs:
            return None
        batch: SkipGramBatch = {}
        for name in sorted(self.skipgram_pairs):
            pairs = self.skipgram_pairs[name]
            if pairs.n_pairs == 0:
                continue
            pick = rng.integers(pairs.n_pairs, size=self.cfg.skipgram_pairs_per_step)
            contexts = pairs.contexts[pick]
            batch[name] = (pairs.centers[pick], contexts, pairs.sampler.sample(contexts, self.cfg.skipgram_negatives, rng))
        return batch

    # --- 诊断 ---
    def _dump(self) -> Optional[str]:
        if self.dump_dir is None:
            return None
        os.makedirs(self.dump_dir, exist_ok=True)
        path = os.path.join(self.dump_dir, C.DIVERGED_STATE_FILE)
        np.savez(path, **self.params)
        logger.error(f"Diverged training state written to {path}")
        return path

    def validate(self, mode: str, K: int) -> tuple:
        reps = self.model.representations(self.params)
        report = evaluate(lambda users: self.model.score_users(self.params, reps, users, mode),
                          self.train_set, self.validation, (K,))
        return report.recall[K], report.ndcg[K], report.n_users[K]

    # --- 一轮 ---
    def _run_epoch(self, optimizer: Adam, rng: np.random.Generator, debias: bool, epoch: int,
                   aspect_stats: Optional[Dict[str, List[tuple]]] = None) -> LossComponents:
        totals = LossComponents()
        for batch in self.sample_batches(rng):
            components, grads, result = self.model.loss_and_grad(
                self.params, batch, self.objective, self.sample_skipgram(rng), debias
            )
            optimizer.step(self.params, grads)
            totals.bpr += components.bpr
            totals.theta += components.theta
            totals.debias += components.debias
            totals.reg += components.reg
            totals.route += components.route
            totals.total += components.total
            if aspect_stats is not None and result is not None:
                for name, stats in intervention_summary(self.model.aspect_names, result).items():
                    aspect_stats.setdefault(name, []).append(stats)
        values = {LossComponent.BPR: totals.bpr, LossComponent.THETA: totals.theta, LossComponent.REG: totals.reg,
                  LossComponent.ROUTE: totals.route, LossComponent.TOTAL: totals.total}
        if debias:
            values[LossComponent.DEBIAS] = totals.debias
        self.trace.record(epoch, values, self._dump)
        return totals

    # --- 第二阶段 ---
    def train(self) -> TrainResult:
        cfg = self.cfg
        optimizer = Adam(cfg.lr, frozen=[ASPECT_BANK] if self.model.freeze_aspects else [])
        epochs = EpochSystem(cfg.max_epochs)
        state = {"best": -np.inf, "best_epoch": 0, "since": 0, "params": copy_params(self.params)}
        can_validate = self.validation.n_interactions > 0
        if not can_validate:
            logger.warning("Validation set is empty; early stopping disabled.")

        def check_early_stop():
            if not can_validate or epochs.current_epoch % cfg.eval_every != 0:
                return
            recall, ndcg, _ = self.validate("semantic", cfg.early_stop_k)
            logger.info(f"Epoch {epochs.current_epoch}: validation R@{cfg.early_stop_k}={recall:.4f} "
                        f"N@{cfg.early_stop_k}={ndcg:.4f} | {self.trace.summary()}")
            if recall > state["best"]:
                state.update(best=recall, best_epoch=epochs.current_epoch, since=0, params=copy_params(self.params))
            else:
                state["since"] += 1
                if state["since"] >= cfg.patience:
                    epochs.request_stop(f"no improvement in {cfg.patience} evaluation(s)")

        epochs.register_on_epoch_end_callback(check_early_stop)
        while not epochs.finished:
            epochs.begin_epoch()
            rng = stream_rng(cfg.seed, 7, epochs.current_epoch)
            self._run_epoch(optimizer, rng, debias=False, epoch=epochs.current_epoch + 1)
            epochs.advance_epoch()

        if can_validate and state["best_epoch"] > 0:
            self.params.update(copy_params(state["params"]))
        best = float(state["best"]) if np.isfinite(state["best"]) else float("nan")
        logger.info(f"Training stopped after {epochs.current_epoch} epoch(s) ({epochs.stop_reason}); "
                    f"best validation R@{cfg.early_stop_k}={best:.4f} at epoch {state['best_epoch']}.")
        return TrainResult(self.params, self.trace, epochs.current_epoch, state["best_epoch"], best, epochs.stop_reason)

    # --- 第三阶段 ---
    def intervene(self, icfg: InterventionConfig) -> InterventionResult:
        self.model.freeze_aspects = not icfg.unfreeze_aspects
        optimizer = Adam(self.cfg.lr, frozen=[] if icfg.unfreeze_aspects else [ASPECT_BANK])
        epochs = EpochSystem(icfg.iterations_n)
        rows: List[tuple] = []
        curve: List[tuple] = []
        K = self.cfg.early_stop_k
        offset = self.trace.last_epoch  # 联合模式下接在第二阶段的轮次之后

        def record_curve():
            if self.validation.n_interactions and epochs.current_epoch % icfg.eval_every == 0:
                recall, ndcg, _ = self.validate("refined", K)
                curve.append((epochs.current_epoch, recall, ndcg))

        epochs.register_on_epoch_end_callback(record_curve)
        while not epochs.finished:
            epochs.begin_epoch()
            iteration = epochs.current_epoch + 1
            stats: Dict[str, List[tuple]] = {}
            totals = self._run_epoch(optimizer, stream_rng(self.cfg.seed, 8, iteration), True, offset + iteration, stats)
            for name in self.model.aspect_names:
                values = np.array(stats.get(name, [(0.0, 0.0)]))
                rows.append((iteration, name, float(values[:, 0].mean()), float(values[:, 1].mean()), totals.debias))
            logger.info(f"Intervention iteration {iteration}/{icfg.iterations_n}: L_d={totals.debias:.6f}")
            epochs.advance_epoch()

        trace_frame = pd.DataFrame(rows, columns=["iteration", "aspect", "included_fraction", "mean_effect", "L_d"])
        curve_frame = pd.DataFrame(curve, columns=["iteration", f"recall@{K}", f"ndcg@{K}"])
        return InterventionResult(self.params, self.trace, trace_frame, curve_frame)
