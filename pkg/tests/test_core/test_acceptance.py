"""
默认规模下的方向性复现 (pytest -m slow)。每项取 5 个种子的中位数。
"""
from itertools import permutations

import numpy as np
import pytest

from cadsi.core.engine import PipelineEngine

SEEDS = range(5)


def _pretrained(tmp_path, overrides):
    engine = PipelineEngine(None, overrides)
    data, pre = str(tmp_path / "data"), str(tmp_path / "pre")
    synth = engine.run("synth", out_dir=data)
    engine.run("pretrain", data_dir=data, out_dir=pre)
    return engine, synth, pre


def _best_permutation_accuracy(predicted: np.ndarray, labels: np.ndarray, k: int) -> float:
    return max(float((np.asarray(perm)[predicted] == labels).mean()) for perm in permutations(range(k)))


def _routing_accuracy_for(tmp_path, seed: int) -> float:
    overrides = [f"seed={seed}", "synth.true_intents=2", "synth.confound_strength=0", "intents.k=2"]
    engine, synth, pre = _pretrained(tmp_path, overrides)
    session = engine.run("train", pretrain_dir=pre, out_dir=str(tmp_path / "train"))
    train = session.data_split.train
    predicted = session.representations().intents.routing_readout().argmax(axis=1)
    labels = np.array([synth.truth.user_intent[train.users[u]] for u in train.pairs[:, 0]])
    return _best_permutation_accuracy(predicted, labels, 2)


def _minority_recall_gain(tmp_path, seed: int) -> float:
    engine, _, pre = _pretrained(tmp_path, [f"seed={seed}", "eval.ks=20"])
    train_dir, int_dir = str(tmp_path / "train"), str(tmp_path / "int")
    engine.run("train", pretrain_dir=pre, out_dir=train_dir)
    engine.run("intervene", train_dir=train_dir, out_dir=int_dir)
    _, before = engine.run("eval", ckpt_dir=train_dir, out_dir=str(tmp_path / "eval_n0"))
    _, after = engine.run("eval", ckpt_dir=int_dir, out_dir=str(tmp_path / "eval_n140"))
    return after.recall[20] / before.recall[20]


def test_permutation_accuracy_picks_best_relabeling():
    predicted = np.array([1, 1, 0, 0, 1])
    labels = np.array([0, 0, 1, 1, 1])
    assert _best_permutation_accuracy(predicted, labels, 2) == pytest.approx(0.8)


@pytest.mark.slow
def test_routing_recovers_planted_intents(tmp_path):
    """两个真实意图、无混杂、k=2 时，逐边路由 argmax 与真值的一致率中位数不低于 0.8。"""
    accuracies = [_routing_accuracy_for(tmp_path / f"seed{seed}", seed) for seed in SEEDS]
    assert np.median(accuracies) >= 0.8, accuracies


@pytest.mark.slow
def test_intervention_lifts_minority_recall(tmp_path):
    """默认混杂配置下，140 轮干预后少数属性物品的 Recall@20 相对未干预至少提升 3%。"""
    gains = [_minority_recall_gain(tmp_path / f"seed{seed}", seed) for seed in SEEDS]
    assert np.median(gains) >= 1.03, gains
