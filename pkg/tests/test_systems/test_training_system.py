import os

import numpy as np
import pytest

from cadsi.graph.hin import InteractionMatrix
from cadsi.models.hetsg import pairs_for_tables
from cadsi.models.intervention import InterventionConfig
from cadsi.models.model import ASPECT_BANK, TARGET_PREFIX, ObjectiveConfig
from cadsi.systems.trace_system import LossComponent
from cadsi.systems.training_system import TrainConfig, TrainingSystem
from cadsi.utils import constants as C
from cadsi.utils.errors import ConfigError, TrainingDivergedError


def _system(micro, tmp_path=None, **overrides):
    train = micro["interactions"]
    validation = InteractionMatrix(train.users, train.items, np.array([[0, 3], [1, 0]]))
    settings = dict(lr=0.01, batch_size=4, max_epochs=2, eval_every=1, patience=5, early_stop_k=2,
                    skipgram_pairs_per_step=4, skipgram_negatives=2, seed=3)
    settings.update(overrides)
    return TrainingSystem(micro["model"], micro["params"], train, validation, ObjectiveConfig(),
                          TrainConfig(**settings), pairs_for_tables(micro["emb"], micro["corpus"], 2),
                          str(tmp_path) if tmp_path else None)


def test_sampled_negatives_are_unobserved(micro):
    system = _system(micro)
    csr = micro["interactions"].to_csr()
    batches = system.sample_batches(np.random.default_rng(0))
    assert [len(batch) for batch in batches] == [4, 3]
    users = np.concatenate([b.users for b in batches])
    pos = np.concatenate([b.pos for b in batches])
    neg = np.concatenate([b.neg for b in batches])
    assert (np.asarray(csr[users, neg]).ravel() == 0).all()
    assert sorted(zip(users.tolist(), pos.tolist())) == sorted(map(tuple, micro["interactions"].pairs.tolist()))


def _dense_system(micro, pairs):
    base = micro["interactions"]
    train = InteractionMatrix(base.users, base.items, np.array(pairs))
    validation = train.with_pairs(np.array([[2, 3]]))
    return TrainingSystem(micro["model"], micro["params"], train, validation, ObjectiveConfig(),
                          TrainConfig(batch_size=8, seed=3))


def test_user_with_every_item_gets_no_triples(micro):
    # u0 交互过全部 4 个物品
    system = _dense_system(micro, [[0, 0], [0, 1], [0, 2], [0, 3], [1, 1], [1, 2], [2, 0]])
    batches = system.sample_batches(np.random.default_rng(0))
    users = np.concatenate([b.users for b in batches])
    neg = np.concatenate([b.neg for b in batches])
    assert sorted(users.tolist()) == [1, 1, 2]
    assert (np.asarray(system.train_set.to_csr()[users, neg]).ravel() == 0).all()


def test_single_unobserved_item_is_always_the_negative(micro):
    system = _dense_system(micro, [[0, 0], [0, 1], [0, 2], [1, 3]])
    for seed in range(5):
        batches = system.sample_batches(np.random.default_rng(seed))
        users = np.concatenate([b.users for b in batches])
        neg = np.concatenate([b.neg for b in batches])
        assert neg[users == 0].tolist() == [3, 3, 3]


def test_every_user_saturated_gives_no_batches(micro):
    base = micro["interactions"]
    pairs = [[u, i] for u in range(base.n_users) for i in range(base.n_items)]
    assert _dense_system(micro, pairs).sample_batches(np.random.default_rng(0)) == []


def test_skipgram_batch_respects_pair_budget(micro):
    batch = _system(micro).sample_skipgram(np.random.default_rng(0))
    assert batch
    for centers, contexts, negatives in batch.values():
        assert centers.shape == contexts.shape == (4,)
        assert negatives.shape == (4, 2)


def test_train_records_every_epoch(micro):
    result = _system(micro).train()
    assert result.epochs_run == 2
    assert 1 <= result.best_epoch <= 2
    assert len(result.trace.values(LossComponent.BPR)) == 2
    assert result.trace.values(LossComponent.DEBIAS) == []
    assert np.isfinite(result.trace.values(LossComponent.TOTAL)).all()


def test_train_keeps_aspect_bank_frozen(micro):
    bank = micro["params"][ASPECT_BANK].copy()
    _system(micro).train()
    np.testing.assert_array_equal(micro["params"][ASPECT_BANK], bank)


def test_intervention_continues_epoch_numbering(micro):
    system = _system(micro)
    system.train()
    result = system.intervene(InterventionConfig(iterations_n=2, eval_every=1))
    assert result.trace.last_epoch == 4
    assert len(result.trace.values(LossComponent.DEBIAS)) == 2
    frame = result.intervention_trace
    assert list(frame.columns) == ["iteration", "aspect", "included_fraction", "mean_effect", "L_d"]
    assert list(frame["iteration"]) == [1, 2]
    assert set(frame["aspect"]) == {"A"}
    assert frame["included_fraction"].between(0.0, 1.0).all()
    assert list(result.curve.columns) == ["iteration", "recall@2", "ndcg@2"]
    assert len(result.curve) == 2


def test_unfrozen_intervention_updates_aspect_bank(micro):
    bank = micro["params"][ASPECT_BANK].copy()
    system = _system(micro)
    system.intervene(InterventionConfig(iterations_n=1, unfreeze_aspects=True))
    assert not system.model.freeze_aspects
    assert not np.allclose(micro["params"][ASPECT_BANK], bank)


def test_divergence_dumps_state(micro, tmp_path):
    micro["params"][TARGET_PREFIX + "UMU"][:] = np.nan
    system = _system(micro, tmp_path, skipgram_pairs_per_step=0)
    with pytest.raises(TrainingDivergedError) as info:
        system.train()
    assert info.value.dump_path == os.path.join(str(tmp_path), C.DIVERGED_STATE_FILE)
    assert os.path.exists(info.value.dump_path)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(patience=0)
    with pytest.raises(ConfigError):
        TrainConfig(skipgram_negatives=0)
