from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cadsi.models.gradcheck import check_gradients
from cadsi.models.hetsg import FusionParams, pairs_for_tables
from cadsi.models.intents import DisentangleConfig
from cadsi.models.model import ASPECT_BANK, USER_ID, ObjectiveConfig, TripleBatch, initialize_params
from cadsi.models.optim import Adam
from cadsi.utils.errors import ConfigError, DimensionError, EvaluationError

OBJECTIVE = ObjectiveConfig(lambda_d=1.0, lambda_theta=1.0, lambda_z=1.0, l2=1e-3, lambda_route=1.0)
GRAD_TOLERANCE = 1e-4


def _skipgram_batch(micro, rows=6, negatives=2):
    rng = np.random.default_rng(9)
    batch = {}
    for name, pairs in sorted(pairs_for_tables(micro["emb"], micro["corpus"], 2).items()):
        if pairs.n_pairs == 0:
            continue
        contexts = pairs.contexts[:rows]
        batch[name] = (pairs.centers[:rows], contexts, pairs.sampler.sample(contexts, negatives, rng))
    return batch


def _assert_small(errors):
    worst = max(errors, key=errors.get)
    assert errors[worst] <= GRAD_TOLERANCE, f"{worst}: {errors[worst]:.3e}"


# --- 梯度校验 ---
def test_bpr_gradients_match_finite_differences(micro):
    errors = check_gradients(micro["model"], micro["params"], micro["batch"], OBJECTIVE)
    assert ASPECT_BANK not in errors
    _assert_small(errors)


def test_joint_gradients_with_skipgram_term(micro):
    skipgram = _skipgram_batch(micro)
    assert skipgram
    errors = check_gradients(micro["model"], micro["params"], micro["batch"], OBJECTIVE, skipgram=skipgram)
    _assert_small(errors)


def test_debias_gradients_with_unfrozen_aspects(micro):
    model = micro["model"]
    model.freeze_aspects = False
    errors = check_gradients(model, micro["params"], micro["batch"], OBJECTIVE, debias=True)
    assert ASPECT_BANK in errors
    _assert_small(errors)


# --- 打分 ---
def test_semantic_scores_match_pair_scores(micro):
    model, params = micro["model"], micro["params"]
    reps = model.representations(params)
    users = np.array([0, 1, 2])
    full = model.score_users(params, reps, users, "semantic")
    n_items = micro["interactions"].n_items
    pairwise = model.pair_scores(reps, np.repeat(users, n_items), np.tile(np.arange(n_items), users.size))
    assert_allclose(full, pairwise.reshape(users.size, n_items))


def test_refined_scores_with_unit_aspects_use_plain_intent(micro):
    model, params = micro["model"], micro["params"]
    params[ASPECT_BANK] = np.ones_like(params[ASPECT_BANK])
    reps = model.representations(params)
    delta = model.predictor.delta
    expected = delta * reps.user_id @ reps.item_id.T + (1.0 - delta) * reps.user_intent @ reps.item_id.T
    assert_allclose(model.score_users(params, reps, np.arange(3), "refined"), expected)


def test_unknown_score_mode_rejected(micro):
    model, params = micro["model"], micro["params"]
    with pytest.raises(EvaluationError):
        model.score_users(params, model.representations(params), np.array([0]), "causal")


# --- 目标函数 ---
def test_bpr_loss_matches_loss_components(micro):
    model, params, batch = micro["model"], micro["params"], micro["batch"]
    components, _, _ = model.loss_and_grad(params, batch, OBJECTIVE)
    assert model.bpr_loss(params, batch, OBJECTIVE.l2) == pytest.approx(components.bpr + components.reg)
    assert components.theta == 0.0
    assert components.route != 0.0
    assert components.total == pytest.approx(components.bpr + components.route + components.reg)


def test_route_term_off_when_weight_is_zero(micro):
    objective = replace(OBJECTIVE, lambda_route=0.0)
    components, grads, _ = micro["model"].loss_and_grad(micro["params"], micro["batch"], objective)
    with_route, route_grads, _ = micro["model"].loss_and_grad(micro["params"], micro["batch"], OBJECTIVE)
    assert components.route == 0.0
    assert components.bpr == pytest.approx(with_route.bpr)
    assert not np.allclose(grads[USER_ID], route_grads[USER_ID])


def test_skipgram_term_is_mean_over_pairs(micro):
    model, params = micro["model"], micro["params"]
    short, long = _skipgram_batch(micro, rows=3), _skipgram_batch(micro, rows=3)
    for name, (centers, contexts, negatives) in short.items():
        long[name] = (np.tile(centers, 4), np.tile(contexts, 4), np.tile(negatives, (4, 1)))
    objective = ObjectiveConfig(lambda_route=0.0)
    first, _, _ = model.loss_and_grad(params, micro["batch"], objective, short)
    second, _, _ = model.loss_and_grad(params, micro["batch"], objective, long)
    assert first.theta > 0.0
    assert second.theta == pytest.approx(first.theta)


def test_bpr_loss_rejects_empty_batch(micro):
    empty = TripleBatch(np.array([], dtype=np.int64), np.array([], dtype=np.int64), np.array([], dtype=np.int64))
    with pytest.raises(ConfigError) as info:
        micro["model"].bpr_loss(micro["params"], empty, 0.0)
    assert info.value.code == "batch_empty"


def test_frozen_aspect_bank_gets_no_gradient(micro):
    model, params = micro["model"], micro["params"]
    _, grads, result = model.loss_and_grad(params, micro["batch"], OBJECTIVE, debias=True)
    assert ASPECT_BANK not in grads
    assert ASPECT_BANK not in model.trainable_names(params)
    assert result.masks.shape == (2 * len(micro["batch"]), 1)


def test_objective_weights_must_be_non_negative():
    with pytest.raises(ConfigError):
        ObjectiveConfig(lambda_d=-1.0)


def test_initialize_params_checks_width(micro, toy_hin):
    fusion = FusionParams.near_identity(toy_hin.schema.type_names, 8, seed=1)
    with pytest.raises(DimensionError):
        initialize_params(micro["interactions"], micro["emb"], fusion, micro["bank"], DisentangleConfig(k=2, dim=4), seed=0)


def test_initialize_params_is_seeded(micro, toy_hin):
    fusion = FusionParams.near_identity(toy_hin.schema.type_names, 8, seed=1)
    args = (micro["interactions"], micro["emb"], fusion, micro["bank"], micro["cfg"])
    first, second = initialize_params(*args, seed=5), initialize_params(*args, seed=5)
    assert sorted(first) == sorted(second)
    for name in first:
        assert_allclose(first[name], second[name])
    assert_allclose(first[ASPECT_BANK], micro["bank"].aspects)


# --- 优化器 ---
def test_adam_first_step_follows_gradient_sign():
    params = {"w": np.array([1.0, 1.0, 1.0]), "frozen": np.array([2.0])}
    grads = {"w": np.array([0.5, -3.0, 0.0]), "frozen": np.array([1.0])}
    Adam(0.1, frozen=["frozen"]).step(params, grads)
    assert_allclose(params["w"], [0.9, 1.1, 1.0], atol=1e-6)
    assert_allclose(params["frozen"], [2.0])


def test_adam_with_zero_learning_rate_keeps_params():
    params = {"w": np.array([1.0, -1.0])}
    Adam(0.0).step(params, {"w": np.array([1.0, 1.0])})
    assert_allclose(params["w"], [1.0, -1.0])
