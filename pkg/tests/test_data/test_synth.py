import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cadsi.data.synth import (DRIVER_CONFOUNDER, DRIVER_INTENT, GroundTruth, SynthConfig, generate, preset,
                              read_truth_sections, zipf_weights)
from cadsi.graph.hin import load_hin_dir, load_metapaths
from cadsi.utils import constants as C
from cadsi.utils.errors import HinError, SynthConfigError


def small_config(**overrides) -> SynthConfig:
    settings = dict(n_users=30, n_items=100, true_intents=2, interactions_per_user=5, seed=7)
    settings.update(overrides)
    return SynthConfig(**settings)


def test_missing_attribute_counts_are_exact():
    result = generate(small_config())
    missing = {aspect.aspect_type: aspect.missing_items for aspect in result.report.aspects}
    assert missing == {"A": 10, "D": 20, "G": 5}
    assert result.report.most_missing == "D"


def test_every_user_gets_distinct_interactions():
    result = generate(small_config())
    interactions = result.hin.interaction_matrix()
    assert interactions.n_interactions == 30 * 5
    assert (interactions.user_degrees() == 5).all()
    assert len(result.truth.drivers) == 30 * 5


def test_generation_is_deterministic():
    first, second = generate(small_config()), generate(small_config())
    assert first.hin.edges == second.hin.edges
    assert first.truth.drivers == second.truth.drivers
    assert generate(small_config(seed=8)).hin.edges != first.hin.edges


def test_unconfounded_interactions_follow_intent():
    result = generate(small_config(confound_strength=0.0))
    truth = result.truth
    assert {driver for _, _, driver in truth.drivers} == {DRIVER_INTENT}
    assert all(truth.intent_consistent(user, item) for user, item, _ in truth.drivers)


def test_fully_confounded_interactions_hit_most_popular_attribute():
    result = generate(small_config(confound_strength=1.0))
    truth = result.truth
    assert {driver for _, _, driver in truth.drivers} == {DRIVER_CONFOUNDER}
    assert {truth.item_attributes[item]["A"] for _, item, _ in truth.drivers} == {"a0"}


def test_no_intent_prefers_the_majority_attribute():
    result = generate(small_config(confound_strength=0.4))
    truth = result.truth
    preferred = [attr for attrs in truth.intent_attributes.values() for attr in attrs]
    assert "a0" not in preferred
    assert sorted(preferred) == sorted(f"a{j}" for j in range(1, 40))
    intent_items = {item for _, item, driver in truth.drivers if driver == DRIVER_INTENT}
    assert intent_items
    assert all(truth.item_attributes[item]["A"] != "a0" for item in intent_items)


def test_zero_skew_is_uniform():
    assert_allclose(zipf_weights(4, 0.0), 0.25)
    weights = zipf_weights(3, 1.0)
    assert_allclose(weights, np.array([1.0, 0.5, 1 / 3]) / (11 / 6))


@pytest.mark.parametrize("overrides", [
    dict(aspect_types=(("A", 2),), missing_rate={}, true_intents=3),
    dict(aspect_types=(("A", 2),), missing_rate={}, true_intents=2),
    dict(interactions_per_user=101),
    dict(confound_strength=1.5),
    dict(missing_rate={"A": -0.1}),
    dict(friends_per_user=30),
    dict(user_type="U", aspect_types=(("u", 4),), missing_rate={}),
])
def test_infeasible_configs_rejected(overrides):
    with pytest.raises(SynthConfigError):
        small_config(**overrides)


def test_presets():
    douban = preset("douban-book", n_users=10)
    assert douban.friends_per_user == 6
    assert douban.n_users == 10
    with pytest.raises(SynthConfigError):
        preset("movielens")


def test_friend_edges_use_user_kind():
    result = generate(small_config(friends_per_user=2))
    assert result.hin.schema.friend_kind is not None
    assert result.hin.edge_counts()["UU"] > 0


def test_minority_mask():
    truth = GroundTruth(
        user_intent={"u0": 0},
        item_attributes={"m0": {"A": "a0"}, "m1": {"A": "a2"}, "m2": {"A": None}, "m3": {"A": "a1"}},
        intent_attributes={0: ["a0"]},
        attribute_rank={"A": {"a0": 0, "a1": 1, "a2": 2, "a3": 3}},
        drivers=[],
        primary_aspect="A",
    )
    assert truth.minority_mask(["m0", "m1", "m2", "m3"]).tolist() == [False, True, True, False]


def test_ground_truth_file_roundtrip(tmp_path):
    truth = generate(small_config()).truth
    truth.save(str(tmp_path / "truth.tsv"))
    loaded = GroundTruth.load(str(tmp_path / "truth.tsv"))
    assert loaded.user_intent == truth.user_intent
    assert loaded.item_attributes == truth.item_attributes
    assert loaded.intent_attributes == truth.intent_attributes
    assert loaded.drivers == truth.drivers
    assert loaded.primary_aspect == "A"


def test_ground_truth_file_has_required_sections(tmp_path):
    truth = generate(small_config()).truth
    path = tmp_path / "truth.tsv"
    truth.save(str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# user\tintent"
    assert lines[1] == f"u0\t{truth.user_intent['u0']}"
    sections = read_truth_sections(str(path))
    assert list(sections)[:2] == [("user", "intent"), ("item", "aspect_type", "attr_id")]
    items = sections[("item", "aspect_type", "attr_id")]
    assert len(items) == 100 * 3
    assert (items["attr_id"] == C.MISSING_TOKEN).sum() == 10 + 20 + 5


def test_ground_truth_load_skips_unknown_sections(tmp_path):
    path = tmp_path / "truth.tsv"
    path.write_text("# user\tintent\nu0\t1\n# notes\nanything\n"
                    "# item\taspect_type\tattr_id\nm0\tA\ta2\nm1\tA\tMISSING\n", encoding="utf-8")
    truth = GroundTruth.load(str(path))
    assert truth.user_intent == {"u0": 1}
    assert truth.item_attributes == {"m0": {"A": "a2"}, "m1": {"A": None}}


def test_ground_truth_without_user_section_rejected(tmp_path):
    path = tmp_path / "truth.tsv"
    path.write_text("# item\taspect_type\tattr_id\nm0\tA\ta2\n", encoding="utf-8")
    with pytest.raises(HinError) as info:
        GroundTruth.load(str(path))
    assert info.value.code == "ground_truth_invalid"


def test_written_dataset_loads_back(tmp_path):
    result = generate(small_config(), str(tmp_path))
    for name in (C.INTERACTION_FILE, C.GROUND_TRUTH_FILE, C.SKEW_REPORT_FILE):
        assert os.path.exists(tmp_path / name)
    hin = load_hin_dir(str(tmp_path))
    assert hin.node_ids == result.hin.node_ids
    assert hin.interaction_matrix().n_interactions == 150
    assert load_metapaths(str(tmp_path / C.METAPATH_FILE)) == result.metapaths
