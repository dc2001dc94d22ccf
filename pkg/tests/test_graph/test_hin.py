import numpy as np
import pytest

from cadsi.graph.hin import (Hin, MetaPath, NodeType, Schema, TypedEdgeKind, aspect_start_paths, load_hin,
                             load_hin_dir, load_metapaths, neighbors_of_type, save_metapaths, validate_metapaths)
from cadsi.utils.errors import HinError
from tests.conftest import TOY_EDGES, TOY_NODES, build_hin, toy_schema


# --- schema ---
def test_schema_resolves_roles_and_aspects():
    schema = toy_schema()
    assert schema.user_type == "U"
    assert schema.item_type == "M"
    assert schema.aspect_types == ("A",)
    assert schema.interaction_kind.name == "UM"
    assert schema.friend_kind is None


def test_schema_rejects_duplicate_types():
    with pytest.raises(HinError) as info:
        Schema((NodeType("U"), NodeType("U")), (TypedEdgeKind("UU", "U", "U"),))
    assert info.value.code == "schema_invalid"


def test_schema_requires_interaction_kind():
    with pytest.raises(HinError) as info:
        Schema((NodeType("U"), NodeType("M"), NodeType("A")), (TypedEdgeKind("MA", "M", "A"),), "U", "M")
    assert info.value.code == "schema_invalid"


def test_schema_file_roundtrip(tmp_path):
    schema = toy_schema()
    schema.save(str(tmp_path / "schema.txt"))
    assert Schema.load(str(tmp_path / "schema.txt")) == schema


# --- 构图 ---
def test_hin_basic_queries(toy_hin):
    assert toy_hin.n_nodes == 9
    assert toy_hin.n_edges == len(TOY_EDGES)
    assert toy_hin.edge_counts() == {"UM": 7, "MA": 3}
    assert toy_hin.type_of(toy_hin.index("a1")) == "A"
    assert list(toy_hin.nodes_of_type("M")) == [3, 4, 5, 6]


def test_neighbors_of_type_sorted(toy_hin):
    assert neighbors_of_type(toy_hin, "u2", "M") == ["m0", "m2", "m3"]
    assert neighbors_of_type(toy_hin, "m0", "U") == ["u0", "u2"]
    assert neighbors_of_type(toy_hin, "m3", "A") == []


def test_edges_are_undirected_and_deduplicated():
    edges = TOY_EDGES + [("m0", "u0", "UM")]
    hin = build_hin(toy_schema(), TOY_NODES, edges)
    assert hin.n_edges == len(TOY_EDGES)
    assert neighbors_of_type(hin, "m0", "U") == ["u0", "u2"]


def test_unknown_node_lookup(toy_hin):
    with pytest.raises(HinError) as info:
        toy_hin.index("nobody")
    assert info.value.code == "unknown_node"


def test_unknown_node_type_rejected():
    with pytest.raises(HinError) as info:
        build_hin(toy_schema(), TOY_NODES + [("X", "x0")], TOY_EDGES)
    assert info.value.code == "unknown_node_type"


def test_duplicate_node_rejected():
    with pytest.raises(HinError) as info:
        Hin(toy_schema(), ["u0", "u0", "m0"], ["U", "U", "M"], [])
    assert info.value.code == "duplicate_node"


def test_edge_violating_kind_rejected():
    with pytest.raises(HinError) as info:
        build_hin(toy_schema(), TOY_NODES, TOY_EDGES + [("u0", "a0", "UM")])
    assert info.value.code == "schema_violation"


def test_self_loop_rejected():
    schema = Schema((NodeType("U"), NodeType("M")), (TypedEdgeKind("UM", "U", "M"), TypedEdgeKind("UU", "U", "U")))
    with pytest.raises(HinError) as info:
        Hin(schema, ["u0", "m0"], ["U", "M"], [(0, 1, "UM"), (0, 0, "UU")])
    assert info.value.code == "schema_violation"


def test_interaction_matrix_matches_user_item_edges(toy_hin):
    interactions = toy_hin.interaction_matrix()
    assert interactions.users == ("u0", "u1", "u2")
    assert interactions.items == ("m0", "m1", "m2", "m3")
    assert interactions.n_interactions == 7
    assert list(interactions.items_of(2)) == [0, 2, 3]
    np.testing.assert_array_equal(interactions.user_degrees(), [2, 2, 3])
    np.testing.assert_array_equal(interactions.item_degrees(), [2, 2, 2, 1])
    assert interactions.to_csr().sum() == 7


# --- 文件读取 ---
def test_load_hin_dir_restores_graph(tmp_path, toy_hin):
    toy_hin.save(str(tmp_path))
    loaded = load_hin_dir(str(tmp_path))
    assert loaded.node_ids == toy_hin.node_ids
    assert loaded.edges == toy_hin.edges


def test_load_hin_missing_file(tmp_path):
    with pytest.raises(HinError) as info:
        load_hin(str(tmp_path / "nodes.tsv"), [str(tmp_path / "edges.tsv")], toy_schema())
    assert info.value.code == "file_missing"


def test_load_hin_edge_to_missing_node(tmp_path):
    (tmp_path / "nodes.tsv").write_text("U\tu0\nM\tm0\n")
    (tmp_path / "edges.tsv").write_text("u0\tm0\tUM\nu0\tm9\tUM\n")
    with pytest.raises(HinError) as info:
        load_hin(str(tmp_path / "nodes.tsv"), [str(tmp_path / "edges.tsv")], toy_schema())
    assert info.value.code == "missing_node"


def test_load_hin_wrong_column_count(tmp_path):
    (tmp_path / "nodes.tsv").write_text("U\tu0\textra\n")
    (tmp_path / "edges.tsv").write_text("")
    with pytest.raises(HinError) as info:
        load_hin(str(tmp_path / "nodes.tsv"), [str(tmp_path / "edges.tsv")], toy_schema())
    assert info.value.code == "format_invalid"


def test_core_filter_reaches_fixpoint(tmp_path, toy_hin):
    toy_hin.save(str(tmp_path))
    filtered = load_hin_dir(str(tmp_path), core_filter=True, min_interactions=2)
    assert not filtered.has_node("m3")
    assert filtered.has_node("u2")
    assert filtered.has_node("a1")
    assert filtered.interaction_matrix().n_interactions == 6


def test_core_filter_to_empty_graph(tmp_path, toy_hin):
    toy_hin.save(str(tmp_path))
    with pytest.raises(HinError) as info:
        load_hin_dir(str(tmp_path), core_filter=True, min_interactions=3)
    assert info.value.code == "empty_graph"


# --- 元路径 ---
def test_metapath_needs_two_types():
    with pytest.raises(HinError) as info:
        MetaPath(("U",))
    assert info.value.code == "metapath_invalid"


def test_symmetric_metapath_cycles():
    path = MetaPath.parse("U M A M U")
    assert path.is_symmetric
    assert [path.type_at(p) for p in range(9)] == ["U", "M", "A", "M", "U", "M", "A", "M", "U"]


def test_asymmetric_metapath_ends():
    path = MetaPath(("U", "M", "A"))
    assert not path.is_symmetric
    assert path.type_at(2) == "A"
    assert path.type_at(3) is None


def test_validate_metapaths_reports_first_bad_step(toy_hin):
    report = validate_metapaths(toy_hin, [MetaPath(("U", "M", "U")), MetaPath(("U", "M", "A", "U"))])
    assert report[0].valid
    assert not report[1].valid
    assert report[1].step == 3
    assert report[1].pair == ("A", "U")


def test_aspect_start_paths_rotates_item_paths():
    rotated = aspect_start_paths([MetaPath.parse("M A M"), MetaPath.parse("U M U")], toy_schema())
    assert rotated == [MetaPath(("A", "M", "A"))]


def test_metapath_file_roundtrip(tmp_path):
    paths = [MetaPath.parse("U M U"), MetaPath.parse("M A M")]
    save_metapaths(paths, str(tmp_path / "metapaths.txt"))
    assert load_metapaths(str(tmp_path / "metapaths.txt")) == paths
