"""异构信息网络与元路径随机游走。"""
from cadsi.graph.hin import (  # noqa: F401
    Hin,
    InteractionMatrix,
    MetaPath,
    MetaPathCheck,
    NodeType,
    Schema,
    TypedEdgeKind,
    aspect_start_paths,
    load_hin,
    load_hin_dir,
    load_metapaths,
    neighbors_of_type,
    save_metapaths,
    validate_metapaths,
)
from cadsi.graph.walks import Walk, WalkConfig, WalkCorpus, generate_corpus, generate_walk, next_step_distribution  # noqa: F401
