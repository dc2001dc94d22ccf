# cadsi/evaluation/__init__.py
from .ablation import AblationTable, ablation_sweep
from .metrics import MetricReport, evaluate, ndcg_at_k, rank_items, recall_at_k
from .split import DataSplit, SplitConfig, split

__all__ = ["AblationTable", "ablation_sweep", "MetricReport", "evaluate", "ndcg_at_k", "rank_items",
           "recall_at_k", "DataSplit", "SplitConfig", "split"]
