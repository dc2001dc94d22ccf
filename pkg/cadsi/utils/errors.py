# cadsi/utils/errors.py
"""
异常层次
每个异常带一个简短的机器可读 code，CLI 据此输出一行错误信息。
"""
from typing import Optional


class CadsiError(Exception):
    """所有 CaDSI 错误的基类。"""
    code = "cadsi_error"

    def __init__(self, message: str, code: Optional[str] = None):
        super().__init__(message)
        if code is not None:
            self.code = code

    @property
    def message(self) -> str:
        return str(self.args[0]) if self.args else ""


class ConfigError(CadsiError):
    code = "config_invalid"


class HinError(CadsiError):
    """图数据错误：未知节点类型、缺失节点、违反 schema、过滤后为空。"""
    code = "hin_invalid"


class WalkError(CadsiError):
    code = "walk_invalid"


class EmbeddingError(CadsiError):
    code = "embedding_invalid"


class DimensionError(CadsiError):
    code = "dimension_mismatch"


class RoutingInvariantError(CadsiError):
    """softmax 归一化后的意图分数不满足行和为1或严格为正。"""
    code = "routing_invariant"


class TrainingDivergedError(CadsiError):
    """损失出现非有限值。dump_path 指向诊断状态文件 (若已写出)。"""
    code = "training_diverged"

    def __init__(self, message: str, dump_path: Optional[str] = None):
        super().__init__(message)
        self.dump_path = dump_path


class CheckpointError(CadsiError):
    code = "checkpoint_missing"


class EvaluationError(CadsiError):
    code = "evaluation_invalid"


class SynthConfigError(CadsiError):
    code = "synth_infeasible"
