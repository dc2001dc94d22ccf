# cadsi/core/config_loader.py
"""
配置加载器
运行配置 (RunConfig) 由一组带类型的点号键组成，默认值来自 constants。
加载顺序: 默认值 → key=value 配置文件 → 命令行 --set key=value / 专用参数。
未知键与无法解析的值一律抛出 ConfigError。
"""
import os
from dataclasses import replace
from typing import Any, Callable, Dict, Iterable, Mapping, Optional, Tuple

from cadsi.data.synth import SynthConfig, preset
from cadsi.evaluation.split import SplitConfig
from cadsi.graph.walks import WalkConfig
from cadsi.models.hetsg import SkipGramConfig
from cadsi.models.intents import DisentangleConfig
from cadsi.models.intervention import InterventionConfig
from cadsi.models.model import ObjectiveConfig
from cadsi.models.scoring import PredictorParams
from cadsi.systems.training_system import TrainConfig
from cadsi.utils import constants as C
from cadsi.utils.errors import CadsiError, ConfigError
from cadsi.utils.logger import logger


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in text.replace(" ", "").split(",") if part)


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


# 键 → (解析函数, 默认值)
SCHEMA: Dict[str, Tuple[Callable[[str], Any], Any]] = {
    "seed": (int, C.DEFAULT_SEED),
    "threads": (int, C.DEFAULT_THREADS),
    "dim": (int, C.DEFAULT_DIM),
    "data.core_filter": (_parse_bool, False),
    "data.min_interactions": (int, C.DEFAULT_MIN_INTERACTIONS),
    "data.min_friends": (int, C.DEFAULT_MIN_FRIENDS),
    "walks.walks_per_node": (int, C.DEFAULT_WALKS_PER_NODE),
    "walks.walk_length": (int, C.DEFAULT_WALK_LENGTH),
    "skipgram.window": (int, C.DEFAULT_WINDOW),
    "skipgram.negatives": (int, C.DEFAULT_NEGATIVES),
    "skipgram.lr": (float, C.DEFAULT_SKIPGRAM_LR),
    "skipgram.epochs": (int, C.DEFAULT_SKIPGRAM_EPOCHS),
    "skipgram.batch_size": (int, C.DEFAULT_SKIPGRAM_BATCH),
    "intents.k": (int, C.DEFAULT_INTENTS_K),
    "intents.iters": (int, C.DEFAULT_ROUTING_ITERS),
    "intents.layers": (int, C.DEFAULT_LAYERS),
    "predictor.delta": (float, C.DEFAULT_DELTA),
    "objective.lambda_d": (float, C.DEFAULT_LAMBDA_D),
    "objective.lambda_theta": (float, C.DEFAULT_LAMBDA_THETA),
    "objective.lambda_z": (float, C.DEFAULT_LAMBDA_Z),
    "objective.l2": (float, C.DEFAULT_L2),
    "objective.lambda_route": (float, C.DEFAULT_LAMBDA_ROUTE),
    "train.lr": (float, C.DEFAULT_LR),
    "train.batch_size": (int, C.DEFAULT_BATCH_SIZE),
    "train.max_epochs": (int, C.DEFAULT_MAX_EPOCHS),
    "train.eval_every": (int, C.DEFAULT_EVAL_EVERY),
    "train.patience": (int, C.DEFAULT_PATIENCE),
    "train.skipgram_pairs_per_step": (int, C.DEFAULT_SKIPGRAM_PAIRS_PER_STEP),
    "train.early_stop_k": (int, C.DEFAULT_EARLY_STOP_K),
    "intervention.iterations_n": (int, C.DEFAULT_INTERVENTION_ITERS),
    "intervention.eval_every": (int, C.DEFAULT_INTERVENTION_EVAL_EVERY),
    "intervention.unfreeze_aspects": (_parse_bool, False),
    "split.train": (float, C.DEFAULT_SPLIT[0]),
    "split.validation": (float, C.DEFAULT_SPLIT[1]),
    "split.test": (float, C.DEFAULT_SPLIT[2]),
    "eval.ks": (_parse_int_list, C.DEFAULT_KS),
    "synth.preset": (str, "default"),
    "synth.n_users": (int, C.DEFAULT_SYNTH_USERS),
    "synth.n_items": (int, C.DEFAULT_SYNTH_ITEMS),
    "synth.skew_exponent": (float, C.DEFAULT_SYNTH_SKEW),
    "synth.true_intents": (int, C.DEFAULT_SYNTH_INTENTS),
    "synth.interactions_per_user": (int, C.DEFAULT_SYNTH_INTERACTIONS),
    "synth.confound_strength": (float, C.DEFAULT_SYNTH_CONFOUND),
}


class RunConfig:
    """已校验的运行配置；各模块的配置对象由它派生。"""

    def __init__(self, values: Optional[Mapping[str, Any]] = None):
        self._values: Dict[str, Any] = {key: default for key, (_, default) in SCHEMA.items()}
        for key, value in (values or {}).items():
            self._set(key, value)
        self.validate()

    # --- 读写 ---
    def _set(self, key: str, value: Any) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"Unknown config key '{key}'.")
        parser, _ = SCHEMA[key]
        if isinstance(value, str):
            try:
                value = parser(value.strip())
            except ValueError as exc:
                raise ConfigError(f"Cannot parse value {value!r} for '{key}': {exc}") from exc
        self._values[key] = value

    def get(self, key: str) -> Any:
        if key not in self._values:
            raise ConfigError(f"Unknown config key '{key}'.")
        return self._values[key]

    def __getitem__(self, key: str) -> Any:
        return self.get(key)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        merged = dict(self._values)
        merged.update(overrides)
        return RunConfig(merged)

    @staticmethod
    def read_file(path: str) -> Dict[str, str]:
        if not os.path.exists(path):
            raise ConfigError(f"Config file not found: {path}")
        values: Dict[str, str] = {}
        with open(path, encoding="utf-8") as handle:
            for line_no, raw in enumerate(handle, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{line_no}: expected key=value, got '{line}'.")
                key, value = line.split("=", 1)
                values[key.strip()] = value.strip()
        return values

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Iterable[str] = (),
             base: Optional[str] = None) -> "RunConfig":
        """base (通常是检查点里的 hyperparameters.txt) → path → overrides，后者覆盖前者。"""
        values: Dict[str, Any] = {}
        if base:
            values.update(cls.read_file(base))
        if path:
            values.update(cls.read_file(path))
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got '{item}'.")
            key, value = item.split("=", 1)
            values[key.strip()] = value.strip()
        config = cls(values)
        logger.debug(f"RunConfig loaded (base={base}, file={path}) with {len(values)} explicit key(s).")
        return config

    def snapshot(self) -> str:
        return "".join(f"{key}={_format(self._values[key])}\n" for key in sorted(self._values))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.snapshot())

    def validate(self) -> None:
        """构造一遍所有派生配置；任何约束失败都转成 ConfigError。"""
        if self.get("threads") < 1:
            raise ConfigError("threads must be >= 1.")
        if self.get("intervention.iterations_n") < 0:
            raise ConfigError("intervention.iterations_n must be >= 0.")
        if not self.get("eval.ks") or min(self.get("eval.ks")) < 1:
            raise ConfigError("eval.ks must list cut-offs >= 1.")
        try:
            self.walk_config()
            self.skipgram_config()
            self.disentangle_config()
            self.predictor_params()
            self.objective_config()
            self.train_config()
            self.split_config()
            self.synth_config()
            if self.get("intervention.iterations_n") > 0:
                self.intervention_config()
        except ConfigError:
            raise
        except CadsiError as exc:
            raise ConfigError(exc.message) from exc

    # --- 派生配置 ---
    def walk_config(self) -> WalkConfig:
        return WalkConfig(self["walks.walks_per_node"], self["walks.walk_length"], self["seed"], self["threads"])

    def skipgram_config(self) -> SkipGramConfig:
        return SkipGramConfig(self["dim"], self["skipgram.window"], self["skipgram.negatives"], self["skipgram.lr"],
                              self["skipgram.epochs"], self["seed"], self["skipgram.batch_size"])

    def disentangle_config(self) -> DisentangleConfig:
        return DisentangleConfig(self["intents.k"], self["intents.iters"], self["intents.layers"], self["dim"])

    def predictor_params(self) -> PredictorParams:
        return PredictorParams(self["predictor.delta"])

    def objective_config(self) -> ObjectiveConfig:
        return ObjectiveConfig(self["objective.lambda_d"], self["objective.lambda_theta"], self["objective.lambda_z"],
                               self["objective.l2"], self["objective.lambda_route"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(self["train.lr"], self["train.batch_size"], self["train.max_epochs"], self["train.eval_every"],
                           self["train.patience"], self["train.skipgram_pairs_per_step"], self["skipgram.negatives"],
                           self["train.early_stop_k"], self["seed"])

    def intervention_config(self) -> InterventionConfig:
        return InterventionConfig(self["intervention.iterations_n"], self["intervention.eval_every"],
                                  self["intervention.unfreeze_aspects"])

    def split_config(self) -> SplitConfig:
        return SplitConfig(self["split.train"], self["split.validation"], self["split.test"], self["seed"])

    def synth_config(self) -> SynthConfig:
        base = preset(self["synth.preset"])
        return replace(base, n_users=self["synth.n_users"], n_items=self["synth.n_items"],
                       skew_exponent=self["synth.skew_exponent"], true_intents=self["synth.true_intents"],
                       interactions_per_user=self["synth.interactions_per_user"],
                       confound_strength=self["synth.confound_strength"], seed=self["seed"])
