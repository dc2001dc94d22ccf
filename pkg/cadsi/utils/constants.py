# cadsi/utils/constants.py
"""
全局常量与默认超参数
所有可配置项的默认值都在这里，config_loader 以此构建配置 schema。
"""
# --- 运行环境 ---
THREADS_ENV_VAR = "CADSI_THREADS"
DEFAULT_SEED = 0
DEFAULT_THREADS = 1

# --- 数值 ---
FLOAT_FORMAT = "%.17g"  # TSV/CSV 中浮点数的无损格式
ROUTING_TOLERANCE = 1e-9

# --- HIN ---
DEFAULT_USER_TYPE = "U"
DEFAULT_MIN_INTERACTIONS = 5  # 5-core
DEFAULT_MIN_FRIENDS = 5
NODE_FILE = "nodes.tsv"
EDGE_FILE = "edges.tsv"
SCHEMA_FILE = "schema.txt"
METAPATH_FILE = "metapaths.txt"
INTERACTION_FILE = "interactions.tsv"
GROUND_TRUTH_FILE = "ground_truth.tsv"
SKEW_REPORT_FILE = "skew_report.csv"
NODE_INDEX_FILE = "node_index.tsv"

# --- 随机游走 ---
DEFAULT_WALKS_PER_NODE = 10
DEFAULT_WALK_LENGTH = 21
CORPUS_FILE = "corpus.txt"

# --- 异构 skip-gram ---
DEFAULT_DIM = 64
DEFAULT_WINDOW = 3
DEFAULT_NEGATIVES = 5
DEFAULT_SKIPGRAM_LR = 0.025
DEFAULT_SKIPGRAM_EPOCHS = 1
DEFAULT_SKIPGRAM_BATCH = 512
UNIGRAM_POWER = 0.75
FUSION_INIT_NOISE = 0.01
ASPECT_ROW_TYPE = "@aspect"  # context_bank.tsv 中方面类型向量的行类型

# --- 意图解耦 ---
DEFAULT_INTENTS_K = 4
DEFAULT_ROUTING_ITERS = 2
DEFAULT_LAYERS = 2

# --- 预测与目标函数 ---
DEFAULT_DELTA = 0.5
DEFAULT_LAMBDA_D = 1.0
DEFAULT_LAMBDA_THETA = 1.0
DEFAULT_LAMBDA_Z = 1.0
DEFAULT_LAMBDA_ROUTE = 0.1  # 用户级路由平衡项
DEFAULT_L2 = 1e-4

# --- 训练 ---
DEFAULT_LR = 0.005
DEFAULT_BATCH_SIZE = 1024
DEFAULT_MAX_EPOCHS = 2000
DEFAULT_EVAL_EVERY = 10
DEFAULT_PATIENCE = 50  # 以评估次数计
DEFAULT_SKIPGRAM_PAIRS_PER_STEP = 512
DEFAULT_EARLY_STOP_K = 20

# --- 因果干预 ---
DEFAULT_INTERVENTION_ITERS = 140
DEFAULT_INTERVENTION_EVAL_EVERY = 10

# --- 评估 ---
DEFAULT_SPLIT = (0.8, 0.1, 0.1)
DEFAULT_KS = (20, 40)
ABLATION_DEFAULTS = {
    "k": (1, 2, 4, 8, 16),
    "L": (1, 2, 3),
    "iterations_n": (0, 35, 70, 140),
    "K": (10, 20, 40, 80),
}

# --- 合成数据 ---
DEFAULT_SYNTH_USERS = 300
DEFAULT_SYNTH_ITEMS = 500
DEFAULT_SYNTH_ITEM_TYPE = "M"
DEFAULT_SYNTH_ASPECTS = (("A", 40), ("D", 20), ("G", 10))
DEFAULT_SYNTH_MISSING = {"A": 0.1, "D": 0.2, "G": 0.05}
DEFAULT_SYNTH_SKEW = 1.0
DEFAULT_SYNTH_INTENTS = 4
DEFAULT_SYNTH_INTERACTIONS = 30
DEFAULT_SYNTH_CONFOUND = 0.4
MISSING_TOKEN = "MISSING"

# --- 检查点文件 ---
MANIFEST_FILE = "manifest.txt"
HYPERPARAMS_FILE = "hyperparameters.txt"
LOSS_TRACE_FILE = "loss_trace.csv"
PARAMS_FILE = "params.npz"
FUSION_FILE = "fusion.npz"
CONTEXT_BANK_FILE = "context_bank.tsv"
PATH_TABLE_DIR = "path_tables"
SPLIT_DIR = "split"
INTERVENTION_TRACE_FILE = "intervention_trace.csv"
INTERVENTION_CURVE_FILE = "intervention_curve.csv"
METRICS_FILE = "metrics.csv"
MINORITY_METRICS_FILE = "metrics_minority.csv"
ABLATION_FILE = "ablation.csv"
DIVERGED_STATE_FILE = "diverged_state.npz"
