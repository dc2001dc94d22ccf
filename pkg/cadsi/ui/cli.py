# cadsi/ui/cli.py
"""
命令行前端
    cadsi synth --out data/ --seed 7
    cadsi pretrain --data data/ --out runs/pre
    cadsi train --pretrain runs/pre --out runs/train [--joint]
    cadsi intervene --train runs/train --out runs/int
    cadsi eval --ckpt runs/int --k 20,40
    cadsi recommend --ckpt runs/int --user u42 --top 10
    cadsi explain --ckpt runs/int --user u42
    cadsi ablate --pretrain runs/pre --out runs/abl --ablate axis=k values=1,2,4,8,16

CadsiError 以退出码 2 结束，并向 stderr 写一行
    error code=<code> command=<cmd> message="<text>"
其余异常以退出码 1 结束。
"""
import argparse
import os
import sys
from typing import List, Optional, Sequence, TextIO, Tuple

from cadsi.core.engine import PipelineEngine
from cadsi.evaluation.ablation import parse_values
from cadsi.ui.report_renderer import ReportRenderer
from cadsi.utils import constants as C
from cadsi.utils.errors import CadsiError, ConfigError
from cadsi.utils.logger import logger, set_level

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CADSI_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="shortcut for --set seed=N")
    common.add_argument("--threads", type=int, help=f"worker threads (fallback: ${C.THREADS_ENV_VAR}, then 1)")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR or CRITICAL")

    parser = argparse.ArgumentParser(prog="cadsi", description="Context-aware debiased recommendation pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a confounded synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", help="synthetic preset (default, douban-book)")

    p = sub.add_parser("pretrain", parents=[common], help="meta-path walks, skip-gram and fusion")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common], help="intent disentanglement + BPR training")
    p.add_argument("--pretrain", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--joint", action="store_true", help="run the intervention stage in the same run")

    p = sub.add_parser("intervene", parents=[common], help="causal-intervention fine-tuning")
    p.add_argument("--train", dest="train_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, help="shortcut for --set intervention.iterations_n=N")
    p.add_argument("--unfreeze-aspects", action="store_true")

    p = sub.add_parser("eval", parents=[common], help="Recall@K / NDCG@K on the test split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out")
    p.add_argument("--k", help="cut-offs, e.g. 20 or 20,40")

    p = sub.add_parser("recommend", parents=[common], help="top-N items for one user")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--top", type=int, default=10)

    p = sub.add_parser("explain", parents=[common], help="per-intent routing weights of one user's items")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--out")

    p = sub.add_parser("ablate", parents=[common], help="one-parameter sweep (k, L, iterations_n, K)")
    p.add_argument("--pretrain", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ablate", nargs="+", required=True, metavar="axis=AXIS [values=V1,V2,...]")
    return parser


def resolve_threads(flag: Optional[int]) -> Optional[int]:
    if flag is not None:
        return flag
    env = os.environ.get(C.THREADS_ENV_VAR, "").strip()
    if not env:
        return None
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigError(f"{C.THREADS_ENV_VAR} must be an integer, got '{env}'.") from exc


def collect_overrides(args: argparse.Namespace) -> List[str]:
    """--set 在前，专用参数在后 (专用参数优先)。"""
    overrides = list(args.overrides)
    threads = resolve_threads(args.threads)
    if threads is not None:
        overrides.append(f"threads={threads}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "preset", None):
        overrides.append(f"synth.preset={args.preset}")
    if getattr(args, "iterations", None) is not None:
        overrides.append(f"intervention.iterations_n={args.iterations}")
    if getattr(args, "unfreeze_aspects", False):
        overrides.append("intervention.unfreeze_aspects=true")
    if getattr(args, "k", None):
        overrides.append(f"eval.ks={args.k}")
    return overrides


def parse_ablate(tokens: Sequence[str]) -> Tuple[str, List[int]]:
    fields = {}
    for token in tokens:
        if "=" not in token:
            raise ConfigError(f"--ablate expects key=value tokens, got '{token}'.")
        key, value = token.split("=", 1)
        fields[key.strip()] = value.strip()
    unknown = set(fields) - {"axis", "values"}
    if unknown or "axis" not in fields:
        raise ConfigError(f"--ablate takes axis=<axis> and optional values=<v1,v2,...>; got {sorted(fields)}.")
    return fields["axis"], parse_values(fields["axis"], fields.get("values", ""))


def dispatch(engine: PipelineEngine, args: argparse.Namespace, renderer: ReportRenderer) -> None:
    command = args.command
    if command == "synth":
        result = engine.run("synth", out_dir=args.out)
        renderer.draw_skew(result.report)
    elif command == "pretrain":
        engine.run("pretrain", data_dir=args.data, out_dir=args.out)
        renderer.draw_message(f"pretraining checkpoint: {args.out}")
    elif command == "train":
        session = engine.run("train", pretrain_dir=args.pretrain, out_dir=args.out, joint=args.joint)
        renderer.draw_message(f"model checkpoint: {args.out} (score_mode={session.score_mode})")
    elif command == "intervene":
        session = engine.run("intervene", train_dir=args.train_dir, out_dir=args.out)
        renderer.draw_message(f"model checkpoint: {args.out} (score_mode={session.score_mode})")
    elif command == "eval":
        report, minority = engine.run("eval", ckpt_dir=args.ckpt, out_dir=args.out)
        renderer.draw_metrics(report, "Test metrics")
        if minority is not None:
            renderer.draw_metrics(minority, "Minority-attribute items")
    elif command == "recommend":
        renderer.draw_table(engine.run("recommend", ckpt_dir=args.ckpt, user=args.user, top=args.top),
                            f"Top {args.top} for {args.user}")
    elif command == "explain":
        renderer.draw_table(engine.run("explain", ckpt_dir=args.ckpt, user=args.user, out_dir=args.out),
                            f"Intent weights for {args.user}")
    elif command == "ablate":
        axis, values = parse_ablate(args.ablate)
        renderer.draw_ablation(engine.run("ablate", pretrain_dir=args.pretrain, out_dir=args.out, axis=axis,
                                          values=values))


def _error_line(error: CadsiError, command: str) -> str:
    message = error.message.replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ")
    return f'error code={error.code} command={command} message="{message}"'


def main(argv: Optional[Sequence[str]] = None, stdout: Optional[TextIO] = None, stderr: Optional[TextIO] = None) -> int:
    args = build_parser().parse_args(argv)
    stderr = stderr if stderr is not None else sys.stderr
    if args.log_level:
        set_level(args.log_level)
    try:
        engine = PipelineEngine(args.config, collect_overrides(args))
        dispatch(engine, args, ReportRenderer(stdout))
    except CadsiError as error:
        stderr.write(_error_line(error, args.command) + "\n")
        return EXIT_CADSI_ERROR
    except Exception:
        logger.critical(f"Unhandled exception in command '{args.command}'!", exc_info=True)
        return EXIT_UNEXPECTED
    return EXIT_OK
