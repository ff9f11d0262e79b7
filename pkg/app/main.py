# Copyright (c) 2025 sprowii
import argparse
import json
import sys
from typing import Callable, Dict, List, Optional

from app import config
from app.cli.handlers import cmd_decompose, cmd_eval, cmd_synth, cmd_train
from app.cli.run_config import RunConfig
from app.cli.workspace import METHODS, Workspace
from app.errors import DDSError
from app.logging_config import log

Handler = Callable[[RunConfig, Workspace, argparse.Namespace], object]

COMMANDS: Dict[str, Handler] = {
    "synth": lambda run, ws, args: cmd_synth(run, ws, force=getattr(args, "force", False)),
    "train": lambda run, ws, args: cmd_train(run, ws, retrain=args.retrain or getattr(args, "force", False)),
    "decompose": lambda run, ws, args: cmd_decompose(run, ws, args.method),
    "eval": lambda run, ws, args: cmd_eval(run, ws),
}


def _common_flags() -> argparse.ArgumentParser:
    # SUPPRESS: флаги можно ставить и до, и после имени команды
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="файл KEY=VALUE")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help=f"выходной каталог (по умолчанию {config.OUT_DIR})")
    common.add_argument("--force", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--c", type=float, default=argparse.SUPPRESS, help="вес штрафа правдоподобия DDS")
    common.add_argument("--set", dest="overrides", action="append", default=argparse.SUPPRESS,
                        metavar="KEY=VALUE", help="переопределить ключ конфигурации")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="dds", parents=[common],
                                     description="Differentiable Dictionary Search на синтетических нотах")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="синтез датасета")
    train = sub.add_parser("train", parents=[common], help="обучение NoteFlow")
    train.add_argument("--retrain", action="store_true", help="переобучить уже обученные модели")
    decompose = sub.add_parser("decompose", parents=[common], help="декомпозиция тестовых кадров и пьес")
    decompose.add_argument("--method", choices=METHODS, required=True)
    sub.add_parser("eval", parents=[common], help="отчёты")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = RunConfig.load(
            getattr(args, "config", None),
            getattr(args, "overrides", []),
            seed=getattr(args, "seed", None),
            c=getattr(args, "c", None),
            threads=getattr(args, "threads", None),
        ).ensure_valid()
        ws = Workspace.at(getattr(args, "out", None) or config.OUT_DIR)
        log.info(f"{args.command}: каталог {ws.root}, seed {run.seed}"
                 + (f", конфиг {run.source}" if run.source else ""))
        COMMANDS[args.command](run, ws, args)
    except DDSError as exc:
        log.error(f"{args.command}: {exc}")
        print(json.dumps({"error": exc.kind, "message": str(exc)}, ensure_ascii=False), file=sys.stderr)
        return 2
    except Exception as exc:
        log.exception(f"{args.command}: непредвиденная ошибка")
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}, ensure_ascii=False), file=sys.stderr)
        return 1
    return 0
