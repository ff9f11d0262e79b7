#!/usr/bin/env python3
"""Полный прогон эксперимента: synth -> train -> decompose (nmf, dds, mean) -> eval.

Standalone скрипт - можно запускать откуда угодно.

Запуск:
    python scripts/run_pipeline.py [--config run.env] [--out runs/exp1] [--seed 0] [--skip-mean]

Остальные флаги (--set KEY=VALUE, --threads, --c) передаются каждой команде как есть.
Каталог по умолчанию берётся из DDS_OUT_DIR (можно задать в .env).
"""
import argparse
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from dotenv import load_dotenv

load_dotenv(ROOT / ".env")

from app.main import main


# ============================================================================
# ЭТАПЫ
# ============================================================================

def stages(skip_mean: bool):
    yield "synth", ["synth"]
    yield "train", ["train"]
    methods = ["nmf", "dds"] if skip_mean else ["nmf", "dds", "mean"]
    for method in methods:
        yield f"decompose {method}", ["decompose", "--method", method]
    yield "eval", ["eval"]


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Полный прогон эксперимента DDS")
    parser.add_argument("--skip-mean", action="store_true", help="не запускать базовую линию со средним шаблоном")
    args, passthrough = parser.parse_known_args(argv)

    started = time.monotonic()
    for name, command in stages(args.skip_mean):
        print(f"▶️  {name}...")
        t0 = time.monotonic()
        code = main(command + passthrough)
        if code != 0:
            print(f"   ❌ {name}: код выхода {code}")
            return code
        print(f"   ✅ {time.monotonic() - t0:.1f} с")
    print()
    print(f"🏁 Готово за {time.monotonic() - started:.1f} с")
    return 0


if __name__ == "__main__":
    sys.exit(run())
