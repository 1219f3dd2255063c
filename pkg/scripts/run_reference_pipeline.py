#!/usr/bin/env python3
"""Run the reference recipe end to end: generate, train both models, evaluate.

Writes everything under one run directory (default runs/reference):
dataset/, baseline.ckpt, unlearned.ckpt, auxiliary.ckpt, traces, and
report.json comparing the unlearned model against its baseline.
"""

import argparse
import sys
from pathlib import Path

from vunlearn.cli import main

REFERENCE = """\
task_classes=2
sensitive_classes=2
nuisance_kind=uniform
nuisance_dim=8
embed_dim_per_factor=2
mixing=orthogonal
mixing_seed=3
noise_std=0.0
n=4000
hidden=16,16
split_index=1
alpha=1.0
beta=1.0
epochs=60
batch_size=64
lr_main=0.1
lr_front=0.05
lr_aux=0.25
attacker_steps=800
attacker_lr=0.01
"""


def run(argv) -> None:
    code = main(argv)
    if code != 0:
        sys.exit(code)


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/reference", help="run directory")
    parser.add_argument("--data-seed", type=int, default=11, help="dataset generation seed")
    parser.add_argument("--seed", type=int, default=0, help="training and attacker seed")
    parser.add_argument("--force", action="store_true", help="regenerate an existing dataset")
    return parser.parse_args()


if __name__ == "__main__":
    args = parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = out / "reference.cfg"
    cfg.write_text(REFERENCE + f"dataset={out / 'dataset'}\n")

    generate = ["generate", "--config", str(cfg), "--seed", str(args.data_seed)]
    run(generate + ["--force"] if args.force else generate)
    for which in ("--baseline", "--unlearn"):
        run(["train", which, "--config", str(cfg), "--seed", str(args.seed), "--out", str(out)])
    run([
        "evaluate", "--config", str(cfg), "--seed", str(args.seed), "--out", str(out),
        str(out / "unlearned.ckpt"), str(out / "baseline.ckpt"),
    ])
