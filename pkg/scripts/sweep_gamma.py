#!/usr/bin/env python3
"""Sweep gamma over the reference recipe and tabulate attacker accuracy.

Shares one dataset and one baseline across the sweep, trains an unlearned
model per gamma value, evaluates each against the baseline, then prints the
merged table (optionally with a plot). Monotonicity of the efficacy column
is flagged by the report command.
"""

import argparse
import sys
from pathlib import Path

from run_reference_pipeline import REFERENCE

from vunlearn.cli import main


def run(argv) -> None:
    code = main(argv)
    if code != 0:
        sys.exit(code)


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/sweep", help="sweep directory")
    parser.add_argument(
        "--gammas", default="0.0,0.5,1.0", help="comma-separated gamma values"
    )
    parser.add_argument("--data-seed", type=int, default=11, help="dataset generation seed")
    parser.add_argument("--seed", type=int, default=2, help="training seed")
    parser.add_argument("--attacker-seed", type=int, default=0, help="attack training seed")
    parser.add_argument("--plot", help="write an efficacy-vs-gamma figure here")
    parser.add_argument("--force", action="store_true", help="regenerate an existing dataset")
    return parser.parse_args()


if __name__ == "__main__":
    args = parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = REFERENCE + f"dataset={out / 'dataset'}\nattacker_seed={args.attacker_seed}\n"
    cfg = out / "base.cfg"
    cfg.write_text(base)

    generate = ["generate", "--config", str(cfg), "--seed", str(args.data_seed)]
    run(generate + ["--force"] if args.force else generate)
    run(["train", "--baseline", "--config", str(cfg), "--seed", str(args.seed), "--out", str(out)])

    reports = []
    for raw in args.gammas.split(","):
        gamma = float(raw)
        gamma_dir = out / f"gamma_{gamma:g}"
        gamma_cfg = out / f"gamma_{gamma:g}.cfg"
        gamma_cfg.write_text(base + f"gamma={gamma}\n")
        run([
            "train", "--unlearn", "--config", str(gamma_cfg),
            "--seed", str(args.seed), "--out", str(gamma_dir),
        ])
        run([
            "evaluate", "--config", str(gamma_cfg), "--seed", str(args.seed),
            "--out", str(gamma_dir),
            str(gamma_dir / "unlearned.ckpt"), str(out / "baseline.ckpt"),
        ])
        reports.append(str(gamma_dir / "report.json"))

    run(["report", *reports] + (["--plot", args.plot] if args.plot else []))
