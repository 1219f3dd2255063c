"""Command line entry points: generate, train, evaluate, report.

Configuration is a flat key=value file (# comments, comma-separated lists);
every key has a default except the ones a command explicitly requires, and
a few flags (--seed, --out, --mode) override the file. Runs land in a
directory derived from the config hash and seed unless --out names one.

Exit codes: 0 success, 1 runtime failure (missing files, diverged training,
I/O), 2 configuration or constraint violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from .detachment_loss import derive_coefficients
from .errors import ConfigurationError, ContainerVersionError, TrainingDivergedError, VunlearnError
from .evaluator import (
    AttackerConfig,
    EvaluationReport,
    chance_level,
    measure_efficacy,
    measure_utility,
    median_epoch_seconds,
    time_inference,
    train_attacker,
)
from .synthgen import GeneratorSpec, dataset_checksum, generate_dataset, load_dataset, save_dataset
from .trainer import AuxiliaryHead, ModelSpec, SplitModel, TrainConfig, TrainTrace, train_baseline, train_unlearn

_INT, _FLOAT, _STR, _INT_LIST, _FLOAT_LIST = "int", "float", "str", "int_list", "float_list"

# key -> (type, default). None defaults resolve per command.
CONFIG_SCHEMA = {
    "task_classes": (_INT, 2),
    "sensitive_classes": (_INT_LIST, (2,)),
    "nuisance_kind": (_STR, "uniform"),
    "nuisance_classes": (_INT, 0),
    "nuisance_dim": (_INT, 8),
    "embed_dim_per_factor": (_INT, 2),
    "mixing": (_STR, "orthogonal"),
    "mixing_seed": (_INT, 3),
    "noise_std": (_FLOAT, 0.0),
    "n": (_INT, 4000),
    "hidden": (_INT_LIST, (16, 16)),
    "activation": (_STR, "tanh"),
    "split_index": (_INT, 1),
    "alpha": (_FLOAT, 1.0),
    "beta": (_FLOAT, 1.0),
    "gamma": (_FLOAT_LIST, None),
    "sensitive_attributes": (_INT_LIST, (0,)),
    "eval_attribute": (_INT, None),
    "epochs": (_INT, 60),
    "batch_size": (_INT, 64),
    "lr_main": (_FLOAT, 0.1),
    "lr_front": (_FLOAT, 0.05),
    "lr_aux": (_FLOAT, 0.25),
    "refresh_period": (_INT, 1),
    "aux_inner_steps": (_INT, 3),
    "mode": (_STR, "sequential"),
    "attacker_steps": (_INT, 800),
    "attacker_lr": (_FLOAT, 0.01),
    "attacker_train_fraction": (_FLOAT, 1.0),
    "attacker_seed": (_INT, None),
    "seed": (_INT, None),
    "out": (_STR, None),
    "dataset": (_STR, None),
}


def _parse_value(key: str, kind: str, raw: str):
    raw = raw.strip()
    try:
        if kind == _INT:
            return int(raw)
        if kind == _FLOAT:
            return float(raw)
        if kind == _INT_LIST:
            return tuple(int(part) for part in raw.split(",") if part.strip())
        if kind == _FLOAT_LIST:
            return tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigurationError(f"config key {key}: cannot parse {raw!r} as {kind}") from exc
    return raw


def parse_config_text(text: str) -> dict:
    """Parse key=value lines into typed values; unknown keys are errors."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigurationError(f"unknown config key: {key}")
        out[key] = _parse_value(key, CONFIG_SCHEMA[key][0], raw)
    return out


def load_config(args) -> tuple[dict, set]:
    """Merged config plus the set of keys the user actually provided."""
    provided = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        provided = parse_config_text(path.read_text())
    if getattr(args, "seed", None) is not None:
        provided["seed"] = int(args.seed)
    if getattr(args, "out", None) is not None:
        provided["out"] = str(args.out)
    if getattr(args, "mode", None) is not None:
        provided["mode"] = args.mode
    cfg = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    cfg.update(provided)
    return cfg, set(provided)


def require_keys(provided: set, keys) -> None:
    for key in keys:
        if key not in provided:
            raise ConfigurationError(f"missing required config key: {key}")


def run_directory(cfg: dict) -> Path:
    if cfg.get("out"):
        return Path(cfg["out"])
    hashed = {k: v for k, v in sorted(cfg.items()) if k not in ("seed", "out")}
    digest = hashlib.sha256(json.dumps(hashed, sort_keys=True, default=list).encode()).hexdigest()
    return Path("runs") / f"{digest[:12]}-s{cfg['seed']}"


def generator_spec_from_config(cfg: dict) -> GeneratorSpec:
    return GeneratorSpec(
        task_classes=int(cfg["task_classes"]),
        sensitive_classes=tuple(cfg["sensitive_classes"]),
        nuisance_kind=cfg["nuisance_kind"],
        nuisance_classes=int(cfg["nuisance_classes"]),
        nuisance_dim=int(cfg["nuisance_dim"]),
        embed_dim_per_factor=int(cfg["embed_dim_per_factor"]),
        mixing=cfg["mixing"],
        mixing_seed=int(cfg["mixing_seed"]),
        noise_std=float(cfg["noise_std"]),
        seed=int(cfg["seed"]),
    )


def resolve_gammas(cfg: dict, n_sensitive: int) -> tuple[float, ...]:
    """Per-dataset-attribute gamma vector, zero off the targeted attributes."""
    attrs = tuple(cfg["sensitive_attributes"])
    if not attrs:
        raise ConfigurationError("sensitive_attributes must name at least one attribute")
    for a in attrs:
        if not 0 <= a < n_sensitive:
            raise ConfigurationError(
                f"sensitive_attributes entry {a} out of range for {n_sensitive} attributes"
            )
    raw = cfg["gamma"]
    if raw is None:
        targeted = (float(cfg["beta"]),) * len(attrs)
    elif len(raw) == 1:
        targeted = (float(raw[0]),) * len(attrs)
    elif len(raw) == len(attrs):
        targeted = tuple(float(g) for g in raw)
    else:
        raise ConfigurationError(
            f"gamma has {len(raw)} entries for {len(attrs)} sensitive_attributes"
        )
    full = [0.0] * n_sensitive
    for a, g in zip(attrs, targeted):
        full[a] = g
    return tuple(full)


def resolve_eval_attribute(cfg: dict) -> int:
    if cfg["eval_attribute"] is not None:
        return int(cfg["eval_attribute"])
    return int(tuple(cfg["sensitive_attributes"])[0])


def model_spec_from_config(cfg: dict, observation_dim: int) -> ModelSpec:
    return ModelSpec(
        input_dim=observation_dim,
        hidden=tuple(cfg["hidden"]),
        n_classes=int(cfg["task_classes"]),
        activation=cfg["activation"],
        split_index=int(cfg["split_index"]),
    )


def _dataset_dir(cfg: dict, run_dir: Path) -> Path:
    if cfg.get("dataset"):
        return Path(cfg["dataset"])
    return run_dir / "dataset"


def _load_dataset_or_fail(cfg: dict, run_dir: Path):
    path = _dataset_dir(cfg, run_dir)
    if not path.exists():
        raise FileNotFoundError(
            f"dataset not found at {path}; run the generate command first or set dataset="
        )
    return load_dataset(path)


def cmd_generate(args) -> int:
    cfg, provided = load_config(args)
    require_keys(provided, ("task_classes", "sensitive_classes", "n", "seed"))
    if cfg["n"] < 1:
        raise ConfigurationError(f"n must be >= 1, got {cfg['n']}")
    spec = generator_spec_from_config(cfg)
    run_dir = run_directory(cfg)
    target = _dataset_dir(cfg, run_dir)
    if target.exists() and any(target.iterdir()) and not args.force:
        raise ConfigurationError(
            f"refusing to overwrite non-empty directory {target}; pass --force to replace it"
        )
    dataset = generate_dataset(spec, int(cfg["n"]))
    checksum = save_dataset(dataset, target)
    print(
        f"generated dataset: n={len(dataset)} observation_dim={dataset.observation_dim} "
        f"checksum={checksum[:16]}"
    )
    print(f"wrote {target}")
    return 0


def _train_config(cfg: dict, gammas) -> TrainConfig:
    return TrainConfig(
        epochs=int(cfg["epochs"]),
        alpha=float(cfg["alpha"]),
        beta=float(cfg["beta"]),
        gamma=gammas,
        batch_size=int(cfg["batch_size"]),
        lr_main=float(cfg["lr_main"]),
        lr_front=None if cfg["lr_front"] is None else float(cfg["lr_front"]),
        lr_aux=float(cfg["lr_aux"]),
        seed=int(cfg["seed"]),
        mode=cfg["mode"],
        refresh_period=int(cfg["refresh_period"]),
        aux_inner_steps=int(cfg["aux_inner_steps"]),
    )


def cmd_train(args) -> int:
    cfg, provided = load_config(args)
    require_keys(provided, ("seed",))
    run_dir = run_directory(cfg)
    dataset = _load_dataset_or_fail(cfg, run_dir)
    model_spec = model_spec_from_config(cfg, dataset.observation_dim)
    run_dir.mkdir(parents=True, exist_ok=True)

    if args.baseline:
        prefix = "baseline"
        trace_path = run_dir / f"{prefix}_trace.jsonl"
        config = _train_config(cfg, 0.0)
        try:
            model, trace = train_baseline(dataset, model_spec, config)
        except TrainingDivergedError as exc:
            if exc.trace is not None:
                exc.trace.to_jsonl(trace_path)
            raise
    else:
        prefix = "unlearned"
        trace_path = run_dir / f"{prefix}_trace.jsonl"
        gammas = resolve_gammas(cfg, dataset.n_sensitive)
        # Fail fast on inadmissible coefficients, before any training work.
        derive_coefficients(float(cfg["alpha"]), float(cfg["beta"]), gammas)
        config = _train_config(cfg, gammas)
        try:
            model, aux, trace = train_unlearn(dataset, model_spec, config)
        except TrainingDivergedError as exc:
            if exc.trace is not None:
                exc.trace.to_jsonl(trace_path)
            raise
        aux.save(run_dir / "auxiliary.ckpt")

    ckpt = run_dir / f"{prefix}.ckpt"
    model.save(ckpt)
    trace.to_jsonl(trace_path)
    final = trace.records[-1].task_loss if trace.records else float("nan")
    print(f"trained {prefix}: epochs={len(trace.records)} final_task_loss={final:.4f}")
    print(f"wrote {ckpt}")
    return 0


def _config_echo(cfg: dict, gammas, eval_attribute: int) -> dict:
    echo = {k: v for k, v in cfg.items() if k != "out"}
    echo["gamma"] = list(gammas)
    echo["eval_attribute"] = eval_attribute
    for key, value in echo.items():
        if isinstance(value, tuple):
            echo[key] = list(value)
    return echo


def cmd_evaluate(args) -> int:
    cfg, provided = load_config(args)
    require_keys(provided, ("seed",))
    ckpt = Path(args.checkpoint)
    base_ckpt = Path(args.baseline_checkpoint)
    for path in (ckpt, base_ckpt):
        if not path.exists():
            raise FileNotFoundError(f"checkpoint not found: {path}")
    run_dir = run_directory(cfg)
    dataset = _load_dataset_or_fail(cfg, run_dir)

    model = SplitModel.load(ckpt)
    baseline = SplitModel.load(base_ckpt)
    gammas = resolve_gammas(cfg, dataset.n_sensitive)
    attribute = resolve_eval_attribute(cfg)
    # attacks are re-runnable against a fixed checkpoint without retraining
    attacker_seed = cfg["attacker_seed"] if cfg["attacker_seed"] is not None else cfg["seed"]
    attacker_config = AttackerConfig(
        steps=int(cfg["attacker_steps"]),
        learning_rate=float(cfg["attacker_lr"]),
        seed=int(attacker_seed),
        train_fraction=float(cfg["attacker_train_fraction"]),
    )
    attacker = train_attacker(model, dataset, attribute, attacker_config)
    base_attacker = train_attacker(baseline, dataset, attribute, attacker_config)

    aux_path = ckpt.parent / "auxiliary.ckpt"
    params_aux = AuxiliaryHead.load(aux_path).param_count if aux_path.exists() else 0
    trace_path = ckpt.parent / f"{ckpt.stem}_trace.jsonl"
    trace = TrainTrace.from_jsonl(trace_path) if trace_path.exists() else None

    test_x = dataset.features[dataset.split.test].astype(float)
    report = EvaluationReport(
        efficacy=measure_efficacy(attacker, dataset),
        baseline_efficacy=measure_efficacy(base_attacker, dataset),
        utility=measure_utility(model, dataset),
        baseline_utility=measure_utility(baseline, dataset),
        chance_level=chance_level(dataset, attribute),
        params_main=model.param_count,
        params_with_auxiliary=model.param_count + params_aux,
        macs_per_sample=model.macs,
        train_seconds_per_epoch=median_epoch_seconds(trace),
        inference_seconds_per_epoch=time_inference(model, test_x),
        config=_config_echo(cfg, gammas, attribute),
        seed=int(cfg["seed"]),
    )
    out_dir = Path(cfg["out"]) if cfg.get("out") else ckpt.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report.save(report_path)

    rows = [
        ("efficacy", report.efficacy, report.baseline_efficacy, report.chance_level),
        ("utility", report.utility, report.baseline_utility, None),
    ]
    print(f"{'metric':<12}{'model':>10}{'baseline':>10}{'chance':>10}")
    for name, a, b, c in rows:
        chance = f"{c:>10.4f}" if c is not None else f"{'-':>10}"
        print(f"{name:<12}{a:>10.4f}{b:>10.4f}{chance}")
    print(f"wrote {report_path}")
    return 0


def _report_sort_key(report: EvaluationReport) -> float:
    gammas = report.config.get("gamma") or [0.0]
    attr = report.config.get("eval_attribute", 0)
    try:
        return float(gammas[attr])
    except (IndexError, TypeError, ValueError):
        return 0.0


def cmd_report(args) -> int:
    reports = []
    bad = []
    for raw in args.reports:
        path = Path(raw)
        try:
            reports.append((path, EvaluationReport.load(path)))
        except (ContainerVersionError, OSError, json.JSONDecodeError, TypeError) as exc:
            bad.append(f"{path}: {exc}")
    if bad:
        raise VunlearnError("unreadable reports:\n  " + "\n  ".join(bad))
    reports.sort(key=lambda pair: _report_sort_key(pair[1]))

    print(f"{'gamma':>8}{'efficacy':>10}{'utility':>10}{'chance':>10}  path")
    for path, report in reports:
        print(
            f"{_report_sort_key(report):>8.3f}{report.efficacy:>10.4f}"
            f"{report.utility:>10.4f}{report.chance_level:>10.4f}  {path}"
        )
    ordered = [r for _, r in reports]
    violations = [
        (_report_sort_key(prev), _report_sort_key(cur))
        for prev, cur in zip(ordered, ordered[1:])
        if cur.efficacy > prev.efficacy + 0.02
    ]
    if violations:
        pairs = ", ".join(f"gamma {a:.3f} -> {b:.3f}" for a, b in violations)
        print(f"efficacy monotonicity violated ({pairs})")
    else:
        print("efficacy non-increasing in gamma: ok")

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        xs = [_report_sort_key(r) for r in ordered]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(xs, [r.efficacy for r in ordered], "o-", label="attack accuracy")
        ax.plot(xs, [r.utility for r in ordered], "s-", label="task accuracy")
        if ordered:
            ax.axhline(ordered[0].chance_level, ls=":", c="gray", label="chance")
        ax.set_xlabel("gamma")
        ax.set_ylabel("accuracy")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=150)
        print(f"wrote {args.plot}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vunlearn",
        description="train and evaluate representation unlearning on synthetic factor data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="run directory (default derives from the config)")

    gen = sub.add_parser("generate", help="create and store a synthetic dataset")
    common(gen)
    gen.add_argument("--force", action="store_true", help="overwrite an existing dataset")
    gen.set_defaults(func=cmd_generate)

    train = sub.add_parser("train", help="train a baseline or unlearned model")
    common(train)
    train.add_argument("--mode", choices=("sequential", "parallel"))
    which = train.add_mutually_exclusive_group(required=True)
    which.add_argument("--baseline", action="store_true", help="task loss only")
    which.add_argument("--unlearn", action="store_true", help="detachment objective")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="attack a checkpoint and write report.json")
    common(ev)
    ev.add_argument("checkpoint", help="model checkpoint to evaluate")
    ev.add_argument("baseline_checkpoint", help="baseline checkpoint for reference rows")
    ev.set_defaults(func=cmd_evaluate)

    rep = sub.add_parser("report", help="tabulate evaluation reports")
    rep.add_argument("reports", nargs="+", help="report.json paths")
    rep.add_argument("--plot", help="save a gamma sweep figure to this file")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (VunlearnError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
