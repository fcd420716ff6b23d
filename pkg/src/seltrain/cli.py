"""Command-line entry point.

Subcommands: ``run`` (one experiment), ``sweep`` (paired runs across
strategies), ``score-pool`` (offline score table from a checkpoint),
``gen-data`` (synthetic CSV splits).  Values come from flags, then an
optional JSON config file (flags win), then documented defaults (pool size
defaults to 10x the batch size).

Exit codes: 0 all work completed; 2 usage errors (argparse); 3 invalid
configuration; 4 missing or malformed data file; 5 shape/numeric mismatch;
1 run failure.  Every error path prints one ``error: <kind>: <reason>`` line
on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import gen_gaussian_mixture, write_csv
from .errors import ConfigError, DataFormatError, DimensionError, NumericError, SelTrainError
from .model import forward, load_params, save_params
from .numerics import RandomStream
from .scoring import entropy_scores, hnm_scores, mms_scores
from .selection import LARGEST, Strategy
from .trainer import (
    STREAM_DATA_TEST,
    STREAM_DATA_TRAIN,
    DataSource,
    LrSchedule,
    RunConfig,
    RunResult,
    load_splits,
    lr_preset,
    train,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_SHAPE = 5

_CONFIG_KEYS = {
    "dataset",
    "data_path",
    "classes",
    "dim",
    "per_class",
    "per_class_test",
    "separation",
    "standardize",
    "arch",
    "strategy",
    "pool",
    "b",
    "steps",
    "eval_every",
    "lr_preset",
    "lr_rates",
    "lr_milestones",
    "seed",
    "threshold",
    "out",
    "pool_policy",
}


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--dataset", choices=["gauss", "csv", "idx"])
    p.add_argument("--data-path", dest="data_path")
    p.add_argument("--classes", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--per-class", dest="per_class", type=int)
    p.add_argument("--per-class-test", dest="per_class_test", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--no-standardize", action="store_true", help="skip per-feature standardization for csv/idx")
    p.add_argument("--arch")
    p.add_argument("--strategy", choices=["uniform", "mms", "hnm", "entropy"])
    p.add_argument("--pool", type=int, help="candidate pool size B (default 10*b)")
    p.add_argument("--b", type=int, help="training batch size b")
    p.add_argument("--steps", type=int)
    p.add_argument("--eval-every", dest="eval_every", type=int)
    p.add_argument("--lr-preset", dest="lr_preset", help="cifar10-early | cifar100-early | const:<x>")
    p.add_argument("--lr-rates", dest="lr_rates", type=float, nargs="+")
    p.add_argument("--lr-milestones", dest="lr_milestones", type=int, nargs="+")
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float, help="test-error target for steps-to-threshold")
    p.add_argument("--pool-policy", dest="pool_policy", choices=["fresh", "epoch"])
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seltrain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one training experiment")
    _add_common_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="paired runs over several strategies")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--strategies", nargs="+", help="strategies to sweep")

    p_score = sub.add_parser("score-pool", help="score a dataset offline from a checkpoint")
    _add_common_flags(p_score)
    p_score.add_argument("--checkpoint", required=True)
    p_score.add_argument("--split", choices=["train", "test"], default="test")
    p_score.add_argument("--table-out", help="write the TSV table here instead of stdout")

    p_gen = sub.add_parser("gen-data", help="generate synthetic CSV train/test splits")
    _add_common_flags(p_gen)
    return parser


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise DataFormatError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise DataFormatError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise DataFormatError(f"config file {path} must hold a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config file keys: {sorted(unknown)}")
    return raw


def _merged(args: argparse.Namespace) -> dict:
    """Flags override config-file values; None means 'not given'."""
    merged = _load_config_file(args.config) if args.config else {}
    for key in _CONFIG_KEYS:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            merged[key] = flag_val
    if getattr(args, "no_standardize", False):
        merged["standardize"] = False
    return merged


def _schedule_from(merged: dict, flags_have_lr: bool) -> LrSchedule:
    rates = merged.get("lr_rates")
    milestones = merged.get("lr_milestones")
    preset = merged.get("lr_preset")
    if rates is not None and preset is not None and flags_have_lr:
        raise ConfigError("give either --lr-preset or --lr-rates, not both")
    if rates is not None:
        return LrSchedule(rates=tuple(rates), milestones=tuple(milestones or ()))
    if milestones is not None:
        raise ConfigError("--lr-milestones needs --lr-rates")
    if preset is not None:
        return lr_preset(preset)
    return LrSchedule(rates=(0.1,))


def parse_config(args: argparse.Namespace) -> RunConfig:
    """Build a validated RunConfig from flags plus optional config file."""
    merged = _merged(args)
    kind = merged.get("dataset", "gauss")
    batch = int(merged.get("b", 32))
    pool = int(merged.get("pool", 10 * batch))
    if pool < batch:
        raise ConfigError(f"pool must be >= batch ({pool} < {batch})")
    flags_have_lr = getattr(args, "lr_rates", None) is not None and getattr(args, "lr_preset", None) is not None
    source = DataSource(
        kind=kind,
        path=merged.get("data_path"),
        n_classes=int(merged.get("classes", 10)),
        dim=int(merged.get("dim", 32)),
        per_class=int(merged.get("per_class", 1000)),
        per_class_test=int(merged.get("per_class_test", 200)),
        separation=float(merged.get("separation", 3.0)),
        standardize=bool(merged.get("standardize", True)),
    )
    threshold = merged.get("threshold")
    return RunConfig(
        source=source,
        arch=merged.get("arch", "linear"),
        strategy=merged.get("strategy", "uniform"),
        pool_size=pool,
        batch_size=batch,
        total_steps=int(merged.get("steps", 1000)),
        eval_every=int(merged.get("eval_every", 100)),
        schedule=_schedule_from(merged, flags_have_lr),
        seed=int(merged.get("seed", 0)),
        threshold=None if threshold is None else float(threshold),
        pool_policy=merged.get("pool_policy", "fresh"),
    )


def _write_run_outputs(config: RunConfig, result: RunResult, out_dir: Path, tag: str = "") -> dict:
    """Checkpoint, timing sidecar and summary; metrics stream during the run."""
    suffix = f"_{tag}" if tag else ""
    with open(out_dir / f"timings{suffix}.jsonl", "w", encoding="utf-8") as f:
        for rec in result.records:
            f.write(json.dumps({"step": rec.step, "wall_ms": rec.wall_ms}) + "\n")
    save_params(result.params, out_dir / f"final{suffix}.ckpt")
    summary = {
        "strategy": config.strategy,
        "seed": config.seed,
        "final_test_err": result.final_test_err,
        "threshold": config.threshold,
        "steps_to_threshold": (
            None if config.threshold is None else result.steps_to_threshold(config.threshold)
        ),
        "pool_checksum": result.pool_checksum,
        "updates": result.updates,
        "pool_draws": result.pool_draws,
        "forward_rows": result.forward_rows,
        "backward_rows": result.backward_rows,
        "early_stopped": result.early_stopped,
        "total_wall_ms": sum(r.wall_ms for r in result.records),
    }
    with open(out_dir / f"summary{suffix}.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    return summary


def _require_out(merged_out: str | None) -> Path:
    if not merged_out:
        raise ConfigError("--out directory is required")
    out = Path(merged_out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args: argparse.Namespace) -> int:
    config = parse_config(args)
    out = _require_out(_merged(args).get("out"))
    with open(out / "config.json", "w", encoding="utf-8") as f:
        json.dump(config.to_json_dict(), f, indent=2)
        f.write("\n")
    with open(out / "metrics.jsonl", "w", encoding="utf-8") as sink:
        result = train(config, metrics_sink=sink)
    _write_run_outputs(config, result, out)
    print(f"run complete: {out}/metrics.jsonl ({len(result.records)} records)")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    strategies = args.strategies
    if not strategies:
        raise ConfigError("sweep needs at least one strategy (--strategies)")
    base = parse_config(args)
    out = _require_out(_merged(args).get("out"))
    with open(out / "config.json", "w", encoding="utf-8") as f:
        json.dump(base.to_json_dict(), f, indent=2)
        f.write("\n")
    rows = []
    failed = []
    for name in strategies:
        config = replace(base, strategy=name)
        try:
            with open(out / f"metrics_{name}.jsonl", "w", encoding="utf-8") as sink:
                result = train(config, metrics_sink=sink)
            summary = _write_run_outputs(config, result, out, tag=name)
            rows.append((name, summary["steps_to_threshold"], summary["final_test_err"]))
        except SelTrainError as e:
            failed.append(name)
            print(f"error: run: strategy {name} failed: {e}", file=sys.stderr)
    with open(out / "summary.tsv", "w", encoding="utf-8") as f:
        f.write("strategy\tsteps_to_threshold\tfinal_test_err\n")
        for name, steps, err in rows:
            f.write(f"{name}\t{'' if steps is None else steps}\t{'' if err is None else err}\n")
    print(f"sweep complete: {len(rows)} ok, {len(failed)} failed -> {out}/summary.tsv")
    return EXIT_OK if not failed else EXIT_FAILURE


def cmd_score_pool(args: argparse.Namespace) -> int:
    config = parse_config(args)
    strategy = Strategy(config.strategy)
    if strategy.direction is None:
        raise ConfigError("score-pool needs a score-based strategy (mms, hnm or entropy)")
    params = load_params(args.checkpoint)
    train_ds, test_ds = load_splits(config)
    ds = train_ds if args.split == "train" else test_ds
    fr = forward(params, ds.features)
    if config.strategy == "mms":
        pool = mms_scores(fr, params.head)
    elif config.strategy == "hnm":
        pool = hnm_scores(fr, ds.labels)
    else:
        pool = entropy_scores(fr)
    keys = -pool.scores if strategy.direction == LARGEST else pool.scores
    order = np.argsort(keys, kind="stable")
    lines = ["index\tscore\tpredicted\trunner_up"]
    for i in order:
        lines.append(
            f"{int(i)}\t{float(pool.scores[i])!r}\t{int(pool.predicted[i])}\t{int(pool.top2[i, 1])}"
        )
    text = "\n".join(lines) + "\n"
    if args.table_out:
        Path(args.table_out).write_text(text, encoding="utf-8")
        print(f"wrote {len(order)} scored rows to {args.table_out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = parse_config(args)
    if config.source.kind != "gauss":
        raise ConfigError("gen-data only generates the synthetic gaussian mixture")
    out = _require_out(_merged(args).get("out"))
    src = config.source
    train_ds = gen_gaussian_mixture(
        src.n_classes, src.dim, src.per_class, src.separation,
        RandomStream(config.seed, STREAM_DATA_TRAIN), split="train",
    )
    test_ds = gen_gaussian_mixture(
        src.n_classes, src.dim, src.per_class_test, src.separation,
        RandomStream(config.seed, STREAM_DATA_TEST), split="test",
    )
    write_csv(train_ds, out / "train.csv")
    write_csv(test_ds, out / "test.csv")
    print(f"wrote {train_ds.num_samples}+{test_ds.num_samples} rows to {out}/{{train,test}}.csv")
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "score-pool": cmd_score_pool,
    "gen-data": cmd_gen_data,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, FileNotFoundError) as e:
        print(f"error: data: {e}", file=sys.stderr)
        return EXIT_DATA
    except (DimensionError, NumericError) as e:
        print(f"error: shape: {e}", file=sys.stderr)
        return EXIT_SHAPE
    except SelTrainError as e:
        print(f"error: run: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
