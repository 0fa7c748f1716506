"""Command-line surface: train, eval, params, gradcheck, bench, inspect.

Exit codes: 0 success, 1 failed gradient check, 2 configuration problem
(the message names the offending key or value), 3 I/O failure.

The SRKIT_THREADS environment variable caps internal (BLAS) parallelism;
it defaults to 1, which is also what keeps timings and accumulation
behavior reproducible. It must take effect before numpy loads, so this
module imports the numeric stack lazily inside main().
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _apply_thread_cap() -> None:
    threads = os.environ.get("SRKIT_THREADS", "1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, threads)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srkit",
        description="Squeeze-and-Remember block toolkit: deterministic "
        "desk-scale training, parameter accounting, gradient checks, and "
        "memory-usage analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a host on synthetic data")
    p.add_argument("config", help="JSON run config ({} for all defaults)")
    p.add_argument("checkpoint", help="output checkpoint path")
    p.add_argument("history", help="output history CSV path")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("checkpoint")
    p.add_argument("--dataset-seed", type=int, default=None,
                   help="override the data seed stored in the checkpoint")
    p.add_argument("--ablate", action="store_true",
                   help="zero the SR memory bank before evaluating")

    p = sub.add_parser("params", help="parameter counts and overhead")
    p.add_argument("config")
    p.add_argument("--baseline", type=int, default=None,
                   help="baseline parameter count for the overhead percentage "
                   "(default: the host without SR)")

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--size", choices=("micro", "small"), default="micro")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("bench", help="forward-time overhead of the SR block")
    p.add_argument("config")
    p.add_argument("--repeats", type=int, default=9)
    p.add_argument("--batch", type=int, default=32)

    p = sub.add_parser("inspect", help="write analysis CSVs and PGM heat maps")
    p.add_argument("checkpoint")
    p.add_argument("outdir")
    p.add_argument("--dataset-seed", type=int, default=None)
    return parser


def _history_csv_bytes(history) -> bytes:
    lines = ["epoch,lr,train_loss,val_acc"]
    for row in history:
        lines.append(f"{row.epoch},{row.lr!r},{row.train_loss!r},{row.val_acc!r}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def cmd_train(args) -> int:
    from . import train as training
    from .checkpoint import atomic_write_bytes, save_checkpoint
    from .config import load_config
    from .data import synth_generate

    run = load_config(args.config)
    result = training.train(run.host, run.train, run.data)
    _, _, test_set = synth_generate(run.data)
    test_acc = training.evaluate(result.best_params, test_set)
    meta = {
        "config": run.to_dict(),
        "best_epoch": result.best_epoch,
        "val_acc": result.best_val_acc,
        "test_acc": test_acc,
    }
    save_checkpoint(args.checkpoint, meta, dict(result.best_params.items()))
    atomic_write_bytes(args.history, _history_csv_bytes(result.history))
    print(f"epochs_run {len(result.history)}")
    print(f"best_epoch {result.best_epoch}")
    print(f"val_acc {result.best_val_acc:.6f}")
    print(f"test_acc {test_acc:.6f}")
    return EXIT_OK


def _load_trained(path, dataset_seed):
    from dataclasses import replace

    from .checkpoint import load_checkpoint
    from .config import parse_config
    from .host import params_from_tensors

    meta, tensors = load_checkpoint(path)
    run = parse_config(meta["config"])
    if dataset_seed is not None:
        run = type(run)(
            host=run.host, train=run.train, data=replace(run.data, seed=dataset_seed)
        )
    params = params_from_tensors(run.host, tensors)
    return meta, run, params


def cmd_eval(args) -> int:
    from .data import synth_generate
    from .sr_block import sr_ablate
    from .train import evaluate

    meta, run, params = _load_trained(args.checkpoint, args.dataset_seed)
    if args.ablate:
        if params.sr is None:
            print("warning: checkpoint has no SR block; evaluating as-is",
                  file=sys.stderr)
        else:
            params.sr = sr_ablate(params.sr)
    _, _, test_set = synth_generate(run.data)
    acc = evaluate(params, test_set)
    print(f"ablate {'true' if args.ablate else 'false'}")
    print(f"accuracy {acc:.6f}")
    return EXIT_OK


def cmd_params(args) -> int:
    from .config import load_config
    from .host import host_param_count
    from .sr_block import sr_overhead, sr_param_count

    run = load_config(args.config)
    host_cfg = run.host
    sr_cfg = host_cfg.sr if host_cfg.sr is not None else host_cfg.resolved_sr()
    without = host_param_count(host_cfg, with_sr=False)
    print(f"host_params_no_sr {without}")
    if sr_cfg is None:
        print("sr_params 0")
        print("note: no SR block configured")
        return EXIT_OK
    count = sr_param_count(sr_cfg)
    print(f"sr_params {count}")
    fits_host = (
        host_cfg.sr_insert is not None
        and (sr_cfg.c, sr_cfg.h, sr_cfg.w)
        == host_cfg.stage_output_shape(host_cfg.sr_insert)
    )
    if fits_host:
        print(f"host_params_with_sr {without + count}")
    baseline = args.baseline if args.baseline is not None else without
    pct = sr_overhead(sr_cfg, baseline)
    print(f"baseline {baseline}")
    print(f"overhead_pct {pct:.2f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, run_suite

    results = run_suite(args.size, args.seed)
    ok = True
    for r in results:
        verdict = "pass" if r.passed else "FAIL"
        print(f"{r.name:16s} max_rel_err {r.max_rel_err:.3e}  {verdict}")
        ok = ok and r.passed
    print(f"gradcheck {'pass' if ok else 'FAIL'} (tolerance {TOLERANCE:g})")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_bench(args) -> int:
    from .bench import run_bench
    from .config import load_config

    run = load_config(args.config)
    result = run_bench(run.host, args.repeats, args.batch)
    print(f"t_plain_ms {result.t_plain_ms:.3f}")
    print(f"t_zero_memory_ms {result.t_zero_memory_ms:.3f}")
    print(f"t_sr_ms {result.t_sr_ms:.3f}")
    print(f"overhead_pct {result.overhead_pct:.2f}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    import os as _os

    from .analysis import (
        ablation_report,
        activation_stats,
        collect_activations,
        feature_delta,
        memory_channel_means,
        write_ablation_csv,
        write_activations_csv,
        write_delta_csv,
        write_pgm,
    )
    from .data import synth_generate

    meta, run, params = _load_trained(args.checkpoint, args.dataset_seed)
    from .errors import ConfigError

    if params.sr is None:
        raise ConfigError("checkpoint has no SR block; nothing to inspect")
    _os.makedirs(args.outdir, exist_ok=True)
    _, val_set, test_set = synth_generate(run.data)

    records = collect_activations(params, val_set)
    stats = activation_stats(records, "per_class")
    write_activations_csv(_os.path.join(args.outdir, "activations.csv"), stats)

    deltas = feature_delta(params, val_set)
    write_delta_csv(_os.path.join(args.outdir, "delta.csv"), deltas)

    acc_full, acc_ablated, delta = ablation_report(params, test_set)
    write_ablation_csv(
        _os.path.join(args.outdir, "ablation.csv"), acc_full, acc_ablated, delta
    )

    maps = memory_channel_means(params.sr)
    for i in range(maps.shape[0]):
        write_pgm(_os.path.join(args.outdir, f"memory_block_{i}.pgm"), maps[i])
    print(f"wrote analysis outputs to {args.outdir}")
    print(f"acc_full {acc_full:.6f}")
    print(f"acc_ablated {acc_ablated:.6f}")
    return EXIT_OK


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    from .errors import CheckpointError, ConfigError, DimensionError, UsageError

    handler = {
        "train": cmd_train,
        "eval": cmd_eval,
        "params": cmd_params,
        "gradcheck": cmd_gradcheck,
        "bench": cmd_bench,
        "inspect": cmd_inspect,
    }[args.command]
    try:
        return handler(args)
    except (ConfigError, CheckpointError, DimensionError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
