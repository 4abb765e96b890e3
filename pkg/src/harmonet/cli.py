"""Command-line surface.

Commands: filters, verify, train, eval, table2, stridesweep, bench,
compute-stats. Exit codes: 0 success, 1 verification failure, 2 usage error,
3 I/O or data-format error. ``HARM_DATA_DIR`` sets the default dataset root
(expected layout: <root>/mnist/*-ubyte, <root>/cifar-10-batches-bin/*.bin).
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import backend, data
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dct import FilterBank, export_filters
from .harmonic import HarmonicBlock, cost_report
from .models import build_mnist_model, build_shallow_model, SWEEP_STRIDES
from .sweeps import run_stride_sweep, run_table2, TABLE2_SIZES
from .train import (TrainConfig, config_from_mapping, evaluate,
                    parse_config_file, train)
from .verify import full_verification

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


def _log(message):
    print(message, flush=True)


def _print_rows(rows, as_json):
    if as_json:
        print(json.dumps(rows, indent=2, default=float))
        return
    width = max(len(r["name"]) for r in rows)
    for r in rows:
        status = "PASS" if r["passed"] else "FAIL"
        tol = f" (tol {r['tol']:.0e})" if r.get("tol") is not None else " (reported)"
        print(f"  {r['name']:<{width}}  max_err={r['max_err']:.3e}{tol}  {status}")


def _load_dataset(name, data_dir, split, normalize=True):
    if name == "mnist":
        return data.load_mnist(data_dir, split, normalize=normalize)
    if name == "cifar10":
        return data.load_cifar10(data_dir, split, normalize=normalize)
    raise UsageError(f"unknown dataset {name!r} (mnist|cifar10)")


def cmd_filters(args):
    if args.size < 1:
        raise UsageError("--size must be >= 1")
    bank = FilterBank(args.size)
    if args.lam is not None and args.truncate is not None:
        raise UsageError("give at most one of --lambda / --truncate")
    if args.lam is not None:
        pairs = bank.lambda_subset(args.lam)
    elif args.truncate is not None:
        pairs = bank.truncation_prefix(args.truncate)
    else:
        pairs = bank.order
    written = export_filters(bank, pairs, args.out)
    if args.json:
        print(json.dumps({"count": len(pairs), "files": written}))
    else:
        _log(f"wrote {len(pairs)} filters ({len(written)} files) to {args.out}")
    return EXIT_OK


def cmd_verify(args):
    rows = full_verification(max_n=args.max_n, tol=args.tol, seed=args.seed)
    _print_rows(rows, args.json)
    failed = [r for r in rows if not r["passed"]]
    if failed and not args.json:
        _log(f"{len(failed)} of {len(rows)} checks failed")
    return EXIT_VERIFY if failed else EXIT_OK


def _config_from_args(args):
    values = parse_config_file(args.config) if args.config else {}
    for item in args.override or []:
        if "=" not in item:
            raise UsageError(f"--override expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        values[key.strip()] = value.strip()
    try:
        cfg, extras = config_from_mapping(values)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad config: {exc}")
    return cfg, extras


def _build_from_extras(extras, seed):
    dataset = extras.get("dataset", "mnist")
    variant = extras.get("variant", "harmonic")
    model_kind = extras.get("model", "mnist")
    if model_kind == "mnist":
        model = build_mnist_model(variant, seed=seed)
    elif model_kind == "shallow":
        model = build_shallow_model(
            int(extras.get("k", 4)), int(extras.get("stride", 1)),
            mode=extras.get("mode", "replicate"),
            truncate=int(extras["truncate"]) if "truncate" in extras else None,
            in_channels=3 if dataset == "cifar10" else 1,
            input_hw=(32, 32) if dataset == "cifar10" else (28, 28),
            seed=seed)
    else:
        raise UsageError(f"unknown model {model_kind!r} (mnist|shallow)")
    return dataset, model


def cmd_train(args):
    cfg, extras = _config_from_args(args)
    dataset, model = _build_from_extras(extras, cfg.seed)
    data_dir = args.data or extras.get("data_dir") or data.default_data_dir()
    train_ds = _load_dataset(dataset, data_dir, "train")
    test_ds = _load_dataset(dataset, data_dir, "test")
    size = int(extras.get("size", 0))
    if size:
        train_ds = data.balanced_subset(train_ds, size, cfg.seed)
    run_id = extras.get("run_id", f"train-{dataset}-s{cfg.seed}")
    csv_path = args.metrics or extras.get("metrics")
    ckpt_path = args.checkpoint or extras.get("checkpoint")
    records = train(model, train_ds, test_ds, cfg, run_id=run_id,
                    csv_path=csv_path, checkpoint_path=ckpt_path,
                    log=None if args.quiet else _log)
    final = records[-1]
    if args.json:
        print(json.dumps({"run_id": run_id, "final_test_err": final.test_err,
                          "epochs": cfg.epochs}))
    else:
        _log(f"final test error: {final.test_err:.2f}%")
    return EXIT_OK


def cmd_eval(args):
    cfg_extras = dict(kv.partition("=")[::2] for kv in (args.model_opt or []))
    dataset = args.dataset
    _, model = _build_from_extras({"dataset": dataset, **cfg_extras}, seed=0)
    try:
        load_checkpoint(model, args.checkpoint)
    except CheckpointError as exc:
        _log(f"error: {exc}")
        return EXIT_IO
    data_dir = args.data or data.default_data_dir()
    test_ds = _load_dataset(dataset, data_dir, "test")
    err = evaluate(model, test_ds)
    if args.json:
        print(json.dumps({"test_err": err}))
    else:
        _log(f"test error: {err:.4f}%")
    return EXIT_OK


def cmd_table2(args):
    data_dir = args.data or data.default_data_dir()
    train_ds = _load_dataset("mnist", data_dir, "train")
    test_ds = _load_dataset("mnist", data_dir, "test")
    sizes = [int(s) for s in args.sizes.split(",")]
    variants = args.variants.split(",")
    summary = run_table2(train_ds, test_ds, sizes, variants, args.seeds,
                         args.out, epochs=args.epochs,
                         log=None if args.quiet else _log)
    if args.json:
        print(json.dumps(summary, default=float))
    else:
        for row in summary:
            _log(f"size={row['size']} variant={row['variant']}: "
                 f"median test err {row['median_test_err']:.2f}%")
    return EXIT_OK


def cmd_stridesweep(args):
    data_dir = args.data or data.default_data_dir()
    train_ds = _load_dataset("cifar10", data_dir, "train")
    test_ds = _load_dataset("cifar10", data_dir, "test")
    strides = [int(s) for s in args.strides.split(",")] if args.strides else None
    truncations = ([int(t) for t in args.truncations.split(",")]
                   if args.truncations else None)
    summary = run_stride_sweep(train_ds, test_ds, args.k, args.mode, args.seeds,
                               args.out, strides=strides, truncations=truncations,
                               epochs=args.epochs, train_size=args.train_size,
                               log=None if args.quiet else _log)
    if args.json:
        print(json.dumps(summary, default=float))
    else:
        for row in summary:
            _log(f"stride={row['stride']} T={row['truncation']}: "
                 f"mean acc {row['mean_acc']:.2f}%")
    return EXIT_OK


def _bench_one(algorithm, n, m, k, hw, batch, repeat, seed=0):
    rng = np.random.default_rng(seed)
    block = HarmonicBlock(n, m, k, padding=(k - 1) // 2, algorithm=algorithm,
                          rng=rng, dtype=np.float32)
    x = rng.standard_normal((batch, n, hw[0], hw[1])).astype(np.float32)
    block.forward(x, train=False)  # warm-up (fills the folded cache for alg 2)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        block.forward(x, train=False)
        best = min(best, time.perf_counter() - t0)
    report = cost_report(block, x.shape, algorithm)
    return {
        "algorithm": algorithm,
        "madds": report.madds,
        "peak_intermediate_elems": report.peak_intermediate_elems,
        "overhead_ratio": str(report.ratio_vs_standard_conv),
        "seconds_per_forward": best,
    }


def cmd_bench(args):
    hw = tuple(int(v) for v in args.hw.split(","))
    if len(hw) != 2:
        raise UsageError("--hw expects A,B")
    algorithms = [1, 2] if args.alg == "both" else [int(args.alg)]
    rows = [_bench_one(a, args.n, args.m, args.k, hw, args.batch, args.repeat)
            for a in algorithms]
    if args.json:
        print(json.dumps({"backend": backend.BACKEND, "results": rows}))
    else:
        _log(f"kernel backend: {backend.BACKEND}")
        for r in rows:
            _log(f"algorithm {r['algorithm']}: {r['madds']} madds, "
                 f"peak {r['peak_intermediate_elems']} elems, "
                 f"overhead {r['overhead_ratio']}, "
                 f"{r['seconds_per_forward'] * 1e3:.2f} ms/forward")
    return EXIT_OK


def cmd_compute_stats(args):
    data_dir = args.data or data.default_data_dir()
    ds = _load_dataset(args.dataset, data_dir, "train", normalize=False)
    mean, std = data.compute_stats(ds)
    if args.json:
        print(json.dumps({"mean": mean.tolist(), "std": std.tolist()}))
    else:
        _log(f"{args.dataset} train mean: {np.round(mean, 4).tolist()}")
        _log(f"{args.dataset} train std:  {np.round(std, 4).tolist()}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="harmonet",
        description="DCT harmonic blocks: filter export, verification, training")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filters", help="export the DCT filter bank (PGM + CSV)")
    p.add_argument("--size", type=int, required=True, help="kernel size K")
    p.add_argument("--lambda", dest="lam", type=int, help="keep filters with u+v < lambda")
    p.add_argument("--truncate", type=int, help="keep the first T zigzag filters")
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_filters)

    p = sub.add_parser("verify", help="run the numerical verification suites")
    p.add_argument("--max-n", type=int, default=32, help="largest window for transform identities")
    p.add_argument("--tol", type=float, default=None,
                   help="override identity-suite tolerances (f32 equivalence "
                        "never drops below 1e-4; gradient checks keep 1e-6)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train", help="train a model from a key=value config file")
    p.add_argument("--config", help="config file (key=value lines)")
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="override a config value (repeatable)")
    p.add_argument("--data", help="dataset root (default $HARM_DATA_DIR or ./data)")
    p.add_argument("--metrics", help="write the per-epoch metrics CSV here")
    p.add_argument("--checkpoint", help="write the final checkpoint here")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--dataset", default="mnist", choices=["mnist", "cifar10"])
    p.add_argument("--model-opt", action="append", metavar="KEY=VALUE",
                   help="model construction options (variant=..., model=...)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("table2", help="limited-data MNIST comparison")
    p.add_argument("--sizes", default=",".join(str(s) for s in TABLE2_SIZES))
    p.add_argument("--variants", default="conv,separable,harmonic")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--data")
    p.add_argument("--out", default="results/table2")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_table2)

    p = sub.add_parser("stridesweep", help="stride/truncation sweep (CIFAR-10)")
    p.add_argument("--k", type=int, default=4, choices=sorted(SWEEP_STRIDES))
    p.add_argument("--mode", default="replicate", choices=["replicate", "balanced"])
    p.add_argument("--strides")
    p.add_argument("--truncations")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--train-size", type=int, default=None,
                   help="balanced training subset size (default: full set)")
    p.add_argument("--data")
    p.add_argument("--out", default="results/stridesweep")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stridesweep)

    p = sub.add_parser("bench", help="cost model + timing for both algorithms")
    p.add_argument("--alg", default="both", choices=["1", "2", "both"])
    p.add_argument("--n", type=int, default=64, help="input channels")
    p.add_argument("--m", type=int, default=64, help="output channels")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--hw", default="32,32", help="input spatial size A,B")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compute-stats",
                       help="recompute normalisation constants from raw data")
    p.add_argument("--dataset", required=True, choices=["mnist", "cifar10"])
    p.add_argument("--data")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_compute_stats)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except data.DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
