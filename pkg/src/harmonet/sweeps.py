"""Experiment drivers: the limited-data table and the stride/truncation sweep.

Both write one raw metrics CSV per run plus a summary CSV; summaries are
plain order statistics over the recorded final test errors, so they can be
recomputed from the raw files.
"""

import math
import os
import statistics

from .data import balanced_subset
from .models import (SWEEP_STRIDES, build_mnist_model, build_shallow_model)
from .train import TrainConfig, train

TABLE2_SIZES = (300, 1000, 2000, 5000, 10000, 20000, 40000, 60000)


def weight_decay_for_size(n):
    """Log-linear interpolation from 0.0005 at n=300 to 0.05 at n=60000."""
    return 0.0005 * 100.0 ** (math.log(n / 300.0) / math.log(200.0))


def mnist_train_config(size, seed, epochs=30):
    """The limited-data protocol: SGD, lr 0.1 cut by 10 after every 10 epochs."""
    schedule = {e: 0.1 for e in range(11, epochs + 1, 10)}
    return TrainConfig(epochs=epochs, batch_size=128, lr=0.1, lr_schedule=schedule,
                       momentum=0.9, nesterov=True,
                       weight_decay=weight_decay_for_size(size), seed=seed)


def sweep_train_config(seed, epochs=30):
    """The shallow-network protocol: lr 0.01, decayed by 10 halfway."""
    return TrainConfig(epochs=epochs, batch_size=128, lr=0.01,
                       lr_schedule={epochs // 2 + 1: 0.1}, momentum=0.9,
                       nesterov=True, weight_decay=0.0005, seed=seed)


def run_table2(train_ds, test_ds, sizes, variants, seeds, out_dir, epochs=30,
               algorithm=2, log=None):
    """Train every (size, variant, seed) cell and summarise median test error.

    Each seed draws its own balanced subset; the same subset and init seed are
    reused across variants so comparisons are paired.
    """
    os.makedirs(os.path.join(out_dir, "runs"), exist_ok=True)
    summary = []
    for size in sizes:
        for variant in variants:
            errors = []
            for seed in range(seeds):
                subset = balanced_subset(train_ds, size, seed)
                model = build_mnist_model(variant, algorithm=algorithm, seed=seed)
                cfg = mnist_train_config(size, seed, epochs=epochs)
                run_id = f"table2-{variant}-n{size}-seed{seed}"
                csv_path = os.path.join(out_dir, "runs", run_id + ".csv")
                records = train(model, subset, test_ds, cfg, run_id=run_id,
                                csv_path=csv_path, log=log)
                errors.append(records[-1].test_err)
            summary.append({
                "size": size, "variant": variant, "seeds": seeds,
                "median_test_err": statistics.median(errors),
                "errors": errors,
            })
            if log:
                log(f"table2 size={size} variant={variant}: "
                    f"median {summary[-1]['median_test_err']:.2f}% of {errors}")
    path = os.path.join(out_dir, "table2_summary.csv")
    with open(path, "w") as f:
        f.write("size,variant,seeds,median_test_err,errors\n")
        for row in summary:
            errs = ";".join(f"{e:.4f}" for e in row["errors"])
            f.write(f"{row['size']},{row['variant']},{row['seeds']},"
                    f"{row['median_test_err']:.4f},{errs}\n")
    return summary


def default_truncations(k):
    if k == 4:
        return (1, 2, 3, 4, 6, 9, 12, 16)
    return (1, 4, 9, 16, 25, 36, 49, 64)


def run_stride_sweep(train_ds, test_ds, k, mode, seeds, out_dir, strides=None,
                     truncations=None, epochs=30, train_size=None, log=None):
    """Train one shallow model per (stride, truncation, seed) and report mean
    accuracy per cell. ``train_size`` optionally trains on a balanced subset
    (desk-scale runs); None uses the full training set as in the original
    protocol.
    """
    strides = tuple(strides) if strides else SWEEP_STRIDES[k]
    truncations = tuple(truncations) if truncations else default_truncations(k)
    os.makedirs(os.path.join(out_dir, "runs"), exist_ok=True)
    summary = []
    for stride in strides:
        for trunc in truncations:
            accs = []
            for seed in range(seeds):
                if train_size:
                    subset = balanced_subset(train_ds, train_size, seed)
                else:
                    subset = train_ds
                model = build_shallow_model(k, stride, mode=mode, truncate=trunc,
                                            in_channels=train_ds.images.shape[1],
                                            input_hw=train_ds.images.shape[2:],
                                            seed=seed)
                cfg = sweep_train_config(seed, epochs=epochs)
                run_id = f"sweep-k{k}-{mode}-s{stride}-t{trunc}-seed{seed}"
                csv_path = os.path.join(out_dir, "runs", run_id + ".csv")
                records = train(model, subset, test_ds, cfg, run_id=run_id,
                                csv_path=csv_path, log=log)
                accs.append(100.0 - records[-1].test_err)
            summary.append({
                "k": k, "mode": mode, "stride": stride, "truncation": trunc,
                "seeds": seeds, "mean_acc": sum(accs) / len(accs), "accs": accs,
            })
            if log:
                log(f"sweep stride={stride} T={trunc}: "
                    f"mean acc {summary[-1]['mean_acc']:.2f}% of {accs}")
    path = os.path.join(out_dir, f"stride_sweep_k{k}_{mode}.csv")
    with open(path, "w") as f:
        f.write("k,mode,stride,truncation,seeds,mean_acc,accs\n")
        for row in summary:
            accs = ";".join(f"{a:.4f}" for a in row["accs"])
            f.write(f"{row['k']},{row['mode']},{row['stride']},{row['truncation']},"
                    f"{row['seeds']},{row['mean_acc']:.4f},{accs}\n")
    return summary
