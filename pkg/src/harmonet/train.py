"""Training loop with deterministic metrics output.

A run is fully determined by (model seed, TrainConfig, dataset): batch order
comes from the pinned splitmix64 stream and metrics are written with fixed
formatting, so repeating a run yields a byte-identical CSV. Wall time is
measured but written as 0.000 unless ``record_timing`` is set, because real
timing would break that reproducibility contract.
"""

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import SplitMix64
from .nn import DTYPES
from .optim import SGD

METRICS_HEADER = "run_id,seed,epoch,train_loss,train_acc,test_err,wall_time_s"


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite."""


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    lr: float = 0.1
    lr_schedule: dict = field(default_factory=dict)  # 1-based epoch -> factor
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 0.0
    seed: int = 0
    dtype: str = "f32"
    record_timing: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}")


@dataclass
class MetricsRecord:
    run_id: str
    seed: int
    epoch: int
    train_loss: float
    train_acc: float
    test_err: float
    wall_time_s: float

    def csv_row(self):
        return (f"{self.run_id},{self.seed},{self.epoch},{self.train_loss:.6f},"
                f"{self.train_acc:.4f},{self.test_err:.4f},{self.wall_time_s:.3f}")


def parse_config_file(path):
    """Line-based key=value file; '#' starts a comment."""
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def parse_schedule(text):
    """'11:0.1,21:0.1' -> {11: 0.1, 21: 0.1}."""
    schedule = {}
    if not text:
        return schedule
    for item in text.split(","):
        epoch, _, factor = item.partition(":")
        schedule[int(epoch)] = float(factor)
    return schedule


def format_schedule(schedule):
    return ",".join(f"{e}:{f:g}" for e, f in sorted(schedule.items()))


_BOOLS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def config_from_mapping(values):
    """Build a TrainConfig from string key=value pairs; unknown keys are
    returned separately for the caller (dataset/variant/... selections)."""
    cfg_kwargs = {}
    extras = {}
    fields = TrainConfig.__dataclass_fields__
    for key, value in values.items():
        if key not in fields:
            extras[key] = value
            continue
        kind = fields[key].type
        if key == "lr_schedule":
            cfg_kwargs[key] = parse_schedule(value)
        elif kind == "int":
            cfg_kwargs[key] = int(value)
        elif kind == "float":
            cfg_kwargs[key] = float(value)
        elif kind == "bool":
            cfg_kwargs[key] = _BOOLS[str(value).lower()]
        else:
            cfg_kwargs[key] = value
    return TrainConfig(**cfg_kwargs), extras


def config_to_mapping(cfg):
    values = asdict(cfg)
    values["lr_schedule"] = format_schedule(cfg.lr_schedule)
    return {k: str(v) for k, v in values.items()}


def iterate_batches(count, batch_size, stream):
    """Deterministically shuffled index batches from a splitmix64 stream."""
    order = list(range(count))
    stream.shuffle(order)
    order = np.array(order)
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]


def evaluate(model, ds, batch_size=500):
    """Classification error in percent over the dataset (eval mode)."""
    wrong = 0
    for start in range(0, len(ds), batch_size):
        xb = ds.images[start:start + batch_size]
        yb = ds.labels[start:start + batch_size]
        wrong += int((model.predict(xb) != yb).sum())
    return 100.0 * wrong / len(ds)


def train(model, train_ds, test_ds, cfg, run_id="run", csv_path=None,
          checkpoint_path=None, log=None):
    """Run the full schedule; returns the per-epoch metrics records.

    lr=0 performs zero-length steps (parameters untouched), which is useful
    for baseline measurements. A non-finite loss aborts with diagnostics.
    """
    records = []
    dtype = DTYPES[cfg.dtype]
    if train_ds.images.dtype != dtype:
        train_ds = type(train_ds)(train_ds.images.astype(dtype), train_ds.labels,
                                  train_ds.class_count, train_ds.name)
    stream = SplitMix64(cfg.seed)
    optimizer = None
    if cfg.lr > 0:
        optimizer = SGD(model.params(), lr=cfg.lr, momentum=cfg.momentum,
                        nesterov=cfg.nesterov, weight_decay=cfg.weight_decay)
    start_time = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        if optimizer is not None and epoch in cfg.lr_schedule:
            optimizer.scale_lr(cfg.lr_schedule[epoch])
        loss_sum = 0.0
        correct = 0
        for batch_idx in iterate_batches(len(train_ds), cfg.batch_size, stream):
            xb = train_ds.images[batch_idx]
            yb = train_ds.labels[batch_idx]
            model.zero_grads()
            loss, logits = model.loss_and_grads(xb, yb, train=True)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"{run_id}: non-finite loss {loss} at epoch {epoch}")
            if optimizer is not None:
                optimizer.step()
            loss_sum += loss * len(batch_idx)
            correct += int((np.argmax(logits, axis=1) == yb).sum())
        test_err = evaluate(model, test_ds)
        elapsed = time.perf_counter() - start_time
        record = MetricsRecord(
            run_id=run_id, seed=cfg.seed, epoch=epoch,
            train_loss=loss_sum / len(train_ds),
            train_acc=100.0 * correct / len(train_ds),
            test_err=test_err,
            wall_time_s=elapsed if cfg.record_timing else 0.0,
        )
        records.append(record)
        if log:
            log(f"{run_id} epoch {epoch}/{cfg.epochs}: "
                f"loss {record.train_loss:.4f} acc {record.train_acc:.2f}% "
                f"test_err {record.test_err:.2f}% ({elapsed:.1f}s)")
    if csv_path:
        write_metrics_csv(csv_path, records)
    if checkpoint_path:
        from .checkpoint import save_checkpoint
        save_checkpoint(model, checkpoint_path)
    return records


def write_metrics_csv(path, records):
    with open(path, "w", newline="") as f:
        f.write(METRICS_HEADER + "\n")
        for record in records:
            f.write(record.csv_row() + "\n")
