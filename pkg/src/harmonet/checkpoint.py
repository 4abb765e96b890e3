"""Checkpoint serialisation.

Layout: the ASCII magic line ``HARMCKPT1``, then for every state tensor a
name line, a header line ``<dtype> <rank> <dims...>`` (decimal, space
separated), and the raw little-endian IEEE-754 payload. Batch-norm running
statistics ride along as entries whose names carry the reserved suffixes
``running_mean``/``running_var``.
"""

import numpy as np

MAGIC = b"HARMCKPT1\n"
_TAGS = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


class CheckpointError(RuntimeError):
    pass


def _tag_for(arr):
    for tag, dt in _TAGS.items():
        if np.dtype(arr.dtype) == dt:
            return tag
    raise CheckpointError(f"unsupported dtype {arr.dtype}")


def save_checkpoint(model, path):
    with open(path, "wb") as f:
        f.write(MAGIC)
        for name, arr in model.state_items():
            dims = " ".join(str(d) for d in arr.shape)
            f.write(f"{name}\n".encode("ascii"))
            f.write(f"{_tag_for(arr)} {arr.ndim} {dims}".rstrip().encode("ascii") + b"\n")
            f.write(np.ascontiguousarray(arr, dtype=_TAGS[_tag_for(arr)]).tobytes())


def _read_line(f):
    line = bytearray()
    while True:
        ch = f.read(1)
        if not ch:
            raise CheckpointError("truncated checkpoint (unexpected end of file)")
        if ch == b"\n":
            return line.decode("ascii")
        line.extend(ch)


def read_checkpoint(path):
    """Return the ordered list of (name, array) entries."""
    entries = []
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a HARMCKPT1 file")
        while True:
            first = f.read(1)
            if not first:
                break
            name = first.decode("ascii") + _read_line(f)
            header = _read_line(f).split()
            if len(header) < 2:
                raise CheckpointError(f"{path}: malformed header for {name!r}")
            tag, rank = header[0], int(header[1])
            dims = tuple(int(d) for d in header[2:])
            if tag not in _TAGS or len(dims) != rank:
                raise CheckpointError(f"{path}: malformed header for {name!r}")
            dtype = _TAGS[tag]
            count = int(np.prod(dims)) if dims else 1
            payload = f.read(count * dtype.itemsize)
            if len(payload) != count * dtype.itemsize:
                raise CheckpointError(f"{path}: truncated payload for {name!r}")
            entries.append((name, np.frombuffer(payload, dtype=dtype).reshape(dims).copy()))
    return entries


def load_checkpoint(model, path):
    """Restore state into a structurally matching model (strict name+shape)."""
    entries = read_checkpoint(path)
    state = model.state_items()
    if len(entries) != len(state):
        raise CheckpointError(
            f"{path}: {len(entries)} entries, model expects {len(state)}")
    for (got_name, got_arr), (want_name, target) in zip(entries, state):
        if got_name != want_name:
            raise CheckpointError(f"{path}: entry {got_name!r}, expected {want_name!r}")
        if got_arr.shape != target.shape:
            raise CheckpointError(
                f"{path}: {got_name} shape {got_arr.shape} != {target.shape}")
        target[...] = got_arr.astype(target.dtype)
    # weight caches (e.g. folded kernels) must notice the swap
    for p in model.params():
        p.version += 1
        p.momentum_buffer[...] = 0
    return model
